use hglue_core::{seed, splicing, grid::*};
fn main() {
    let cfg = splicing::GluingConfig { eps_pow: 4, c_pow: 2, m: 8, nb: 17, np: 1, fd_order: 4, allow_outside_guarantee: true };
    let grid = seed::seed_grid(cfg.seed_octaves(), cfg.m, cfg.nb, cfg.np, cfg.fd_order).unwrap();
    let seedd = seed::SeedData::hyperbolic(&grid).unwrap();
    let geo = splicing::build_geometry(&seedd, &cfg).unwrap();
    let mom = splicing::build_momentum(&seedd, &geo).unwrap();
    let ext = &geo.ext;
    let (nt, nb, np) = ext.shape();
    let mut best = (0.0f64, 0usize, 0usize);
    for i in 0..nt { for j in 0..nb { for k in 0..np {
        let idx = ext.idx(i, j, k);
        for c in 0..6 {
            let v = mom.mu_bar.comps[c][idx].abs();
            if v > best.0 { best = (v, i, j); }
        }
    }}}
    let (v, i, j) = best;
    let t = ext.axes[0].nodes[i];
    let b = ext.axes[1].nodes[j];
    println!("sup {v:.3e} at t={t:.3} (s_sym={:.3}) b={b:.3} j={j}", geo.profiles.s_sym(t));
    let idx = ext.idx(i, j, 0);
    println!("h_lambda: {:?}", (0..6).map(|c| mom.h_lambda.comps[c][idx]).collect::<Vec<_>>());
    println!("nu_neck raw at node: {:?}", (0..6).map(|c| mom.nu_neck.comps[c][idx]).collect::<Vec<_>>());
    println!("nu_ext: {:?}", (0..6).map(|c| mom.nu_ext.comps[c][idx]).collect::<Vec<_>>());
    // scan profile of |mu_bar| vs s_sym at fixed j mid
    let jmid = nb/2;
    for i in (0..nt).step_by(2) {
        let t = ext.axes[0].nodes[i];
        let mut m = 0.0f64;
        for c in 0..6 { m = m.max(mom.mu_bar.comps[c][ext.idx(i, jmid, 0)].abs()); }
        println!("t={t:+.3} s_sym={:+.3} |mu_bar|={m:.2e}", geo.profiles.s_sym(t));
    }
}
