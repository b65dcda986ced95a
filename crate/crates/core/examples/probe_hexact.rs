use hglue_core::{seed, shear, models, ops::MetricField, grid::*, tensor};
fn main() {
    // compare exact_reference_h against FD evaluation on rho_seed^2 breve-g
    let grid = seed::seed_grid(3, 16, 33, 1, 4).unwrap();
    let gb = models::sym_from_fn(&grid, |t, b, _| {
        let rho = seed::rho_seed_value(t, b);
        let hc = models::hyperbolic_components(b);
        std::array::from_fn(|c| rho * rho * hc[c])
    });
    let gref = MetricField::new(gb, DerivDomain::Full).unwrap();
    let (h_fd, _) = shear::h_tensor_field(&gref,
        &shear::OmegaArg::Analytic(&|t, b, _| seed::rho_seed_jet(t, b)),
        shear::DegeneratePolicy::Error).unwrap();
    let (nt, nb, _) = grid.shape();
    let mut worst = 0.0f64; let mut worst_t = 0.0;
    let mut exact_out_sup = 0.0f64;
    for i in 0..nt { for j in 0..nb {
        let idx = grid.idx(i, j, 0);
        let (t, b, _) = grid.coords(i, j, 0);
        let rj = seed::rho_seed_jet(t, b);
        let scale = 2.0 * t.exp() * hglue_core::halfspace::g_jet(t.exp()).unwrap().v;
        let he = shear::exact_reference_h(&rj, scale, b);
        for c in 0..6 {
            let d = (h_fd.comps[c][idx] - he[c]).abs();
            if d > worst { worst = d; worst_t = t; }
            if t.abs() > 0.75 { exact_out_sup = exact_out_sup.max(he[c].abs()); }
        }
    }}
    println!("max |H_fd - H_exact| = {worst:.3e} at t = {worst_t:.2}");
    println!("sup |H_exact| outside transition shell = {exact_out_sup:.3e}");
    // trace/transversality of the exact H at a shell point
    let (t, b) = (0.3, 0.8);
    let rj = seed::rho_seed_jet(t, b);
    let scale = 2.0 * t.exp() * hglue_core::halfspace::g_jet(t.exp()).unwrap().v;
    let he = shear::exact_reference_h(&rj, scale, b);
    let gb2: tensor::Sym = {
        let rho = seed::rho_seed_value(t, b);
        let hc = models::hyperbolic_components(b);
        std::array::from_fn(|c| rho * rho * hc[c])
    };
    let gi = tensor::sym_inv(&gb2).unwrap();
    println!("shell H_exact trace = {:.3e}, comps0 = {:.4e}", tensor::trace(&gi, &he), he[0]);
}
