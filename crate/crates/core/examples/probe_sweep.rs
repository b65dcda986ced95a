use hglue_core::pipeline::*;
use hglue_core::seed::SeedFamily;
use hglue_core::splicing::GluingConfig;
use hglue_core::elliptic::SolverConfig;
fn main() {
    let t0 = std::time::Instant::now();
    let cfg = PipelineConfig {
        family: SeedFamily::Perturbed { amplitude: 0.02 },
        gluing: GluingConfig { eps_pow: 4, c_pow: 3, m: 8, nb: 17, np: 1, fd_order: 4, allow_outside_guarantee: true },
        solver: SolverConfig::default(),
        rng_seed: 7,
        invertibility_deltas: vec![],
        invertibility_trials: 0,
    };
    // seed must cover the largest eps_pow
    let mut scfg = cfg.clone();
    scfg.gluing.eps_pow = 7;
    let (sd, checks) = make_seed(&scfg).unwrap();
    println!("seed built in {:?}: {checks:?}", t0.elapsed());
    let (table, _bundles) = convergence_study(&sd, &cfg, &[4, 5, 6, 7]).unwrap();
    for row in &table.rows {
        println!("eps = {:.5} guarantee={} :", row.eps, row.within_guarantee);
        for k in SWEEP_QUANTITIES {
            println!("   {k:24} = {:.4e}", row.values.get(k).copied().unwrap_or(f64::NAN));
        }
        println!("   {:24} = {:.4e}", "picard_ratio", row.values.get("picard_contraction_ratio").copied().unwrap_or(f64::NAN));
        println!("   {:24} = {:.4e}", "hamiltonian", row.values.get("hamiltonian_residual").copied().unwrap_or(f64::NAN));
        println!("   {:24} = {:.4e}", "shear", row.values.get("shear_residual").copied().unwrap_or(f64::NAN));
    }
    println!("--- slopes ---");
    for (k, (s, ci)) in &table.slopes {
        println!("  {k:28} slope {s:+.3} +- {ci:.3}");
    }
    println!("total {:?}", t0.elapsed());
}
