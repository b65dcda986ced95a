// quick probe of the hamiltonian residual profile for the hyperbolic seed
use hglue_core::{seed, ops, tensor, grid::*};
fn main() {
    let grid = seed::seed_grid(3, 12, 25, 1, 4).unwrap();
    let sd = seed::SeedData::hyperbolic(&grid).unwrap();
    let r = ops::scalar_curvature_weighted(&sd.gbar, &|t, b, _| seed::rho_seed_jet(t, b));
    let (nt, nb, np) = grid.shape();
    let mut bins: Vec<(f64, f64)> = vec![];
    for i in 0..nt { for j in 1..nb { for k in 0..np {
        let idx = grid.idx(i, j, k);
        let (t, b, _) = grid.coords(i, j, k);
        let rho = seed::rho_seed_value(t, b);
        let gi = sd.gbar.ginv_at(idx);
        let s2 = tensor::norm2_sym(&gi, &sd.sigma_bar.at(idx));
        let resid = (r.data[idx] + 6.0 - s2).abs();
        bins.push((rho, resid));
    }}}
    for f in [1e-3, 0.01, 0.05, 0.1, 0.2] {
        let m = bins.iter().filter(|(r,_)| *r >= f).map(|(r, v)| v / (r*r)).fold(0.0f64, f64::max);
        let mu = bins.iter().filter(|(r,_)| *r >= f).map(|(_, v)| *v).fold(0.0f64, f64::max);
        println!("floor {f:>6}: weighted sup {m:.3e}  raw sup {mu:.3e}");
    }
}
