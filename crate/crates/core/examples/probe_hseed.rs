use hglue_core::{seed, grid::*};
fn main() {
    let grid = seed::seed_grid(7, 8, 17, 1, 4).unwrap();
    let sd = seed::SeedData::hyperbolic(&grid).unwrap();
    let (nt, nb, _) = grid.shape();
    for i in (0..nt).step_by(2) {
        let t = grid.axes[0].nodes[i];
        let mut m0 = 0.0f64; // boundary row
        let mut mi = 0.0f64; // interior
        for j in 0..nb {
            for c in 0..6 {
                let v = sd.h_field.comps[c][grid.idx(i, j, 0)].abs();
                if j == 0 { m0 = m0.max(v); } else { mi = mi.max(v); }
            }
        }
        println!("t={t:+.3} |H|row={m0:.2e} |H|int={mi:.2e}");
    }
}
