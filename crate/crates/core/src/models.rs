//! Closed-form reference geometry on log-polar half-space charts.
//!
//! Chart coordinates are (t, b, p) with r = e^t, y = r cos b, |x| = r sin b.
//! The Euclidean and hyperbolic metrics have t-independent conformal factors
//! here, which is what makes the spliced constructions well balanced: every
//! pipeline quantity is computed relative to these references.

use crate::grid::{ChartGrid, ScalarField, SymTensorField, Variance};
use crate::tensor::{MetricJet, ScalarJet, Sym};
use std::sync::Arc;

/// Euclidean metric g_E = e^{2t}(dt^2 + db^2 + sin^2 b dp^2).
pub fn euclidean_components(t: f64, b: f64) -> Sym {
    let e2t = (2.0 * t).exp();
    let s = b.sin();
    [e2t, 0.0, 0.0, e2t, 0.0, e2t * s * s]
}

/// First partials of g_E: dg[a] = d_a g_E.
pub fn euclidean_dg(t: f64, b: f64) -> [Sym; 3] {
    let e2t = (2.0 * t).exp();
    let (s, c) = b.sin_cos();
    let dt: Sym = [2.0 * e2t, 0.0, 0.0, 2.0 * e2t, 0.0, 2.0 * e2t * s * s];
    let db: Sym = [0.0, 0.0, 0.0, 0.0, 0.0, 2.0 * e2t * s * c];
    [dt, db, [0.0; 6]]
}

/// Second partials of g_E, indexed by sym_flat(a, b).
pub fn euclidean_ddg(t: f64, b: f64) -> [Sym; 6] {
    let e2t = (2.0 * t).exp();
    let (s, c) = b.sin_cos();
    let dtt: Sym = [4.0 * e2t, 0.0, 0.0, 4.0 * e2t, 0.0, 4.0 * e2t * s * s];
    let dtb: Sym = [0.0, 0.0, 0.0, 0.0, 0.0, 4.0 * e2t * s * c];
    let dbb: Sym = [0.0, 0.0, 0.0, 0.0, 0.0, 2.0 * e2t * (c * c - s * s)];
    [dtt, dtb, [0.0; 6], dbb, [0.0; 6], [0.0; 6]]
}

pub fn euclidean_jet(t: f64, b: f64) -> MetricJet {
    MetricJet { g: euclidean_components(t, b), dg: euclidean_dg(t, b) }
}

/// Hyperbolic metric breve g = sec^2 b (dt^2 + db^2 + sin^2 b dp^2).
pub fn hyperbolic_components(b: f64) -> Sym {
    let c = b.cos();
    let sec2 = 1.0 / (c * c);
    let s = b.sin();
    [sec2, 0.0, 0.0, sec2, 0.0, sec2 * s * s]
}

pub fn metric_euclidean(grid: &Arc<ChartGrid>) -> SymTensorField {
    sym_from_fn(grid, |t, b, _| euclidean_components(t, b))
}

/// The hyperbolic metric field; infinite on the boundary row, so callers must
/// treat it as interior-only.
pub fn metric_hyperbolic(grid: &Arc<ChartGrid>) -> SymTensorField {
    sym_from_fn(grid, |_, b, _| hyperbolic_components(b))
}

pub fn sym_from_fn(
    grid: &Arc<ChartGrid>,
    mut f: impl FnMut(f64, f64, f64) -> Sym,
) -> SymTensorField {
    let mut out = SymTensorField::zeros(grid, Variance::Covariant);
    let (nt, nb, np) = grid.shape();
    for i in 0..nt {
        for j in 0..nb {
            for k in 0..np {
                let (t, b, p) = grid.coords(i, j, k);
                let v = f(t, b, p);
                let idx = grid.idx(i, j, k);
                for c in 0..6 {
                    out.comps[c][idx] = v[c];
                }
            }
        }
    }
    out
}

/// Height function y = e^t cos b with its exact 2-jet.
pub fn y_jet(t: f64, b: f64) -> ScalarJet {
    let et = t.exp();
    let (s, c) = b.sin_cos();
    let y = et * c;
    ScalarJet {
        v: y,
        d: [y, -et * s, 0.0],
        // dd in sym order (tt, tb, tp, bb, bp, pp)
        dd: [y, -et * s, 0.0, -y, 0.0, 0.0],
    }
}

pub fn y_field(grid: &Arc<ChartGrid>) -> ScalarField {
    ScalarField::from_fn(grid, |t, b, _| t.exp() * b.cos())
}

/// The ball-model defining function breve rho = cos b / (cosh t + cos b),
/// manifestly inversion-symmetric (even in t).
pub fn breve_rho_value(t: f64, b: f64) -> f64 {
    let c = b.cos();
    c / (t.cosh() + c)
}

pub fn breve_rho_field(grid: &Arc<ChartGrid>) -> ScalarField {
    ScalarField::from_fn(grid, |t, b, _| breve_rho_value(t, b))
}

/// Euclidean radius r = e^t.
pub fn radius_value(t: f64) -> f64 {
    t.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{scalar_curvature, sym_inv};

    #[test]
    fn hyperbolic_curvature_from_jets_everywhere() {
        for b in [0.1, 0.5, 1.0, 1.4] {
            let g = hyperbolic_components(b);
            let ginv = sym_inv(&g).unwrap();
            // jets of sec^2 b metric, from the closed forms
            let (s, c) = (b.sin(), b.cos());
            let sec2 = 1.0 / (c * c);
            let tanb = s / c;
            let dsec2 = 2.0 * sec2 * tanb;
            let ddsec2 = 2.0 * dsec2 * tanb + 2.0 * sec2 * sec2;
            let dgpp = 2.0 * tanb * sec2;
            let ddgpp = 2.0 * sec2 * sec2 + 4.0 * tanb * tanb * sec2;
            let mut dg = [[0.0; 6]; 3];
            dg[1][0] = dsec2;
            dg[1][3] = dsec2;
            dg[1][5] = dgpp;
            let mut ddg = [[0.0; 6]; 6];
            ddg[3][0] = ddsec2;
            ddg[3][3] = ddsec2;
            ddg[3][5] = ddgpp;
            let r = scalar_curvature(&ginv, &dg, &ddg);
            assert!((r + 6.0).abs() < 1e-10, "R = {r} at b = {b}");
        }
    }

    #[test]
    fn euclidean_jets_match_fd() {
        let h = 1e-5;
        let (t0, b0) = (0.3, 0.9);
        let dg = euclidean_dg(t0, b0);
        for c in 0..6 {
            let fd_t = (euclidean_components(t0 + h, b0)[c] - euclidean_components(t0 - h, b0)[c])
                / (2.0 * h);
            let fd_b = (euclidean_components(t0, b0 + h)[c] - euclidean_components(t0, b0 - h)[c])
                / (2.0 * h);
            assert!((dg[0][c] - fd_t).abs() < 1e-8 * (1.0 + fd_t.abs()));
            assert!((dg[1][c] - fd_b).abs() < 1e-8 * (1.0 + fd_b.abs()));
        }
        let ddg = euclidean_ddg(t0, b0);
        let fd_tb = (euclidean_dg(t0, b0 + h)[0][5] - euclidean_dg(t0, b0 - h)[0][5]) / (2.0 * h);
        assert!((ddg[1][5] - fd_tb).abs() < 1e-7 * (1.0 + fd_tb.abs()));
    }

    #[test]
    fn y_jet_matches_fd() {
        let h = 1e-5;
        let (t0, b0) = (-0.4, 0.6);
        let j = y_jet(t0, b0);
        let y = |t: f64, b: f64| t.exp() * b.cos();
        assert!((j.d[0] - (y(t0 + h, b0) - y(t0 - h, b0)) / (2.0 * h)).abs() < 1e-9);
        assert!((j.d[1] - (y(t0, b0 + h) - y(t0, b0 - h)) / (2.0 * h)).abs() < 1e-9);
        let dtt = (y(t0 + h, b0) - 2.0 * j.v + y(t0 - h, b0)) / (h * h);
        assert!((j.dd[0] - dtt).abs() < 1e-5);
        let dtb = (y(t0 + h, b0 + h) - y(t0 + h, b0 - h) - y(t0 - h, b0 + h) + y(t0 - h, b0 - h))
            / (4.0 * h * h);
        assert!((j.dd[1] - dtb).abs() < 1e-5);
    }

    #[test]
    fn breve_rho_matches_halfspace_form() {
        use crate::halfspace::{breve_rho, HalfSpacePoint};
        for (t, b) in [(0.0_f64, 0.3_f64), (1.2, 1.1), (-0.7, 0.01), (0.4, 1.56)] {
            let r = t.exp();
            let p = HalfSpacePoint::new(r * b.sin(), 0.0, r * b.cos());
            assert!((breve_rho_value(t, b) - breve_rho(&p)).abs() < 1e-14);
        }
    }
}
