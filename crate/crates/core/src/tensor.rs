//! Pointwise tensor algebra in a single coordinate frame.
//!
//! Everything here operates on jets (values plus partial derivatives) at one
//! point, so the grid layer decides whether derivatives come from finite
//! differences or from closed forms.  Identities that are algebraic in the
//! jets -- trace-freeness of the conformal Killing operator, transversality
//! of the H-tensor, metric compatibility of the Christoffel symbols -- then
//! hold to round-off regardless of how the jets were produced.

use crate::grid::{sym_flat, SYM_IDX};

pub type Vec3 = [f64; 3];
/// Symmetric 3x3 in flat order (00, 01, 02, 11, 12, 22).
pub type Sym = [f64; 6];
/// Christoffel symbols: gamma[a][sym_flat(b,c)] = Gamma^a_{bc}.
pub type Christoffel = [[f64; 6]; 3];

#[inline]
pub fn sym_get(s: &Sym, a: usize, b: usize) -> f64 {
    s[sym_flat(a, b)]
}

pub fn sym_det(g: &Sym) -> f64 {
    let [a, b, c, d, e, f] = *g;
    a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c)
}

pub fn sym_inv(g: &Sym) -> Option<Sym> {
    let det = sym_det(g);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let [a, b, c, d, e, f] = *g;
    Some([
        (d * f - e * e) / det,
        (c * e - b * f) / det,
        (b * e - c * d) / det,
        (a * f - c * c) / det,
        (b * c - a * e) / det,
        (a * d - b * b) / det,
    ])
}

/// Positive definiteness via leading principal minors.
pub fn sym_positive_definite(g: &Sym) -> bool {
    let [a, b, c, d, _e, _f] = *g;
    a > 0.0 && (a * d - b * b) > 0.0 && sym_det(g) > 0.0 && c.is_finite()
}

/// Raise an index: v^a = g^{ab} w_b.
pub fn raise(ginv: &Sym, w: &Vec3) -> Vec3 {
    std::array::from_fn(|a| (0..3).map(|b| sym_get(ginv, a, b) * w[b]).sum())
}

/// Lower an index: w_a = g_{ab} v^b.
pub fn lower(g: &Sym, v: &Vec3) -> Vec3 {
    std::array::from_fn(|a| (0..3).map(|b| sym_get(g, a, b) * v[b]).sum())
}

pub fn dot(ginv: &Sym, w1: &Vec3, w2: &Vec3) -> f64 {
    let mut acc = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            acc += sym_get(ginv, a, b) * w1[a] * w2[b];
        }
    }
    acc
}

/// Trace of a covariant symmetric tensor against the inverse metric.
pub fn trace(ginv: &Sym, t: &Sym) -> f64 {
    let mut acc = 0.0;
    for (c, &(a, b)) in SYM_IDX.iter().enumerate() {
        let mult = if a == b { 1.0 } else { 2.0 };
        acc += mult * sym_get(ginv, a, b) * t[c];
    }
    acc
}

/// Pointwise squared norm |T|^2_g of a covariant symmetric 2-tensor.
pub fn norm2_sym(ginv: &Sym, t: &Sym) -> f64 {
    let mut acc = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    acc += sym_get(ginv, a, c)
                        * sym_get(ginv, b, d)
                        * sym_get(t, a, b)
                        * sym_get(t, c, d);
                }
            }
        }
    }
    acc
}

/// Full contraction of two covariant symmetric 2-tensors.
pub fn inner_sym(ginv: &Sym, s: &Sym, t: &Sym) -> f64 {
    let mut acc = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    acc += sym_get(ginv, a, c)
                        * sym_get(ginv, b, d)
                        * sym_get(s, a, b)
                        * sym_get(t, c, d);
                }
            }
        }
    }
    acc
}

/// Christoffel symbols from the metric and its first partials dg[a] = d_a g.
pub fn christoffel(ginv: &Sym, dg: &[Sym; 3]) -> Christoffel {
    let mut gamma = [[0.0; 6]; 3];
    for a in 0..3 {
        for (c, &(b, cc)) in SYM_IDX.iter().enumerate() {
            let mut acc = 0.0;
            for e in 0..3 {
                acc += sym_get(ginv, a, e)
                    * (sym_get(&dg[b], e, cc) + sym_get(&dg[cc], e, b) - sym_get(&dg[e], b, cc));
            }
            gamma[a][c] = 0.5 * acc;
        }
    }
    gamma
}

/// d_a of the inverse metric from dg.
pub fn dginv(ginv: &Sym, dg: &[Sym; 3]) -> [Sym; 3] {
    std::array::from_fn(|a| {
        let mut out = [0.0; 6];
        for (c, &(b, cc)) in SYM_IDX.iter().enumerate() {
            let mut acc = 0.0;
            for d in 0..3 {
                for e in 0..3 {
                    acc -= sym_get(ginv, b, d) * sym_get(ginv, cc, e) * sym_get(&dg[a], d, e);
                }
            }
            out[c] = acc;
        }
        out
    })
}

/// Covariant derivative matrix of a vector field: out[a][b] = nabla_a V^b.
pub fn cov_deriv_vector(gamma: &Christoffel, dv: &[Vec3; 3], v: &Vec3) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = dv[a][b];
            for c in 0..3 {
                acc += gamma[b][sym_flat(a, c)] * v[c];
            }
            out[a][b] = acc;
        }
    }
    out
}

/// Divergence of a vector field.
pub fn divergence_vector(gamma: &Christoffel, dv: &[Vec3; 3], v: &Vec3) -> f64 {
    let nd = cov_deriv_vector(gamma, dv, v);
    nd[0][0] + nd[1][1] + nd[2][2]
}

/// Lie derivative of the metric along W, from jets of both.
pub fn lie_metric(g: &Sym, dg: &[Sym; 3], w: &Vec3, dw: &[Vec3; 3]) -> Sym {
    let mut out = [0.0; 6];
    for (cidx, &(a, b)) in SYM_IDX.iter().enumerate() {
        let mut acc = 0.0;
        for c in 0..3 {
            acc += w[c] * sym_get(&dg[c], a, b)
                + sym_get(g, c, b) * dw[a][c]
                + sym_get(g, a, c) * dw[b][c];
        }
        out[cidx] = acc;
    }
    out
}

/// Conformal Killing operator D_g W = 1/2 L_W g - 1/3 (div W) g, assembled so
/// that the g-trace vanishes identically in floating point.
pub fn conformal_killing(g: &Sym, ginv: &Sym, dg: &[Sym; 3], w: &Vec3, dw: &[Vec3; 3]) -> Sym {
    let lie = lie_metric(g, dg, w, dw);
    let tr = trace(ginv, &lie); // = 2 div W as an algebraic identity
    let mut out = [0.0; 6];
    for c in 0..6 {
        out[c] = 0.5 * lie[c] - (tr / 6.0) * g[c];
    }
    out
}

/// Divergence of a covariant symmetric 2-tensor: (div T)_c = g^{ab} nabla_a T_{bc}.
pub fn divergence_sym(ginv: &Sym, gamma: &Christoffel, dt: &[Sym; 3], t: &Sym) -> Vec3 {
    let mut out = [0.0; 3];
    for c in 0..3 {
        let mut acc = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let mut cov = sym_get(&dt[a], b, c);
                for d in 0..3 {
                    cov -= gamma[d][sym_flat(a, b)] * sym_get(t, d, c)
                        + gamma[d][sym_flat(a, c)] * sym_get(t, b, d);
                }
                acc += sym_get(ginv, a, b) * cov;
            }
        }
        out[c] = acc;
    }
    out
}

/// Hessian of a scalar from its 2-jet: (Hess f)_{ab} = dd f_{ab} - Gamma^c_{ab} d f_c.
pub fn hessian(gamma: &Christoffel, df: &Vec3, ddf: &Sym) -> Sym {
    let mut out = [0.0; 6];
    for (cidx, &(a, b)) in SYM_IDX.iter().enumerate() {
        let mut acc = sym_get(ddf, a, b);
        for c in 0..3 {
            acc -= gamma[c][sym_flat(a, b)] * df[c];
        }
        out[cidx] = acc;
    }
    out
}

pub fn laplacian(ginv: &Sym, gamma: &Christoffel, df: &Vec3, ddf: &Sym) -> f64 {
    trace(ginv, &hessian(gamma, df, ddf))
}

/// Scalar curvature from the metric 2-jet.
///
/// ddg[sym_flat(a,b)] holds d_a d_b g as a symmetric component block.
pub fn scalar_curvature(ginv: &Sym, dg: &[Sym; 3], ddg: &[Sym; 6]) -> f64 {
    let gamma = christoffel(ginv, dg);
    let dgi = dginv(ginv, dg);
    // d_d Gamma^a_{bc}
    let mut dgamma = [[[0.0; 6]; 3]; 3]; // [d][a][sym(b,c)]
    for d in 0..3 {
        for a in 0..3 {
            for (cidx, &(b, c)) in SYM_IDX.iter().enumerate() {
                let mut acc = 0.0;
                for e in 0..3 {
                    acc += sym_get(&dgi[d], a, e)
                        * (sym_get(&dg[b], e, c) + sym_get(&dg[c], e, b) - sym_get(&dg[e], b, c));
                    acc += sym_get(ginv, a, e)
                        * (sym_get(&ddg[sym_flat(d, b)], e, c)
                            + sym_get(&ddg[sym_flat(d, c)], e, b)
                            - sym_get(&ddg[sym_flat(d, e)], b, c));
                }
                dgamma[d][a][cidx] = 0.5 * acc;
            }
        }
    }
    // Ricci and trace
    let mut r = 0.0;
    for b in 0..3 {
        for c in 0..3 {
            let mut ric = 0.0;
            for a in 0..3 {
                ric += dgamma[a][a][sym_flat(b, c)] - dgamma[b][a][sym_flat(a, c)];
                for d in 0..3 {
                    ric += gamma[a][sym_flat(a, d)] * gamma[d][sym_flat(b, c)]
                        - gamma[a][sym_flat(b, d)] * gamma[d][sym_flat(a, c)];
                }
            }
            r += sym_get(ginv, b, c) * ric;
        }
    }
    r
}

/// Jet of a scalar function to second order at a point.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScalarJet {
    pub v: f64,
    pub d: Vec3,
    pub dd: Sym,
}

/// Jet of a metric to first order (all the H-tensor needs).
#[derive(Clone, Copy, Debug)]
pub struct MetricJet {
    pub g: Sym,
    pub dg: [Sym; 3],
}

/// The tensor H_g(omega) from pointwise jets.
///
/// H = |d omega|^6 D(|d omega|^{-2} grad omega)
///   + A(omega) (d omega (x) d omega - 1/3 |d omega|^2 g),
/// A = 1/2 |d omega| div(|d omega| grad omega).
///
/// Returns None when |d omega|^2_g falls below `floor` (degenerate gradient).
pub fn h_tensor(mj: &MetricJet, om: &ScalarJet, floor: f64) -> Option<Sym> {
    let ginv = sym_inv(&mj.g)?;
    let gamma = christoffel(&ginv, &mj.dg);
    let dgi = dginv(&ginv, &mj.dg);

    let dw = om.d;
    let n2 = dot(&ginv, &dw, &dw);
    if !(n2 > floor) {
        return None;
    }
    let u: Vec3 = raise(&ginv, &dw); // grad omega
    // partials of u and n2
    let mut du = [[0.0; 3]; 3]; // du[a][b] = d_a u^b
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += sym_get(&dgi[a], b, c) * dw[c] + sym_get(&ginv, b, c) * sym_get(&om.dd, a, c);
            }
            du[a][b] = acc;
        }
    }
    let mut dn2 = [0.0; 3];
    for a in 0..3 {
        let mut acc = 0.0;
        for b in 0..3 {
            for c in 0..3 {
                acc += sym_get(&dgi[a], b, c) * dw[b] * dw[c];
                acc += 2.0 * sym_get(&ginv, b, c) * sym_get(&om.dd, a, b) * dw[c];
            }
        }
        dn2[a] = acc;
    }

    // V = u / n2 and its partials
    let v: Vec3 = std::array::from_fn(|a| u[a] / n2);
    let mut dv = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            dv[a][b] = du[a][b] / n2 - u[b] * dn2[a] / (n2 * n2);
        }
    }
    let dv_rows: [Vec3; 3] = std::array::from_fn(|a| dv[a]);
    let ck = conformal_killing(&mj.g, &ginv, &mj.dg, &v, &dv_rows);

    // A = 1/2 n div(n u) = 1/2 (n^2 div u + 1/2 dn2 . u)
    let du_rows: [Vec3; 3] = std::array::from_fn(|a| du[a]);
    let div_u = divergence_vector(&gamma, &du_rows, &u);
    let a_coef = 0.5 * (n2 * div_u + 0.5 * (0..3).map(|a| dn2[a] * u[a]).sum::<f64>());

    let n6 = n2 * n2 * n2;
    let mut out = [0.0; 6];
    for (cidx, &(a, b)) in SYM_IDX.iter().enumerate() {
        out[cidx] =
            n6 * ck[cidx] + a_coef * (dw[a] * dw[b] - n2 * sym_get(&mj.g, a, b) / 3.0);
    }
    Some(out)
}

/// Traceless part of a covariant symmetric tensor.
pub fn traceless_part(g: &Sym, ginv: &Sym, t: &Sym) -> Sym {
    let tr = trace(ginv, t);
    std::array::from_fn(|c| t[c] - tr / 3.0 * g[c])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng_seq(seed: u64) -> impl FnMut() -> f64 {
        // xorshift-ish deterministic stream in (-1, 1)
        let mut s = seed.max(1);
        move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 2_000_003) as f64 / 1_000_001.5 - 1.0
        }
    }

    fn random_metric_jet(r: &mut impl FnMut() -> f64) -> MetricJet {
        let mut g = [0.0; 6];
        for v in &mut g {
            *v = 0.25 * r();
        }
        g[0] += 2.0;
        g[3] += 2.0;
        g[5] += 2.0;
        let dg = std::array::from_fn(|_| std::array::from_fn(|_| 0.3 * r()));
        MetricJet { g, dg }
    }

    fn random_scalar_jet(r: &mut impl FnMut() -> f64) -> ScalarJet {
        let mut om = ScalarJet { v: r(), d: [0.0; 3], dd: [0.0; 6] };
        for v in &mut om.d {
            *v = r() + 1.5; // keep the gradient away from zero
        }
        for v in &mut om.dd {
            *v = 0.5 * r();
        }
        om
    }

    #[test]
    fn sym_inverse_roundtrip() {
        let mut r = rng_seq(7);
        for _ in 0..50 {
            let mj = random_metric_jet(&mut r);
            let inv = sym_inv(&mj.g).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let mut acc = 0.0;
                    for c in 0..3 {
                        acc += sym_get(&mj.g, a, c) * sym_get(&inv, c, b);
                    }
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((acc - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn metric_compatibility_is_algebraic() {
        let mut r = rng_seq(11);
        let mj = random_metric_jet(&mut r);
        let ginv = sym_inv(&mj.g).unwrap();
        let gamma = christoffel(&ginv, &mj.dg);
        // nabla_a g_{bc} = d_a g_{bc} - Gamma^d_{ab} g_{dc} - Gamma^d_{ac} g_{bd} = 0
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut acc = sym_get(&mj.dg[a], b, c);
                    for d in 0..3 {
                        acc -= gamma[d][sym_flat(a, b)] * sym_get(&mj.g, d, c);
                        acc -= gamma[d][sym_flat(a, c)] * sym_get(&mj.g, b, d);
                    }
                    assert!(acc.abs() < 1e-13, "metric compatibility failed: {acc}");
                }
            }
        }
    }

    #[test]
    fn conformal_killing_trace_free_and_kernel() {
        let mut r = rng_seq(23);
        for _ in 0..20 {
            let mj = random_metric_jet(&mut r);
            let ginv = sym_inv(&mj.g).unwrap();
            let w: Vec3 = [r(), r(), r()];
            let dw: [Vec3; 3] = std::array::from_fn(|_| [r(), r(), r()]);
            let d = conformal_killing(&mj.g, &ginv, &mj.dg, &w, &dw);
            assert!(trace(&ginv, &d).abs() < 1e-12);
        }
        // flat metric: dilation and translation are conformal Killing fields
        let flat = MetricJet { g: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0], dg: [[0.0; 6]; 3] };
        let ginv = sym_inv(&flat.g).unwrap();
        // translation: constant W
        let d = conformal_killing(&flat.g, &ginv, &flat.dg, &[1.0, 2.0, -0.5], &[[0.0; 3]; 3]);
        assert!(d.iter().all(|v| v.abs() < 1e-15));
        // dilation: W = x, dW = id
        let dw: [Vec3; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let d = conformal_killing(&flat.g, &ginv, &flat.dg, &[0.3, -0.1, 0.7], &dw);
        assert!(d.iter().all(|v| v.abs() < 1e-15), "dilation not in kernel: {d:?}");
    }

    #[test]
    fn h_tensor_invariants_random() {
        let mut r = rng_seq(41);
        for _ in 0..100 {
            let mj = random_metric_jet(&mut r);
            let om = random_scalar_jet(&mut r);
            let ginv = sym_inv(&mj.g).unwrap();
            let h = h_tensor(&mj, &om, 1e-12).unwrap();
            // trace-free
            let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            assert!(trace(&ginv, &h).abs() < 1e-11 * scale);
            // transversality H(grad omega, .) = 0
            let u = raise(&ginv, &om.d);
            for c in 0..3 {
                let mut acc = 0.0;
                for a in 0..3 {
                    acc += u[a] * sym_get(&h, a, c);
                }
                assert!(acc.abs() < 1e-10 * scale.max(1.0), "transversality: {acc} vs scale {scale}");
            }
        }
    }

    #[test]
    fn h_tensor_scaling_laws() {
        let mut r = rng_seq(91);
        for _ in 0..30 {
            let mj = random_metric_jet(&mut r);
            let om = random_scalar_jet(&mut r);
            let h = h_tensor(&mj, &om, 1e-12).unwrap();
            // H(c omega) = c^5 H(omega)
            let c = 2.0;
            let omc = ScalarJet {
                v: c * om.v,
                d: std::array::from_fn(|i| c * om.d[i]),
                dd: std::array::from_fn(|i| c * om.dd[i]),
            };
            let hc = h_tensor(&mj, &omc, 1e-12).unwrap();
            let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..6 {
                assert!(
                    (hc[i] - c.powi(5) * h[i]).abs() < 1e-9 * (c.powi(5) * scale),
                    "scaling law at comp {i}"
                );
            }
            // H_{theta g}(omega) = theta^{-2} H_g(omega), theta a positive function
            let theta = 1.5 + 0.5 * r();
            let dtheta: Vec3 = [0.2 * r(), 0.2 * r(), 0.2 * r()];
            let gs: Sym = std::array::from_fn(|i| theta * mj.g[i]);
            let dgs: [Sym; 3] = std::array::from_fn(|a| {
                std::array::from_fn(|i| theta * mj.dg[a][i] + dtheta[a] * mj.g[i])
            });
            let hs = h_tensor(&MetricJet { g: gs, dg: dgs }, &om, 1e-12).unwrap();
            for i in 0..6 {
                assert!(
                    (hs[i] - h[i] / (theta * theta)).abs() < 1e-9 * (scale / (theta * theta)).max(1e-30),
                    "conformal law at comp {i}: {} vs {}",
                    hs[i],
                    h[i] / (theta * theta)
                );
            }
        }
    }

    #[test]
    fn h_tensor_flat_affine_vanishes() {
        let flat = MetricJet { g: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0], dg: [[0.0; 6]; 3] };
        let om = ScalarJet { v: 0.3, d: [0.0, 0.0, 1.0], dd: [0.0; 6] };
        let h = h_tensor(&flat, &om, 1e-12).unwrap();
        assert!(h.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn h_tensor_degenerate_gradient() {
        let flat = MetricJet { g: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0], dg: [[0.0; 6]; 3] };
        let om = ScalarJet { v: 0.0, d: [0.0, 0.0, 0.0], dd: [0.0; 6] };
        assert!(h_tensor(&flat, &om, 1e-12).is_none());
    }

    #[test]
    fn curvature_of_hyperbolic_jets() {
        // exact jets of the hyperbolic metric in log-polar coordinates:
        // g = sec^2 b (dt^2 + db^2 + sin^2 b dp^2)
        let b: f64 = 0.7;
        let (s, c) = b.sin_cos();
        let sec2 = 1.0 / (c * c);
        let tanb = s / c;
        let g: Sym = [sec2, 0.0, 0.0, sec2, 0.0, sec2 * s * s];
        let dsec2 = 2.0 * sec2 * tanb;
        let ddsec2 = 2.0 * dsec2 * tanb + 2.0 * sec2 / (c * c);
        // g_pp = tan^2 b
        let dgpp = 2.0 * tanb / (c * c);
        let ddgpp = 2.0 / (c * c * c * c) + 4.0 * tanb * tanb / (c * c);
        let mut dg = [[0.0; 6]; 3];
        dg[1][0] = dsec2;
        dg[1][3] = dsec2;
        dg[1][5] = dgpp;
        let mut ddg = [[0.0; 6]; 6];
        ddg[sym_flat(1, 1)][0] = ddsec2;
        ddg[sym_flat(1, 1)][3] = ddsec2;
        ddg[sym_flat(1, 1)][5] = ddgpp;
        let ginv = sym_inv(&g).unwrap();
        let r = scalar_curvature(&ginv, &dg, &ddg);
        assert!((r + 6.0).abs() < 1e-11, "R = {r}");
    }

    #[test]
    fn curvature_flat_jets() {
        let g: Sym = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let ginv = sym_inv(&g).unwrap();
        let r = scalar_curvature(&ginv, &[[0.0; 6]; 3], &[[0.0; 6]; 6]);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn traceless_part_kills_trace() {
        let mut r = rng_seq(5);
        let mj = random_metric_jet(&mut r);
        let ginv = sym_inv(&mj.g).unwrap();
        let t: Sym = std::array::from_fn(|_| r());
        let tl = traceless_part(&mj.g, &ginv, &t);
        assert!(trace(&ginv, &tl).abs() < 1e-13);
    }
}
