//! Field-level geometric operators: curvature, Hessians, the conformal
//! Killing operator, divergences, and the vector Laplacian, all built by
//! extracting jets from grid fields and delegating to the pointwise algebra.

use crate::error::{Error, Result};
use crate::grid::{
    check_same_grid, ChartGrid, CovectorField, DerivDomain, ScalarField, SymTensorField,
    Variance, VectorField, SYM_PARITY, VEC_PARITY,
};
use crate::tensor::{self, Christoffel, MetricJet, ScalarJet, Sym, Vec3};
use rayon::prelude::*;
use std::sync::{Arc, OnceLock};

/// Parity bookkeeping: differentiating along the angular axis flips the
/// reflection parity of a component.
#[inline]
pub fn dparity(axis: usize, parity: f64) -> f64 {
    if axis == 1 {
        -parity
    } else {
        parity
    }
}

/// A metric on a chart with cached inverse, first partials, and Christoffel
/// symbols.  The caches are rebuilt lazily after `update`.
#[derive(Debug)]
pub struct MetricField {
    pub tensor: SymTensorField,
    pub domain: DerivDomain,
    cache: OnceLock<MetricCache>,
}

impl Clone for MetricField {
    fn clone(&self) -> Self {
        MetricField { tensor: self.tensor.clone(), domain: self.domain, cache: OnceLock::new() }
    }
}

#[derive(Debug)]
struct MetricCache {
    inv: Vec<f64>,   // node-major, 6 per node
    dg: Vec<f64>,    // node-major, 18 per node: a*6 + comp
    gamma: Vec<f64>, // node-major, 18 per node: a*6 + sym(b,c)
}

impl MetricField {
    pub fn new(tensor: SymTensorField, domain: DerivDomain) -> Result<Self> {
        let grid = tensor.grid.clone();
        let (nt, nb, np) = grid.shape();
        let jmin = if domain == DerivDomain::Interior { 1 } else { 0 };
        for i in 0..nt {
            for j in jmin..nb {
                for k in 0..np {
                    let idx = grid.idx(i, j, k);
                    let g: Sym = std::array::from_fn(|c| tensor.comps[c][idx]);
                    if !tensor::sym_positive_definite(&g) {
                        return Err(Error::SingularMetric { i, j, k, det: tensor::sym_det(&g) });
                    }
                }
            }
        }
        Ok(MetricField { tensor, domain, cache: OnceLock::new() })
    }

    pub fn grid(&self) -> &Arc<ChartGrid> {
        &self.tensor.grid
    }

    /// Mutate the underlying components; invalidates every cache.
    pub fn update(&mut self, f: impl FnOnce(&mut SymTensorField)) {
        f(&mut self.tensor);
        self.cache = OnceLock::new();
    }

    fn cache(&self) -> &MetricCache {
        self.cache.get_or_init(|| {
            let grid = &self.tensor.grid;
            let n = grid.len();
            let mut dg_arrays: Vec<Vec<f64>> = Vec::with_capacity(18);
            for a in 0..3 {
                for c in 0..6 {
                    let mut out = vec![0.0; n];
                    grid.deriv_domain_into(
                        a,
                        1,
                        &self.tensor.comps[c],
                        SYM_PARITY[c],
                        self.domain,
                        &mut out,
                    );
                    dg_arrays.push(out);
                }
            }
            let mut inv = vec![0.0; 6 * n];
            let mut dg = vec![0.0; 18 * n];
            let mut gamma = vec![0.0; 18 * n];
            let jmin = if self.domain == DerivDomain::Interior { 1 } else { 0 };
            let (_, nbg, npg) = grid.shape();
            for idx in 0..n {
                let (_, j, _) = grid.unidx(idx);
                let _ = (nbg, npg);
                if j < jmin {
                    continue;
                }
                let g: Sym = std::array::from_fn(|c| self.tensor.comps[c][idx]);
                let gi = tensor::sym_inv(&g).unwrap_or([0.0; 6]);
                let mut dga: [Sym; 3] = [[0.0; 6]; 3];
                for a in 0..3 {
                    for c in 0..6 {
                        dga[a][c] = dg_arrays[a * 6 + c][idx];
                    }
                }
                let gm = tensor::christoffel(&gi, &dga);
                for c in 0..6 {
                    inv[idx * 6 + c] = gi[c];
                }
                for a in 0..3 {
                    for c in 0..6 {
                        dg[idx * 18 + a * 6 + c] = dga[a][c];
                        gamma[idx * 18 + a * 6 + c] = gm[a][c];
                    }
                }
            }
            MetricCache { inv, dg, gamma }
        })
    }

    #[inline]
    pub fn g_at(&self, idx: usize) -> Sym {
        std::array::from_fn(|c| self.tensor.comps[c][idx])
    }

    #[inline]
    pub fn ginv_at(&self, idx: usize) -> Sym {
        let c = self.cache();
        std::array::from_fn(|k| c.inv[idx * 6 + k])
    }

    #[inline]
    pub fn dg_at(&self, idx: usize) -> [Sym; 3] {
        let c = self.cache();
        std::array::from_fn(|a| std::array::from_fn(|k| c.dg[idx * 18 + a * 6 + k]))
    }

    #[inline]
    pub fn gamma_at(&self, idx: usize) -> Christoffel {
        let c = self.cache();
        std::array::from_fn(|a| std::array::from_fn(|k| c.gamma[idx * 18 + a * 6 + k]))
    }

    pub fn metric_jet_at(&self, idx: usize) -> MetricJet {
        MetricJet { g: self.g_at(idx), dg: self.dg_at(idx) }
    }

    /// Pointwise inverse as a contravariant tensor field.
    pub fn inverse_field(&self) -> Result<SymTensorField> {
        let grid = &self.tensor.grid;
        let mut out = SymTensorField::zeros(grid, Variance::Contravariant);
        let jmin = if self.domain == DerivDomain::Interior { 1 } else { 0 };
        for idx in 0..grid.len() {
            let (i, j, k) = grid.unidx(idx);
            if j < jmin {
                continue;
            }
            let g = self.g_at(idx);
            let gi = tensor::sym_inv(&g)
                .ok_or(Error::SingularMetric { i, j, k, det: tensor::sym_det(&g) })?;
            for c in 0..6 {
                out.comps[c][idx] = gi[c];
            }
        }
        Ok(out)
    }

    /// Max-norm of g * g^{-1} - id over the valid rows (contract check).
    pub fn inverse_consistency(&self) -> f64 {
        let grid = &self.tensor.grid;
        let jmin = if self.domain == DerivDomain::Interior { 1 } else { 0 };
        let mut worst = 0.0f64;
        for idx in 0..grid.len() {
            let (_, j, _) = grid.unidx(idx);
            if j < jmin {
                continue;
            }
            let g = self.g_at(idx);
            let gi = self.ginv_at(idx);
            for a in 0..3 {
                for b in 0..3 {
                    let mut acc = 0.0;
                    for c in 0..3 {
                        acc += tensor::sym_get(&g, a, c) * tensor::sym_get(&gi, c, b);
                    }
                    let expect = if a == b { 1.0 } else { 0.0 };
                    worst = worst.max((acc - expect).abs());
                }
            }
        }
        worst
    }

    fn jmin(&self) -> usize {
        if self.domain == DerivDomain::Interior {
            1
        } else {
            0
        }
    }
}

/// First and second partials of a scalar field.
pub fn scalar_jets(
    grid: &Arc<ChartGrid>,
    f: &[f64],
    domain: DerivDomain,
) -> ([Vec<f64>; 3], [Vec<f64>; 6]) {
    let d: [Vec<f64>; 3] = std::array::from_fn(|a| {
        let mut out = vec![0.0; f.len()];
        grid.deriv_domain_into(a, 1, f, 1.0, domain, &mut out);
        out
    });
    // second partials in sym order (tt, tb, tp, bb, bp, pp)
    let dd: [Vec<f64>; 6] = std::array::from_fn(|c| {
        let (a, b) = crate::grid::SYM_IDX[c];
        let mut out = vec![0.0; f.len()];
        if a == b {
            grid.deriv_domain_into(a, 2, f, 1.0, domain, &mut out);
        } else {
            grid.deriv_domain_into(a, 1, &d[b], dparity(b, 1.0), domain, &mut out);
        }
        out
    });
    (d, dd)
}

pub fn scalar_jet_at(d: &[Vec<f64>; 3], dd: &[Vec<f64>; 6], f: &[f64], idx: usize) -> ScalarJet {
    ScalarJet {
        v: f[idx],
        d: std::array::from_fn(|a| d[a][idx]),
        dd: std::array::from_fn(|c| dd[c][idx]),
    }
}

/// First partials of a vector field: dw[a][b] = d_a W^b per node.
pub fn vector_jets(grid: &Arc<ChartGrid>, w: &VectorField, domain: DerivDomain) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(9);
    for a in 0..3 {
        for b in 0..3 {
            let mut d = vec![0.0; grid.len()];
            grid.deriv_domain_into(a, 1, &w.comps[b], VEC_PARITY[b], domain, &mut d);
            out.push(d);
        }
    }
    out
}

/// First partials of a symmetric tensor field: dt[a][c] per node.
pub fn sym_jets(grid: &Arc<ChartGrid>, t: &SymTensorField, domain: DerivDomain) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(18);
    for a in 0..3 {
        for c in 0..6 {
            let mut d = vec![0.0; grid.len()];
            grid.deriv_domain_into(a, 1, &t.comps[c], SYM_PARITY[c], domain, &mut d);
            out.push(d);
        }
    }
    out
}

/// Scalar curvature by finite differences of the metric components.
///
/// For `Interior` metrics the boundary row of the output is zero (trimmed).
pub fn scalar_curvature(g: &MetricField) -> ScalarField {
    let grid = g.grid().clone();
    let n = grid.len();
    // second partials of each component
    let dg_arrays: Vec<&[f64]> = Vec::new();
    drop(dg_arrays);
    let mut ddg_arrays: Vec<Vec<f64>> = Vec::with_capacity(36);
    // first recover d_b g arrays from the cache layout
    let cache_dg: Vec<Vec<f64>> = (0..3)
        .map(|a| {
            (0..6)
                .map(|c| (0..n).map(|idx| g.dg_at(idx)[a][c]).collect::<Vec<f64>>())
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();
    for cpair in 0..6 {
        let (a, b) = crate::grid::SYM_IDX[cpair];
        for c in 0..6 {
            let mut out = vec![0.0; n];
            if a == b {
                grid.deriv_domain_into(a, 2, &g.tensor.comps[c], SYM_PARITY[c], g.domain, &mut out);
            } else {
                grid.deriv_domain_into(
                    a,
                    1,
                    &cache_dg[b * 6 + c],
                    dparity(b, SYM_PARITY[c]),
                    g.domain,
                    &mut out,
                );
            }
            ddg_arrays.push(out);
        }
    }
    let jmin = g.jmin();
    let mut data = vec![0.0; n];
    data.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            return;
        }
        let gi = g.ginv_at(idx);
        let dg = g.dg_at(idx);
        let ddg: [Sym; 6] =
            std::array::from_fn(|cp| std::array::from_fn(|c| ddg_arrays[cp * 6 + c][idx]));
        *out = tensor::scalar_curvature(&gi, &dg, &ddg);
    });
    ScalarField { grid, data }
}

/// Scalar curvature of the conformally rescaled metric w^{-2} gbar in 3d:
/// R = w^2 R[gbar] + 4 w Lap_gbar w - 6 |dw|^2_gbar.
///
/// `w` supplies exact jets; everything is evaluated up to the boundary row.
pub fn scalar_curvature_weighted(
    gbar: &MetricField,
    w: &(impl Fn(f64, f64, f64) -> ScalarJet + Sync),
) -> ScalarField {
    let grid = gbar.grid().clone();
    let rbar = scalar_curvature(gbar);
    let mut data = vec![0.0; grid.len()];
    data.par_iter_mut().enumerate().for_each(|(idx, out)| {
        let (i, j, k) = grid.unidx(idx);
        let (t, b, p) = grid.coords(i, j, k);
        let wj = w(t, b, p);
        let gi = gbar.ginv_at(idx);
        let gm = gbar.gamma_at(idx);
        let lap = tensor::laplacian(&gi, &gm, &wj.d, &wj.dd);
        let dw2 = tensor::dot(&gi, &wj.d, &wj.d);
        *out = wj.v * wj.v * rbar.data[idx] + 4.0 * wj.v * lap - 6.0 * dw2;
    });
    ScalarField { grid, data }
}

/// Hessian of a scalar field.
pub fn hessian_field(g: &MetricField, f: &ScalarField) -> Result<SymTensorField> {
    check_same_grid(g.grid(), &f.grid)?;
    let grid = g.grid().clone();
    let (d, dd) = scalar_jets(&grid, &f.data, g.domain);
    let mut out = SymTensorField::zeros(&grid, Variance::Covariant);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gm = g.gamma_at(idx);
        let jet = scalar_jet_at(&d, &dd, &f.data, idx);
        let h = tensor::hessian(&gm, &jet.d, &jet.dd);
        for c in 0..6 {
            out.comps[c][idx] = h[c];
        }
    }
    Ok(out)
}

/// Laplace-Beltrami of a scalar field (trace of the Hessian).
pub fn laplacian_field(g: &MetricField, f: &ScalarField) -> Result<ScalarField> {
    check_same_grid(g.grid(), &f.grid)?;
    let grid = g.grid().clone();
    let (d, dd) = scalar_jets(&grid, &f.data, g.domain);
    let mut out = ScalarField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gi = g.ginv_at(idx);
        let gm = g.gamma_at(idx);
        let jet = scalar_jet_at(&d, &dd, &f.data, idx);
        out.data[idx] = tensor::laplacian(&gi, &gm, &jet.d, &jet.dd);
    }
    Ok(out)
}

/// Conformal Killing operator D_g W as a covariant symmetric field.
pub fn conformal_killing_field(g: &MetricField, w: &VectorField) -> Result<SymTensorField> {
    check_same_grid(g.grid(), &w.grid)?;
    let grid = g.grid().clone();
    let dw = vector_jets(&grid, w, g.domain);
    let mut out = SymTensorField::zeros(&grid, Variance::Covariant);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gv = g.g_at(idx);
        let gi = g.ginv_at(idx);
        let dg = g.dg_at(idx);
        let wv: Vec3 = std::array::from_fn(|b| w.comps[b][idx]);
        let dwv: [Vec3; 3] = std::array::from_fn(|a| std::array::from_fn(|b| dw[a * 3 + b][idx]));
        let d = tensor::conformal_killing(&gv, &gi, &dg, &wv, &dwv);
        for c in 0..6 {
            out.comps[c][idx] = d[c];
        }
    }
    Ok(out)
}

/// Divergence of a covariant symmetric 2-tensor: (div T)_c = g^{ab} nabla_a T_{bc}.
pub fn divergence_sym_field(g: &MetricField, t: &SymTensorField) -> Result<CovectorField> {
    check_same_grid(g.grid(), &t.grid)?;
    if t.variance != Variance::Covariant {
        return Err(Error::RankMismatch("divergence_sym_field expects a covariant tensor".into()));
    }
    let grid = g.grid().clone();
    let dt = sym_jets(&grid, t, g.domain);
    let mut out = CovectorField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gi = g.ginv_at(idx);
        let gm = g.gamma_at(idx);
        let tv: Sym = t.at(idx);
        let dtv: [Sym; 3] = std::array::from_fn(|a| std::array::from_fn(|c| dt[a * 6 + c][idx]));
        let div = tensor::divergence_sym(&gi, &gm, &dtv, &tv);
        for c in 0..3 {
            out.comps[c][idx] = div[c];
        }
    }
    Ok(out)
}

/// Raise the index of a covector field.
pub fn sharp(g: &MetricField, w: &CovectorField) -> Result<VectorField> {
    check_same_grid(g.grid(), &w.grid)?;
    let grid = g.grid().clone();
    let mut out = VectorField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gi = g.ginv_at(idx);
        let wv: Vec3 = std::array::from_fn(|c| w.comps[c][idx]);
        let v = tensor::raise(&gi, &wv);
        for c in 0..3 {
            out.comps[c][idx] = v[c];
        }
    }
    Ok(out)
}

/// Vector Laplacian L_g W = -div_g(D_g W)^sharp, exactly as composed operators.
pub fn vector_laplacian_apply(g: &MetricField, w: &VectorField) -> Result<VectorField> {
    let d = conformal_killing_field(g, w)?;
    let div = divergence_sym_field(g, &d)?;
    let mut v = sharp(g, &div)?;
    for c in 0..3 {
        for x in &mut v.comps[c] {
            *x = -*x;
        }
    }
    Ok(v)
}

/// Pointwise squared g-norm of a covariant symmetric tensor field.
pub fn tensor_norm2_field(g: &MetricField, t: &SymTensorField) -> Result<ScalarField> {
    check_same_grid(g.grid(), &t.grid)?;
    let grid = g.grid().clone();
    let mut out = ScalarField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gi = g.ginv_at(idx);
        out.data[idx] = tensor::norm2_sym(&gi, &t.at(idx));
    }
    Ok(out)
}

/// Pointwise squared g-norm of a covector field.
pub fn covector_norm2_field(g: &MetricField, w: &CovectorField) -> Result<ScalarField> {
    check_same_grid(g.grid(), &w.grid)?;
    let grid = g.grid().clone();
    let mut out = ScalarField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gi = g.ginv_at(idx);
        let wv: Vec3 = std::array::from_fn(|c| w.comps[c][idx]);
        out.data[idx] = tensor::dot(&gi, &wv, &wv);
    }
    Ok(out)
}

/// Pointwise squared g-norm of a vector field.
pub fn vector_norm2_field(g: &MetricField, v: &VectorField) -> Result<ScalarField> {
    check_same_grid(g.grid(), &v.grid)?;
    let grid = g.grid().clone();
    let mut out = ScalarField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gv = g.g_at(idx);
        let vv: Vec3 = std::array::from_fn(|c| v.comps[c][idx]);
        let lw = tensor::lower(&gv, &vv);
        out.data[idx] = (0..3).map(|a| lw[a] * vv[a]).sum();
    }
    Ok(out)
}

/// g-trace of a covariant symmetric tensor field.
pub fn trace_field(g: &MetricField, t: &SymTensorField) -> Result<ScalarField> {
    check_same_grid(g.grid(), &t.grid)?;
    let grid = g.grid().clone();
    let mut out = ScalarField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        out.data[idx] = tensor::trace(&g.ginv_at(idx), &t.at(idx));
    }
    Ok(out)
}

/// Traceless part of a covariant symmetric tensor field.
pub fn traceless_field(g: &MetricField, t: &SymTensorField) -> Result<SymTensorField> {
    check_same_grid(g.grid(), &t.grid)?;
    let grid = g.grid().clone();
    let mut out = SymTensorField::zeros(&grid, Variance::Covariant);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let tl = tensor::traceless_part(&g.g_at(idx), &g.ginv_at(idx), &t.at(idx));
        for c in 0..6 {
            out.comps[c][idx] = tl[c];
        }
    }
    Ok(out)
}

/// Divergence of the unbarred quotient tensor mu = rho^{-1} mu_bar with
/// respect to the unbarred metric g = rho^{-2} gbar, assuming mu is
/// trace-free:
///
///   (div_g mu)_c = rho (div_gbar mu_bar)_c - 2 (mu_bar . grad_gbar rho)_c.
///
/// Every derivative falls on barred data, so the result is valid up to the
/// boundary row (where it reduces to -2 mu_bar(grad rho, .), which vanishes
/// by transversality when mu_bar is an H-tensor).
pub fn div_conformal_quotient(
    gbar: &MetricField,
    rho: &(impl Fn(f64, f64, f64) -> crate::tensor::ScalarJet + Sync),
    mu_bar: &SymTensorField,
) -> Result<CovectorField> {
    let grid = gbar.grid().clone();
    let mut div = divergence_sym_field(gbar, mu_bar)?;
    for idx in 0..grid.len() {
        let (i, j, k) = grid.unidx(idx);
        let (t, b, p) = grid.coords(i, j, k);
        let rj = rho(t, b, p);
        let gi = gbar.ginv_at(idx);
        let grad: Vec3 = tensor::raise(&gi, &rj.d);
        let m = mu_bar.at(idx);
        for c in 0..3 {
            let mut contr = 0.0;
            for d in 0..3 {
                contr += tensor::sym_get(&m, d, c) * grad[d];
            }
            div.comps[c][idx] = rj.v * div.comps[c][idx] - 2.0 * contr;
        }
    }
    Ok(div)
}

/// Quotient z / rho with the boundary row evaluated as the one-sided
/// l'Hopital limit d_b z / d_b rho (rho vanishes linearly on the row).
pub fn boundary_quotient_scalar(z: &ScalarField, rho: &ScalarField) -> ScalarField {
    let grid = z.grid.clone();
    let dz = grid.deriv(1, 1, &z.data, 1.0);
    let drho = grid.deriv(1, 1, &rho.data, 1.0);
    let mut out = ScalarField::zeros(&grid);
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        out.data[idx] = if grid.on_boundary(j) {
            dz[idx] / drho[idx]
        } else {
            z.data[idx] / rho.data[idx]
        };
    }
    out
}

pub fn boundary_quotient_sym(z: &SymTensorField, rho: &ScalarField) -> SymTensorField {
    let grid = z.grid.clone();
    let drho = grid.deriv(1, 1, &rho.data, 1.0);
    let mut out = SymTensorField::zeros(&grid, z.variance);
    for c in 0..6 {
        let dz = grid.deriv(1, 1, &z.comps[c], SYM_PARITY[c]);
        for idx in 0..grid.len() {
            let (_, j, _) = grid.unidx(idx);
            out.comps[c][idx] = if grid.on_boundary(j) {
                dz[idx] / drho[idx]
            } else {
                z.comps[c][idx] / rho.data[idx]
            };
        }
    }
    out
}

/// Volume integral of a scalar against dV_g (trapezoid-type quadrature).
pub fn integrate_scalar(g: &MetricField, f: &ScalarField) -> Result<f64> {
    check_same_grid(g.grid(), &f.grid)?;
    let grid = g.grid().clone();
    let wt = grid.quad_weights(0);
    let wb = grid.quad_weights(1);
    let wp = grid.quad_weights(2);
    let (nt, nb, np) = grid.shape();
    let jmin = g.jmin();
    let mut acc = 0.0;
    for i in 0..nt {
        for j in jmin..nb {
            for k in 0..np {
                let idx = grid.idx(i, j, k);
                let det = tensor::sym_det(&g.g_at(idx));
                if det > 0.0 {
                    acc += f.data[idx] * det.sqrt() * wt[i] * wb[j] * wp[k];
                }
            }
        }
    }
    Ok(acc)
}

/// Inner product of two covariant symmetric tensor fields under dV_g.
pub fn l2_inner_sym(g: &MetricField, s: &SymTensorField, t: &SymTensorField) -> Result<f64> {
    let grid = g.grid().clone();
    let mut pt = ScalarField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        pt.data[idx] = tensor::inner_sym(&g.ginv_at(idx), &s.at(idx), &t.at(idx));
    }
    integrate_scalar(g, &pt)
}

/// Inner product of two vector fields under dV_g.
pub fn l2_inner_vec(g: &MetricField, v: &VectorField, w: &VectorField) -> Result<f64> {
    let grid = g.grid().clone();
    let mut pt = ScalarField::zeros(&grid);
    let jmin = g.jmin();
    for idx in 0..grid.len() {
        let (_, j, _) = grid.unidx(idx);
        if j < jmin {
            continue;
        }
        let gv = g.g_at(idx);
        let vv: Vec3 = std::array::from_fn(|c| v.comps[c][idx]);
        let wv: Vec3 = std::array::from_fn(|c| w.comps[c][idx]);
        let lw = tensor::lower(&gv, &wv);
        pt.data[idx] = (0..3).map(|a| vv[a] * lw[a]).sum();
    }
    integrate_scalar(g, &pt)
}

/// Sup over rows away from the boundary of |f| (used for interior residuals).
pub fn interior_sup(f: &ScalarField, skip_rows: usize) -> f64 {
    let grid = &f.grid;
    let (nt, nb, np) = grid.shape();
    let mut m = 0.0f64;
    for i in 0..nt {
        for j in skip_rows..nb {
            for k in 0..np {
                m = m.max(f.data[grid.idx(i, j, k)].abs());
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ChartGrid;
    use crate::models;

    fn hyper_metric(grid: &Arc<ChartGrid>) -> MetricField {
        MetricField::new(models::metric_hyperbolic(grid), DerivDomain::Interior).unwrap()
    }

    fn flat_metric(grid: &Arc<ChartGrid>) -> MetricField {
        MetricField::new(models::metric_euclidean(grid), DerivDomain::Full).unwrap()
    }

    #[test]
    fn flat_curvature_small() {
        // near the polar axis the error constant is large; check magnitude at
        // moderate resolution and fourth-order decay under refinement
        let mut sups = Vec::new();
        for nb in [17usize, 33] {
            let grid = ChartGrid::log_polar(-0.5, 0.5, 2 * nb - 1, nb, 1, false, 4).unwrap();
            let g = flat_metric(&grid);
            let r = scalar_curvature(&g);
            sups.push(r.sup_norm());
        }
        assert!(sups[1] < 1.5e-3, "R[g_E] sup = {}", sups[1]);
        let order = (sups[0] / sups[1]).log2();
        assert!(order > 3.0, "flat curvature order {order}, sups {sups:?}");
    }

    #[test]
    fn hyperbolic_curvature_minus_six() {
        // plain FD on the unbarred metric is an interior tool: components grow
        // like sec^2 b toward y = 0 and are not FD-resolvable there, so skip a
        // boundary collar.  The weighted (barred) path covers the collar.
        let grid = ChartGrid::log_polar(-0.5, 0.5, 33, 33, 1, false, 4).unwrap();
        let g = hyper_metric(&grid);
        let r = scalar_curvature(&g);
        let (nt, nb, np) = grid.shape();
        let mut worst = 0.0f64;
        for i in 0..nt {
            for j in 0..nb {
                for k in 0..np {
                    let (_, b, _) = grid.coords(i, j, k);
                    if b <= 1.1 {
                        worst = worst.max((r.data[grid.idx(i, j, k)] + 6.0).abs());
                    }
                }
            }
        }
        assert!(worst < 5e-3, "max |R + 6| = {worst} away from the boundary");
        // the weighted path is the production evaluation: exact structure up
        // to the boundary row
        let ge = flat_metric(&grid);
        let rw = scalar_curvature_weighted(&ge, &|t, b, _| models::y_jet(t, b));
        let mut worst = 0.0f64;
        for v in &rw.data {
            worst = worst.max((v + 6.0).abs());
        }
        assert!(worst < 1e-4, "weighted |R + 6| = {worst}");
    }

    #[test]
    fn weighted_curvature_path_matches() {
        // R[y^{-2} g_E] computed via the conformal formula must be -6 exactly
        // up to the FD error of R[g_E]
        let grid = ChartGrid::log_polar(-0.5, 0.5, 33, 33, 1, false, 4).unwrap();
        let gb = flat_metric(&grid);
        let r = scalar_curvature_weighted(&gb, &|t, b, _| models::y_jet(t, b));
        let (nt, nb, np) = grid.shape();
        for i in 0..nt {
            for j in 0..nb {
                for k in 0..np {
                    let v = r.data[grid.idx(i, j, k)];
                    assert!((v + 6.0).abs() < 5e-4, "weighted R = {v} at j = {j}");
                }
            }
        }
    }

    #[test]
    fn laplacian_hyperbolic_of_y() {
        // Lap_{breve g} y = -y on the half space
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 33, 1, false, 4).unwrap();
        let g = hyper_metric(&grid);
        let y = models::y_field(&grid);
        let lap = laplacian_field(&g, &y).unwrap();
        let (nt, nb, np) = grid.shape();
        for i in 2..nt - 2 {
            for j in 0..nb {
                for k in 0..np {
                    let (_, b, _) = grid.coords(i, j, k);
                    if b > 1.05 {
                        continue; // unbarred FD is an interior tool
                    }
                    let idx = grid.idx(i, j, k);
                    let want = -y.data[idx];
                    assert!(
                        (lap.data[idx] - want).abs() < 1e-3 * (1.0 + want.abs()),
                        "Lap y = {} want {want}",
                        lap.data[idx]
                    );
                }
            }
        }
    }

    #[test]
    fn hessian_flat_linear_vanishes() {
        // axisymmetric linear function: f = y
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 17, 1, false, 4).unwrap();
        let g = flat_metric(&grid);
        let f = models::y_field(&grid);
        let h = hessian_field(&g, &f).unwrap();
        let mut worst = 0.0f64;
        for c in 0..6 {
            for v in &h.comps[c] {
                worst = worst.max(v.abs());
            }
        }
        assert!(worst < 2e-4, "Hessian of y = {worst}");
        // full-3d spot check with a non-axisymmetric linear function
        let grid3 = ChartGrid::log_polar(-0.5, 0.5, 17, 17, 16, false, 4).unwrap();
        let g3 = flat_metric(&grid3);
        let f3 = ScalarField::from_fn(&grid3, |t, b, p| {
            let r = t.exp();
            2.0 * r * b.sin() * p.cos() + r * b.cos()
        });
        let h3 = hessian_field(&g3, &f3).unwrap();
        let mut worst = 0.0f64;
        for c in 0..6 {
            for v in &h3.comps[c] {
                worst = worst.max(v.abs());
            }
        }
        assert!(worst < 5e-3, "3d Hessian of linear function = {worst}");
    }

    #[test]
    fn laplacian_is_trace_of_hessian() {
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 17, 1, false, 4).unwrap();
        let g = flat_metric(&grid);
        let f = ScalarField::from_fn(&grid, |t, b, _| (t * 1.3).sin() * b.cos());
        let h = hessian_field(&g, &f).unwrap();
        let tr = trace_field(&g, &h).unwrap();
        let lap = laplacian_field(&g, &f).unwrap();
        for idx in 0..grid.len() {
            assert!((tr.data[idx] - lap.data[idx]).abs() < 1e-10);
        }
    }

    #[test]
    fn conformal_killing_kernel_fields() {
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 17, 1, false, 4).unwrap();
        let g = flat_metric(&grid);
        // dilation field: position vector = r d_r = d_t in log coordinates
        let mut w = VectorField::zeros(&grid);
        for v in &mut w.comps[0] {
            *v = 1.0;
        }
        let d = conformal_killing_field(&g, &w).unwrap();
        assert!(d.sup_norm() < 1e-7, "dilation: {}", d.sup_norm());
        // trace-free for random fields
        let w = VectorField {
            grid: grid.clone(),
            comps: [
                ScalarField::from_fn(&grid, |t, b, _| (t + b).sin()).data,
                ScalarField::from_fn(&grid, |t, b, _| (t * b).cos() * b.sin()).data,
                ScalarField::from_fn(&grid, |_, _, _| 0.0).data,
            ],
        };
        let d = conformal_killing_field(&g, &w).unwrap();
        let tr = trace_field(&g, &d).unwrap();
        assert!(tr.sup_norm() < 1e-10, "trace = {}", tr.sup_norm());
    }

    #[test]
    fn divergence_of_constant_tensor_flat() {
        // constant Cartesian tensor: in log-polar components it is not
        // constant, so this checks the Christoffel terms; use g_E itself.
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 17, 1, false, 4).unwrap();
        let g = flat_metric(&grid);
        let t = models::metric_euclidean(&grid);
        let div = divergence_sym_field(&g, &t).unwrap();
        let mut worst = 0.0f64;
        for c in 0..3 {
            for v in &div.comps[c] {
                worst = worst.max(v.abs());
            }
        }
        assert!(worst < 1e-8, "div g_E = {worst}");
    }

    #[test]
    fn vector_laplacian_kills_conformal_killing_fields() {
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 17, 1, false, 4).unwrap();
        let g = flat_metric(&grid);
        let mut w = VectorField::zeros(&grid);
        for v in &mut w.comps[0] {
            *v = 1.0; // dilation
        }
        let lw = vector_laplacian_apply(&g, &w).unwrap();
        assert!(lw.sup_norm() < 1e-6, "L(dilation) = {}", lw.sup_norm());
    }

    #[test]
    fn adjointness_under_quadrature() {
        // <D_g W, T> ~ <W, -(div_g T)^sharp> for compactly supported fields
        let grid = ChartGrid::log_polar(-1.0, 1.0, 49, 33, 1, false, 4).unwrap();
        let g = flat_metric(&grid);
        let bump = |t: f64, b: f64| {
            let s = (1.0 - (t / 0.8) * (t / 0.8)).max(0.0);
            let c = (1.0 - ((b - 0.8) / 0.5) * ((b - 0.8) / 0.5)).max(0.0);
            (s * s * c * c) as f64
        };
        let w = VectorField {
            grid: grid.clone(),
            comps: [
                ScalarField::from_fn(&grid, |t, b, _| bump(t, b) * (1.0 + t)).data,
                ScalarField::from_fn(&grid, |t, b, _| bump(t, b) * b.sin() * b.sin()).data,
                ScalarField::from_fn(&grid, |_, _, _| 0.0).data,
            ],
        };
        let mut tf = SymTensorField::zeros(&grid, Variance::Covariant);
        let t0 = ScalarField::from_fn(&grid, |t, b, _| bump(t, b) * (t - b).cos());
        tf.comps[0] = t0.data.clone();
        tf.comps[3] = t0.data.iter().map(|v| -v).collect();
        let dw = conformal_killing_field(&g, &w).unwrap();
        let lhs = l2_inner_sym(&g, &dw, &tf).unwrap();
        let div = divergence_sym_field(&g, &tf).unwrap();
        let mdivs = sharp(&g, &div).unwrap();
        let rhs = -l2_inner_vec(&g, &w, &mdivs).unwrap();
        let scale = lhs.abs().max(rhs.abs()).max(1e-12);
        assert!(
            (lhs - rhs).abs() < 2e-3 * scale,
            "adjointness: {lhs} vs {rhs} (rel {})",
            (lhs - rhs).abs() / scale
        );
    }

    #[test]
    fn boundary_quotient_limits() {
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 33, 1, false, 4).unwrap();
        // z = y^2 * smooth, rho = y: quotient should be y * smooth with
        // boundary row 0
        let y = models::y_field(&grid);
        let z = ScalarField::from_fn(&grid, |t, b, _| {
            let yv = t.exp() * b.cos();
            yv * yv * (1.0 + 0.3 * t)
        });
        let q = boundary_quotient_scalar(&z, &y);
        let (nt, nb, np) = grid.shape();
        for i in 0..nt {
            for j in 0..nb {
                for k in 0..np {
                    let idx = grid.idx(i, j, k);
                    let (t, b, _) = grid.coords(i, j, k);
                    let want = t.exp() * b.cos() * (1.0 + 0.3 * t);
                    assert!(
                        (q.data[idx] - want).abs() < 1e-5 * (1.0 + want.abs()),
                        "quotient {} want {want} at j={j}",
                        q.data[idx]
                    );
                }
            }
        }
        // rho itself: quotient = 1 including on the row
        let q = boundary_quotient_scalar(&y, &y);
        for v in &q.data {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_norm_examples() {
        let grid = ChartGrid::log_polar(-0.5, 0.5, 17, 17, 1, false, 4).unwrap();
        let g = flat_metric(&grid);
        // |g|^2_g = 3 in dimension 3
        let n2 = tensor_norm2_field(&g, &g.tensor).unwrap();
        for v in &n2.data {
            assert!((v - 3.0).abs() < 1e-11);
        }
        // |dy|^2_{breve g} = y^2
        let gh = hyper_metric(&grid);
        let y = models::y_field(&grid);
        let dy = {
            let mut cov = CovectorField::zeros(&grid);
            for a in 0..3 {
                cov.comps[a] = grid.deriv(a, 1, &y.data, 1.0);
            }
            cov
        };
        let n2 = covector_norm2_field(&gh, &dy).unwrap();
        let (nt, nb, np) = grid.shape();
        for i in 2..nt - 2 {
            for j in 1..nb {
                for k in 0..np {
                    let idx = grid.idx(i, j, k);
                    let want = y.data[idx] * y.data[idx];
                    assert!(
                        (n2.data[idx] - want).abs() < 1e-5 * (1.0 + want),
                        "|dy|^2 = {} want {want} at j={j}",
                        n2.data[idx]
                    );
                }
            }
        }
    }

    #[test]
    fn conformal_curvature_check_against_symbolic() {
        // R[phi^4 g_E] = phi^{-5}(-8 Lap_E phi) for smooth phi; compare the
        // plain FD curvature against the independent conformal expansion.
        let grid = ChartGrid::log_polar(-0.4, 0.4, 25, 25, 1, false, 4).unwrap();
        let phi = |t: f64, b: f64| 1.0 + 0.1 * (t * 1.1).sin() * (2.0 * b).cos();
        let gphp = models::sym_from_fn(&grid, |t, b, _| {
            let p4 = phi(t, b).powi(4);
            let ge = models::euclidean_components(t, b);
            std::array::from_fn(|c| p4 * ge[c])
        });
        let gconf = MetricField::new(gphp_fix(gphp), DerivDomain::Full).unwrap();
        let r = scalar_curvature(&gconf);
        let ge = flat_metric(&grid);
        let phif = ScalarField::from_fn(&grid, |t, b, _| phi(t, b));
        let lap = laplacian_field(&ge, &phif).unwrap();
        let (nt, nb, np) = grid.shape();
        for i in 2..nt - 2 {
            for j in 1..nb - 2 {
                for k in 0..np {
                    let idx = grid.idx(i, j, k);
                    let want = -8.0 * lap.data[idx] / phif.data[idx].powi(5);
                    assert!(
                        (r.data[idx] - want).abs() < 5e-4 * (1.0 + want.abs()),
                        "conformal R {} vs {want}",
                        r.data[idx]
                    );
                }
            }
        }
    }

    fn gphp_fix(t: SymTensorField) -> SymTensorField {
        t
    }
}
