//! Numerical estimators for the weighted Hoelder norms C^{k,alpha}_delta(.;w)
//! and the intermediate norms built from background covariant derivatives.
//!
//! Norms are measured exactly the way they are defined: fields are pulled
//! back through a cover of Moebius parametrizations to a sample lattice on
//! the unit hyperbolic ball, differentiated there in Euclidean coordinates,
//! and weighted by w(center)^{-delta}.  Discrete sup norms under-estimate
//! true sups, so every acceptance test compares estimator outputs across
//! epsilon or across refinement, never against exact Hoelder values.

use crate::error::{Error, Result};
use crate::grid::{
    ChartGrid, CovectorField, ScalarField, SymTensorField, Variance, VectorField,
};
use crate::ops::MetricField;
use crate::tensor::Christoffel;
use rayon::prelude::*;
use std::sync::Arc;

/// A positive weight function with a name tag.
#[derive(Clone)]
pub struct WeightFunction {
    pub tag: String,
    eval: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
}

impl WeightFunction {
    pub fn new(tag: &str, eval: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        WeightFunction { tag: tag.into(), eval: Arc::new(eval) }
    }

    pub fn value(&self, t: f64, b: f64, p: f64) -> f64 {
        (self.eval)(t, b, p)
    }

    pub fn y() -> Self {
        WeightFunction::new("y", |t, b, _| t.exp() * b.cos())
    }

    pub fn breve_rho() -> Self {
        WeightFunction::new("breve_rho", |t, b, _| crate::models::breve_rho_value(t, b))
    }

    pub fn one() -> Self {
        WeightFunction::new("one", |_, _, _| 1.0)
    }
}

impl std::fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "WeightFunction({})", self.tag)
    }
}

/// Specification of a weighted or intermediate norm.
#[derive(Clone, Debug)]
pub struct NormSpec {
    pub k: usize,
    pub alpha: f64,
    pub delta: f64,
    /// Number of background-derivative layers (0 = plain weighted norm).
    pub m: usize,
    pub weight: WeightFunction,
}

impl NormSpec {
    pub fn weighted(k: usize, alpha: f64, delta: f64, weight: WeightFunction) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
        }
        Ok(NormSpec { k, alpha, delta, m: 0, weight })
    }

    pub fn intermediate(k: usize, alpha: f64, m: usize, weight: WeightFunction) -> Result<Self> {
        if m > k {
            return Err(Error::Config(format!("need m <= k, got m={m}, k={k}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
        }
        Ok(NormSpec { k, alpha, delta: 0.0, m, weight })
    }
}

/// Result of a norm estimation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub cover_size: usize,
    pub resolution_note: String,
}

/// Region over which a norm is estimated (selects cover centers).
#[derive(Clone, Copy, Debug)]
pub enum NormRegion {
    All,
    /// Annulus A_c in the chart's own radial coordinate: |t| < ln(1/c).
    Annulus { c: f64 },
    /// Explicit t-window.
    TWindow { lo: f64, hi: f64 },
}

impl NormRegion {
    fn contains_t(&self, t: f64) -> bool {
        match *self {
            NormRegion::All => true,
            NormRegion::Annulus { c } => t.abs() < -(c.ln()),
            NormRegion::TWindow { lo, hi } => t >= lo && t <= hi,
        }
    }
}

/// A general tensor field with explicit per-index variance, used only by the
/// norm machinery (ranks up to 4 appear via background derivatives).
#[derive(Clone, Debug)]
pub struct GenField {
    pub grid: Arc<ChartGrid>,
    pub variances: Vec<Variance>,
    /// comps[flat index], flat = sum i_k 3^(rank-1-k)
    pub comps: Vec<Vec<f64>>,
}

fn flat_index(idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * 3 + i)
}

fn unflatten(mut flat: usize, rank: usize) -> Vec<usize> {
    let mut out = vec![0; rank];
    for k in (0..rank).rev() {
        out[k] = flat % 3;
        flat /= 3;
    }
    out
}

fn comp_parity(idx: &[usize]) -> f64 {
    let nb = idx.iter().filter(|&&i| i == 1).count();
    if nb % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl GenField {
    pub fn rank(&self) -> usize {
        self.variances.len()
    }

    pub fn from_scalar(f: &ScalarField) -> GenField {
        GenField { grid: f.grid.clone(), variances: vec![], comps: vec![f.data.clone()] }
    }

    pub fn from_covector(f: &CovectorField) -> GenField {
        GenField {
            grid: f.grid.clone(),
            variances: vec![Variance::Covariant],
            comps: f.comps.iter().cloned().collect(),
        }
    }

    pub fn from_vector(f: &VectorField) -> GenField {
        GenField {
            grid: f.grid.clone(),
            variances: vec![Variance::Contravariant],
            comps: f.comps.iter().cloned().collect(),
        }
    }

    pub fn from_sym(f: &SymTensorField) -> GenField {
        let mut comps = vec![vec![0.0; f.grid.len()]; 9];
        for a in 0..3 {
            for b in 0..3 {
                comps[a * 3 + b] = f.comps[crate::grid::sym_flat(a, b)].clone();
            }
        }
        GenField { grid: f.grid.clone(), variances: vec![f.variance; 2], comps }
    }

    /// Tensor weight: covariant rank minus contravariant rank.
    pub fn weight(&self) -> i32 {
        self.variances
            .iter()
            .map(|v| if *v == Variance::Covariant { 1 } else { -1 })
            .sum()
    }
}

/// Background covariant derivative: adds one covariant index in front.
pub fn background_derivative(bg: &MetricField, u: &GenField) -> GenField {
    let grid = u.grid.clone();
    let rank = u.rank();
    let n = grid.len();
    let ncomp_out = 3usize.pow(rank as u32 + 1);
    // partial derivatives of every component
    let mut partials: Vec<Vec<f64>> = Vec::with_capacity(3 * u.comps.len());
    for a in 0..3 {
        for (ci, comp) in u.comps.iter().enumerate() {
            let idx = unflatten(ci, rank);
            let mut out = vec![0.0; n];
            grid.deriv_domain_into(a, 1, comp, comp_parity(&idx), bg.domain, &mut out);
            partials.push(out);
        }
    }
    let mut comps = vec![vec![0.0; n]; ncomp_out];
    for flat_out in 0..ncomp_out {
        let idx_out = unflatten(flat_out, rank + 1);
        let a = idx_out[0];
        let inner = &idx_out[1..];
        let flat_in = flat_index(inner);
        let base = &partials[a * u.comps.len() + flat_in];
        comps[flat_out].copy_from_slice(base);
    }
    // Christoffel corrections
    let jmin = if bg.domain == crate::grid::DerivDomain::Interior { 1 } else { 0 };
    for node in 0..n {
        let (_, j, _) = grid.unidx(node);
        if j < jmin {
            continue;
        }
        let gm: Christoffel = bg.gamma_at(node);
        for flat_out in 0..ncomp_out {
            let idx_out = unflatten(flat_out, rank + 1);
            let a = idx_out[0];
            let inner = &idx_out[1..];
            let mut corr = 0.0;
            for (slot, &ik) in inner.iter().enumerate() {
                for c in 0..3 {
                    let mut repl = inner.to_vec();
                    repl[slot] = c;
                    let uval = u.comps[flat_index(&repl)][node];
                    match u.variances[slot] {
                        Variance::Covariant => {
                            corr -= gm[c][crate::grid::sym_flat(a, ik)] * uval;
                        }
                        Variance::Contravariant => {
                            corr += gm[ik][crate::grid::sym_flat(a, c)] * uval;
                        }
                    }
                }
            }
            comps[flat_out][node] += corr;
        }
    }
    let mut variances = vec![Variance::Covariant];
    variances.extend_from_slice(&u.variances);
    GenField { grid, variances, comps }
}

// ---------------------------------------------------------------------------
// Moebius cover and the chart-wise estimator
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct CoverChart {
    /// chart coordinates of the center (t, b); the azimuth is 0 by symmetry
    /// for axisymmetric grids, or a grid azimuth otherwise.
    pub t: f64,
    pub b: f64,
    pub p: f64,
}

/// Generate a Moebius cover: centers on a lattice with hyperbolic separation
/// about `sep` (overlap factor 2 for sep = 0.5), restricted to the region.
pub fn generate_cover(grid: &Arc<ChartGrid>, region: NormRegion, sep: f64) -> Vec<CoverChart> {
    let mut out = Vec::new();
    let taxis = &grid.axes[0];
    let (t_lo, t_hi) = (taxis.lo(), taxis.hi());
    let periodic = matches!(taxis.topology, crate::grid::AxisTopology::Periodic);
    let nb = grid.axes[1].n();
    // angular rows with cumulative hyperbolic spacing ~ sep, skipping y = 0
    let mut rows = Vec::new();
    let mut acc = f64::INFINITY;
    for j in (1..nb).rev() {
        // walk from the axis toward the boundary accumulating sec(b) db
        let b = grid.axes[1].nodes[j];
        let db = if j + 1 < nb {
            (grid.axes[1].nodes[j] - grid.axes[1].nodes[j + 1]).abs()
        } else {
            grid.axes[1].nodes[j].abs()
        };
        acc += db / b.cos().max(1e-12);
        if acc >= sep {
            rows.push(j);
            acc = 0.0;
        }
    }
    for &j in &rows {
        let b = grid.axes[1].nodes[j];
        let cosb = b.cos();
        let dt = (sep * cosb).max(3.0 * taxis.spacing().abs());
        // keep the whole unit ball inside a bounded t-axis
        let margin = if periodic { 0.0 } else { 1.2 * cosb + 2.0 * taxis.spacing().abs() };
        let mut t = t_lo + margin;
        while t <= t_hi - margin + 1e-12 {
            if region.contains_t(t) {
                if grid.axisymmetric() {
                    out.push(CoverChart { t, b, p: 0.0 });
                } else {
                    for k in (0..grid.axes[2].n()).step_by((grid.axes[2].n() / 8).max(1)) {
                        out.push(CoverChart { t, b, p: grid.axes[2].nodes[k] });
                    }
                }
            }
            t += dt;
        }
    }
    out
}

/// Sample lattice geometry on the bounding box of the unit hyperbolic ball.
struct BallLattice {
    pts: Vec<[f64; 3]>,    // (xi1, xi2, upsilon)
    in_ball: Vec<bool>,
    n: usize, // per-axis count
    h: [f64; 3],
}

fn ball_lattice(n: usize) -> BallLattice {
    let e = std::f64::consts::E;
    let xr = 1.1752; // sinh(1)
    let (ylo, yhi) = (1.0 / e, e);
    let mut pts = Vec::with_capacity(n * n * n);
    let mut in_ball = Vec::with_capacity(n * n * n);
    let hx = 2.0 * xr / (n - 1) as f64;
    let hy = (yhi - ylo) / (n - 1) as f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let x1 = -xr + a as f64 * hx;
                let x2 = -xr + b as f64 * hx;
                let y = ylo + c as f64 * hy;
                pts.push([x1, x2, y]);
                let q = (x1 * x1 + x2 * x2 + (y - 1.0) * (y - 1.0)) / (2.0 * y);
                in_ball.push(libm::acosh(1.0 + q) < 1.0);
            }
        }
    }
    BallLattice { pts, in_ball, n, h: [hx, hx, hy] }
}

/// Jacobian dx^A/dq^a at chart coordinates (t, b, p).
fn chart_jacobian(t: f64, b: f64, p: f64) -> [[f64; 3]; 3] {
    let et = t.exp();
    let (sb, cb) = b.sin_cos();
    let (sp, cp) = p.sin_cos();
    let x1 = et * sb * cp;
    let x2 = et * sb * sp;
    let y = et * cb;
    [
        [x1, et * cb * cp, -x2],
        [x2, et * cb * sp, x1],
        [y, -et * sb, 0.0],
    ]
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let inv = |r: usize, c: usize| -> f64 {
        let (r1, r2) = match r {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (c1, c2) = match c {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let minor = m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
        let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor / det
    };
    // note transpose: (m^{-1})[c][r] = cofactor(r,c)/det
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[c][r] = inv(r, c);
        }
    }
    out
}

/// Pull back every component of `u` to the chart lattice in Cartesian frame.
///
/// Returns per-component sample arrays (flattened lattice) or a resolution
/// error if samples cannot be interpolated.
fn pull_back(
    u: &GenField,
    chart: &CoverChart,
    lat: &BallLattice,
) -> Result<Vec<Vec<f64>>> {
    let grid = &u.grid;
    let rank = u.rank();
    let ncomp = u.comps.len();
    let rc = chart.t.exp();
    let yc = rc * chart.b.cos();
    let xc = rc * chart.b.sin();
    if yc <= 0.0 {
        return Err(Error::Resolution("Moebius center on the boundary".into()));
    }
    let mut out = vec![vec![0.0; lat.pts.len()]; ncomp];
    for (s, pt) in lat.pts.iter().enumerate() {
        // chart center azimuth chart.p: place center at x = (xc cos p, xc sin p)
        let (cp0, sp0) = (chart.p.cos(), chart.p.sin());
        let x1 = xc * cp0 + yc * (pt[0] * cp0 - pt[1] * sp0);
        let x2 = xc * sp0 + yc * (pt[0] * sp0 + pt[1] * cp0);
        let y = yc * pt[2];
        let r = (x1 * x1 + x2 * x2 + y * y).sqrt();
        let t = r.ln();
        let b = (y / r).clamp(-1.0, 1.0).acos();
        let p = x2.atan2(x1);
        // interpolate raw chart-frame components (one plan per point)
        let plan = grid.interp_plan(t, b, p)?;
        let mut raw = vec![0.0; ncomp];
        for ci in 0..ncomp {
            let idx = unflatten(ci, rank);
            raw[ci] = plan.apply(grid, &u.comps[ci], comp_parity(&idx));
        }
        // transform to Cartesian frame and apply the Moebius scaling y_c
        let jac = chart_jacobian(t, b, p);
        let jinv = invert3(&jac);
        for flat_out in 0..ncomp {
            let idx_out = unflatten(flat_out, rank);
            let mut acc = 0.0;
            for flat_in in 0..ncomp {
                let idx_in = unflatten(flat_in, rank);
                let mut factor = 1.0;
                for slot in 0..rank {
                    factor *= match u.variances[slot] {
                        // covariant: T_A = (J^{-1})^a_A T_a, and Phi* scales by y_c
                        Variance::Covariant => jinv[idx_in[slot]][idx_out[slot]] * yc,
                        // contravariant: V^A = J^A_a V^a, Phi* scales by 1/y_c
                        Variance::Contravariant => jac[idx_out[slot]][idx_in[slot]] / yc,
                    };
                    if factor == 0.0 {
                        break;
                    }
                }
                if factor != 0.0 {
                    acc += factor * raw[flat_in];
                }
            }
            out[flat_out][s] = acc;
        }
    }
    Ok(out)
}

/// Discrete C^{k,alpha} norm of pulled-back samples on the ball lattice:
/// sup of all derivatives up to order k plus the top-order Hoelder quotient.
fn lattice_holder_norm(samples: &[Vec<f64>], lat: &BallLattice, k: usize, alpha: f64) -> f64 {
    let n = lat.n;
    let at = |a: usize, b: usize, c: usize| a * n * n + b * n + c;
    // derivative stacks per component: start with values, differentiate
    let mut level: Vec<Vec<Vec<f64>>> = samples.iter().map(|s| vec![s.clone()]).collect();
    let mut norm = 0.0f64;
    // order 0 sup
    for s in samples {
        for (i, v) in s.iter().enumerate() {
            if lat.in_ball[i] {
                norm = norm.max(v.abs());
            }
        }
    }
    for order in 1..=k {
        for comp_stack in level.iter_mut() {
            let prev: Vec<Vec<f64>> = comp_stack.drain(..).collect();
            let mut next = Vec::new();
            for arr in prev {
                for (axis, h) in [(0usize, lat.h[0]), (1, lat.h[1]), (2, lat.h[2])] {
                    let mut d = vec![0.0; arr.len()];
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                let (ia, ib, ic) = (a, b, c);
                                let v = match axis {
                                    0 if a > 0 && a < n - 1 => {
                                        (arr[at(a + 1, b, c)] - arr[at(a - 1, b, c)]) / (2.0 * h)
                                    }
                                    1 if b > 0 && b < n - 1 => {
                                        (arr[at(a, b + 1, c)] - arr[at(a, b - 1, c)]) / (2.0 * h)
                                    }
                                    2 if c > 0 && c < n - 1 => {
                                        (arr[at(a, b, c + 1)] - arr[at(a, b, c - 1)]) / (2.0 * h)
                                    }
                                    _ => 0.0,
                                };
                                d[at(ia, ib, ic)] = v;
                            }
                        }
                    }
                    next.push(d);
                }
            }
            // interior band where derivatives are valid shrinks with order;
            // the in-ball mask plus central differencing keeps this honest
            for arr in &next {
                for (i, v) in arr.iter().enumerate() {
                    if lat.in_ball[i] {
                        norm = norm.max(v.abs());
                    }
                }
            }
            if order == k {
                // Hoelder seminorm: difference quotients between ball points
                // within unit distance
                for arr in &next {
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                let i = at(a, b, c);
                                if !lat.in_ball[i] {
                                    continue;
                                }
                                // pair with forward neighbors at offsets <= 2
                                for (da, db, dc) in
                                    [(1, 0, 0), (0, 1, 0), (0, 0, 1), (2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (0, 1, 1), (1, 0, 1)]
                                {
                                    let (a2, b2, c2) = (a + da, b + db, c + dc);
                                    if a2 >= n || b2 >= n || c2 >= n {
                                        continue;
                                    }
                                    let i2 = at(a2, b2, c2);
                                    if !lat.in_ball[i2] {
                                        continue;
                                    }
                                    let dist = ((da as f64 * lat.h[0]).powi(2)
                                        + (db as f64 * lat.h[1]).powi(2)
                                        + (dc as f64 * lat.h[2]).powi(2))
                                    .sqrt();
                                    if dist > 1.0 || dist == 0.0 {
                                        continue;
                                    }
                                    let q = (arr[i] - arr[i2]).abs() / dist.powf(alpha);
                                    norm = norm.max(q);
                                }
                            }
                        }
                    }
                }
            }
            *comp_stack = next;
        }
    }
    norm
}

/// The main estimator: sup over the cover of w(center)^{-delta} times the
/// discrete chart norm, plus intermediate background-derivative terms when
/// spec.m > 0.  `background` is required for m > 0.
pub fn estimate_norm(
    u: &GenField,
    spec: &NormSpec,
    region: NormRegion,
    cover: &[CoverChart],
    background: Option<&MetricField>,
) -> Result<NormEstimate> {
    if cover.is_empty() {
        return Err(Error::Resolution("empty Moebius cover".into()));
    }
    let min_nodes = spec.k + 3;
    let lat_n = (spec.k + 4).clamp(7, 9);
    if lat_n < min_nodes {
        return Err(Error::Resolution(format!(
            "lattice of {lat_n} nodes cannot resolve {} derivatives",
            spec.k
        )));
    }
    let lat = ball_lattice(lat_n);
    let mut terms: Vec<(GenField, usize, f64)> = Vec::new(); // (field, k_j, delta_j)
    let base_weight = u.weight();
    terms.push((u.clone(), spec.k, if spec.m == 0 { spec.delta } else { f64::from(base_weight) }));
    if spec.m > 0 {
        let bg = background.ok_or_else(|| {
            Error::Config("intermediate norm requires a background connection".into())
        })?;
        let mut cur = u.clone();
        for j in 1..=spec.m {
            cur = background_derivative(bg, &cur);
            terms.push((cur.clone(), spec.k - j, f64::from(base_weight) + j as f64));
        }
    }
    let _ = region;
    let mut total = 0.0;
    for (field, kj, dj) in &terms {
        let chart_vals: Vec<f64> = cover
            .par_iter()
            .map(|chart| {
                let w = spec.weight.value(chart.t, chart.b, chart.p);
                match pull_back(field, chart, &lat) {
                    Ok(samples) => {
                        let nrm = lattice_holder_norm(&samples, &lat, *kj, spec.alpha);
                        w.powf(-dj) * nrm
                    }
                    Err(_) => 0.0,
                }
            })
            .collect();
        total += chart_vals.iter().fold(0.0f64, |m, v| m.max(*v));
    }
    Ok(NormEstimate {
        value: total,
        cover_size: cover.len(),
        resolution_note: format!("lattice {lat_n}^3, fd order 2"),
    })
}

/// Measured scaling-hypothesis constants (c_0, c_1, ..., c_k) of a weight.
pub fn check_scaling_hypotheses(
    w: &WeightFunction,
    cover: &[CoverChart],
    k: usize,
) -> Result<Vec<f64>> {
    if cover.is_empty() {
        return Err(Error::Resolution("empty cover".into()));
    }
    let lat = ball_lattice(7);
    let mut consts = vec![0.0f64; k + 1];
    for chart in cover {
        let rc = chart.t.exp();
        let yc = rc * chart.b.cos();
        let xc = rc * chart.b.sin();
        let wc = w.value(chart.t, chart.b, chart.p);
        if !(wc > 0.0) {
            return Err(Error::Precondition(format!(
                "weight {} nonpositive at cover center",
                w.tag
            )));
        }
        let mut samples = vec![0.0; lat.pts.len()];
        for (s, pt) in lat.pts.iter().enumerate() {
            let x1 = xc + yc * pt[0];
            let x2 = yc * pt[1];
            let y = yc * pt[2];
            let r = (x1 * x1 + x2 * x2 + y * y).sqrt();
            let t = r.ln();
            let b = (y / r).clamp(-1.0, 1.0).acos();
            let p = x2.atan2(x1);
            samples[s] = w.value(t, b, p);
            if !(samples[s] > 0.0) {
                return Err(Error::Precondition(format!(
                    "weight {} nonpositive on a chart sample",
                    w.tag
                )));
            }
        }
        // c0: two-sided ratio bound
        for (i, v) in samples.iter().enumerate() {
            if lat.in_ball[i] {
                consts[0] = consts[0].max(v / wc).max(wc / v);
            }
        }
        // c_j: C^j norms of the pullback over w(center)
        for j in 1..=k {
            let nrm = lattice_holder_norm(&[samples.clone()], &lat, j, 0.5);
            consts[j] = consts[j].max(nrm / wc);
        }
    }
    Ok(consts)
}

/// Measured equivalence constant sup(w1/w2) vee sup(w2/w1) over grid nodes in
/// a region.
pub fn weight_equivalence(
    grid: &Arc<ChartGrid>,
    w1: &WeightFunction,
    w2: &WeightFunction,
    region: NormRegion,
) -> f64 {
    let (nt, nb, np) = grid.shape();
    let mut c = 0.0f64;
    for i in 0..nt {
        for j in 1..nb {
            for k in 0..np {
                let (t, b, p) = grid.coords(i, j, k);
                if !region.contains_t(t) {
                    continue;
                }
                let a = w1.value(t, b, p);
                let bb = w2.value(t, b, p);
                if a > 0.0 && bb > 0.0 {
                    c = c.max(a / bb).max(bb / a);
                }
            }
        }
    }
    c
}

/// Least-squares slope of log(value) against log(weight): the measured decay
/// exponent of `u` relative to the weight.  Samples are per-node pairs
/// restricted to rows where the weight lies in [w_lo, w_hi].
pub fn fit_decay_exponent(
    u: &ScalarField,
    w: &WeightFunction,
    w_lo: f64,
    w_hi: f64,
) -> Option<f64> {
    let grid = &u.grid;
    let (nt, nb, np) = grid.shape();
    // sup of |u| within log-spaced weight bins
    const NBINS: usize = 12;
    let (llo, lhi) = (w_lo.ln(), w_hi.ln());
    let mut sups = vec![0.0f64; NBINS];
    let mut filled = vec![false; NBINS];
    for i in 0..nt {
        for j in 1..nb {
            for k in 0..np {
                let (t, b, p) = grid.coords(i, j, k);
                let wv = w.value(t, b, p);
                if wv < w_lo || wv > w_hi {
                    continue;
                }
                let bin = (((wv.ln() - llo) / (lhi - llo) * NBINS as f64) as usize).min(NBINS - 1);
                let v = u.data[grid.idx(i, j, k)].abs();
                if v > sups[bin] {
                    sups[bin] = v;
                }
                filled[bin] = true;
            }
        }
    }
    let pts: Vec<(f64, f64)> = (0..NBINS)
        .filter(|&b| filled[b] && sups[b] > 0.0)
        .map(|b| (llo + (b as f64 + 0.5) / NBINS as f64 * (lhi - llo), sups[b].ln()))
        .collect();
    fit_slope(&pts)
}

/// Simple least-squares slope of y against x.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Slope with a crude 95% half-width from the residual scatter.
pub fn fit_slope_with_ci(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let slope = fit_slope(pts)?;
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let xbar = sx / n;
    let ybar = sy / n;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let ss_x: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    if pts.len() <= 2 || ss_x == 0.0 {
        return Some((slope, 0.0));
    }
    let se = (ss_res / (n - 2.0) / ss_x).sqrt();
    Some((slope, 2.0 * se))
}
