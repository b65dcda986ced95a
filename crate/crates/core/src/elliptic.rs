//! Discretized elliptic solves on the glued (or seed) geometry: the vector
//! Laplacian equation for W, the approximate Lichnerowicz solution theta, the
//! Picard/Newton solves for the conformal factor, and empirical uniform-
//! invertibility studies.
//!
//! Every operator is written in a conformal gauge (w, gbar) with g = w^{-2}
//! gbar, so finite differences only ever touch barred data:
//!   Delta_g u      = w^2 Delta_gbar u - w <dw, du>_gbar,
//!   L_g W          = -w^2 (div_gbar T)^sharp + 3 w (T . dw)^sharp,
//!                    with T = D_gbar W (the conformal Killing operator is
//!                    conformally covariant),
//!   div_g (w^-1 S) = w (div_gbar S) - 2 (S . dw)  for trace-free S.
//! Matrices are assembled from the matrix-free applications by comb probing
//! and verified against a random application before use.

use crate::error::{Error, Result};
use crate::grid::{ChartGrid, ScalarField, SymTensorField, VectorField, BOUNDARY_J};
use crate::linalg::{PeriodicBandLu, PeriodicBandSystem};
use crate::ops::{self, MetricField};
use crate::splicing::{SplicedGeometry, SplicedMomentum};
use crate::tensor::{self, ScalarJet, Vec3};
use rand::Rng;
use serde::Serialize;
use std::sync::Arc;

/// Weight floor of the C^0_delta residual estimators; below this scale the
/// f64 round-off of the factorized solve dominates the weighted residual.
pub const WEIGHT_FLOOR: f64 = 0.02;

/// Solver parameters.
#[derive(Clone, Copy, Debug, Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// relative linear tolerance used in consistency checks
    pub linear_tol: f64,
    /// nonlinear tolerance on the weighted Lichnerowicz residual
    pub nonlinear_tol: f64,
    pub max_picard: usize,
    pub newton_fallback: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            linear_tol: 1e-10,
            nonlinear_tol: 1e-9,
            max_picard: 50,
            newton_fallback: false,
        }
    }
}

/// A conformal solve context: barred metric plus the weight jets.
pub struct SolveGauge<'a> {
    pub grid: Arc<ChartGrid>,
    pub gbar: &'a MetricField,
    pub w_jet: &'a (dyn Fn(f64, f64, f64) -> ScalarJet + Sync),
    /// impose Dirichlet rows at bounded t-axis ends (seed grids)
    pub t_dirichlet: bool,
}

impl<'a> SolveGauge<'a> {
    fn w_jet_at(&self, idx: usize) -> ScalarJet {
        let (i, j, k) = self.grid.unidx(idx);
        let (t, b, p) = self.grid.coords(i, j, k);
        (self.w_jet)(t, b, p)
    }

    /// Delta_g u with g = w^{-2} gbar, matrix-free.
    pub fn apply_scalar_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let (d, dd) = ops::scalar_jets(grid, u, self.gbar.domain);
        let mut out = vec![0.0; grid.len()];
        for idx in 0..grid.len() {
            let gi = self.gbar.ginv_at(idx);
            let gm = self.gbar.gamma_at(idx);
            let jet = ops::scalar_jet_at(&d, &dd, u, idx);
            let lap = tensor::laplacian(&gi, &gm, &jet.d, &jet.dd);
            let wj = self.w_jet_at(idx);
            let graddot = tensor::dot(&gi, &wj.d, &jet.d);
            out[idx] = wj.v * wj.v * lap - wj.v * graddot;
        }
        out
    }

    /// L_g W = -div_g(D_g W)^sharp, matrix-free, in barred form.
    pub fn apply_vector_laplacian(&self, w_comps: &[Vec<f64>; 3]) -> [Vec<f64>; 3] {
        let grid = &self.grid;
        let wf = VectorField { grid: grid.clone(), comps: w_comps.clone() };
        let tbar = ops::conformal_killing_field(self.gbar, &wf).expect("grid match");
        let div = ops::divergence_sym_field(self.gbar, &tbar).expect("grid match");
        let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; grid.len()]);
        for idx in 0..grid.len() {
            let gi = self.gbar.ginv_at(idx);
            let wj = self.w_jet_at(idx);
            let tb = tbar.at(idx);
            // (T . dw)_c = gbar^{de} T_{dc} dw_e
            let gradw: Vec3 = tensor::raise(&gi, &wj.d);
            let mut tdw = [0.0; 3];
            for c in 0..3 {
                for dd in 0..3 {
                    tdw[c] += tensor::sym_get(&tb, dd, c) * gradw[dd];
                }
            }
            let dv: Vec3 = [div.comps[0][idx], div.comps[1][idx], div.comps[2][idx]];
            let div_sharp = tensor::raise(&gi, &dv);
            let tdw_sharp = tensor::raise(&gi, &tdw);
            for c in 0..3 {
                out[c][idx] = -wj.v * wj.v * div_sharp[c] + 3.0 * wj.v * tdw_sharp[c];
            }
        }
        out
    }
}

/// Assembled operator with its factorization.
pub struct AssembledOperator {
    pub grid: Arc<ChartGrid>,
    pub ncomp: usize,
    pub lu: PeriodicBandLu,
    pub dirichlet: Vec<bool>,
}

/// Raw triplet copy of an assembled operator, kept for residual checks.
pub struct SystemTriplets {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SystemTriplets {
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(r, c, v) in &self.entries {
            out[r] += v * x[c];
        }
    }
}

/// Assemble a local linear operator by comb probing and factor it.
///
/// `apply` must be linear and local with stencil radius at most (rt, rb) in
/// the (t, beta) axes.  Dirichlet rows replace the equation at the y = 0 row
/// (and bounded t-ends when requested).  A random-vector consistency check
/// guards the probing radii.
pub fn assemble_operator(
    gauge: &SolveGauge,
    ncomp: usize,
    apply: impl Fn(&[Vec<f64>]) -> Vec<Vec<f64>>,
    rt: usize,
    rb: usize,
) -> Result<(AssembledOperator, SystemTriplets)> {
    let grid = gauge.grid.clone();
    let (nt, nb, np) = grid.shape();
    if np != 1 {
        return Err(Error::Config(
            "operator assembly currently supports axisymmetric grids".into(),
        ));
    }
    let n = nt * nb * ncomp;
    let periodic_t = matches!(grid.axes[0].topology, crate::grid::AxisTopology::Periodic);
    // comb periods
    let need_t = 2 * rt + 1;
    let qt = if periodic_t {
        (need_t..=nt).find(|q| nt % q == 0).unwrap_or(nt)
    } else {
        need_t.min(nt)
    };
    let qb = (2 * rb + 1).min(nb);
    let unk = |i: usize, j: usize, c: usize| (i * nb + j) * ncomp + c;

    // Dirichlet mask
    let mut dirichlet = vec![false; n];
    for i in 0..nt {
        for c in 0..ncomp {
            dirichlet[unk(i, BOUNDARY_J, c)] = true;
            if gauge.t_dirichlet && !periodic_t && (i == 0 || i == nt - 1) {
                for j in 0..nb {
                    dirichlet[unk(i, j, c)] = true;
                }
            }
        }
    }

    let kl = ncomp * (nb * rt + rb) + ncomp;
    let mut sys = PeriodicBandSystem::new(n, kl, kl);
    let mut triplets = Vec::new();
    for ot in 0..qt {
        for ob in 0..qb {
            for oc in 0..ncomp {
                // comb basis field
                let mut basis: Vec<Vec<f64>> = vec![vec![0.0; nt * nb]; ncomp];
                let mut teeth = Vec::new();
                let mut i = ot;
                while i < nt {
                    let mut j = ob;
                    while j < nb {
                        basis[oc][i * nb + j] = 1.0;
                        teeth.push((i, j));
                        j += qb;
                    }
                    i += qt;
                }
                if teeth.is_empty() {
                    continue;
                }
                let out = apply(&basis);
                // attribute entries to the nearest tooth
                for (ri, row_comp) in out.iter().enumerate() {
                    for ii in 0..nt {
                        for jj in 0..nb {
                            let v = row_comp[ii * nb + jj];
                            if v == 0.0 {
                                continue;
                            }
                            // nearest tooth in (i, j)
                            let mut best: Option<(usize, usize, usize)> = None;
                            for &(ti, tj) in &teeth {
                                let di = if periodic_t {
                                    let d = (ii as isize - ti as isize).rem_euclid(nt as isize);
                                    d.min(nt as isize - d) as usize
                                } else {
                                    ii.abs_diff(ti)
                                };
                                let dj = jj.abs_diff(tj);
                                if di <= rt && dj <= rb {
                                    best = match best {
                                        None => Some((ti, tj, di + dj)),
                                        Some((bi, bj, bd)) => {
                                            if di + dj < bd {
                                                Some((ti, tj, di + dj))
                                            } else {
                                                Some((bi, bj, bd))
                                            }
                                        }
                                    };
                                }
                            }
                            if let Some((ti, tj, _)) = best {
                                let r = unk(ii, jj, ri);
                                let c = unk(ti, tj, oc);
                                if !dirichlet[r] {
                                    triplets.push((r, c, v));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    // Dirichlet rows: identity
    for (r, d) in dirichlet.iter().enumerate() {
        if *d {
            triplets.push((r, r, 1.0));
        }
    }
    for &(r, c, v) in &triplets {
        sys.add(r, c, v);
    }
    let trips = SystemTriplets { n, entries: triplets };
    // consistency check: assembled matvec == raw application (off Dirichlet rows)
    {
        let mut rng = rand_chacha::ChaCha8Rng::from_seed_u64(42);
        let mut x: Vec<Vec<f64>> = vec![vec![0.0; nt * nb]; ncomp];
        for c in 0..ncomp {
            for v in &mut x[c] {
                *v = rng.random::<f64>() - 0.5;
            }
        }
        let direct = apply(&x);
        let mut flat = vec![0.0; n];
        for i in 0..nt {
            for j in 0..nb {
                for c in 0..ncomp {
                    flat[unk(i, j, c)] = x[c][i * nb + j];
                }
            }
        }
        let mut got = vec![0.0; n];
        trips.matvec(&flat, &mut got);
        let mut scale = 1e-300f64;
        for c in 0..ncomp {
            for v in &direct[c] {
                scale = scale.max(v.abs());
            }
        }
        for i in 0..nt {
            for j in 0..nb {
                for c in 0..ncomp {
                    let r = unk(i, j, c);
                    if dirichlet[r] {
                        continue;
                    }
                    let want = direct[c][i * nb + j];
                    if (got[r] - want).abs() > 1e-9 * scale {
                        return Err(Error::LinearSolve(format!(
                            "operator probing inconsistent at ({i},{j},{c}): {} vs {want}",
                            got[r]
                        )));
                    }
                }
            }
        }
    }
    let lu = sys.factor()?;
    Ok((AssembledOperator { grid, ncomp, lu, dirichlet }, trips))
}

impl AssembledOperator {
    /// Solve with Dirichlet rows forced to zero.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = rhs.to_vec();
        for (r, d) in self.dirichlet.iter().enumerate() {
            if *d {
                b[r] = 0.0;
            }
        }
        self.lu.solve(&mut b);
        b
    }
}

// small deterministic rng seeding helper
trait SeedU64 {
    fn from_seed_u64(s: u64) -> Self;
}

impl SeedU64 for rand_chacha::ChaCha8Rng {
    fn from_seed_u64(s: u64) -> Self {
        use rand::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(s)
    }
}

fn flatten(grid: &ChartGrid, comps: &[Vec<f64>], ncomp: usize) -> Vec<f64> {
    let (nt, nb, _) = grid.shape();
    let mut out = vec![0.0; nt * nb * ncomp];
    for i in 0..nt {
        for j in 0..nb {
            for c in 0..ncomp {
                out[(i * nb + j) * ncomp + c] = comps[c][i * nb + j];
            }
        }
    }
    out
}

fn unflatten(grid: &ChartGrid, flat: &[f64], ncomp: usize) -> Vec<Vec<f64>> {
    let (nt, nb, _) = grid.shape();
    let mut out = vec![vec![0.0; nt * nb]; ncomp];
    for i in 0..nt {
        for j in 0..nb {
            for c in 0..ncomp {
                out[c][i * nb + j] = flat[(i * nb + j) * ncomp + c];
            }
        }
    }
    out
}

/// Result of the vector-Laplacian stage.
pub struct MomentumSolve {
    pub w_field: VectorField,
    /// (div_lambda mu) as a covector field on the extension grid
    pub div_mu_cov: crate::grid::CovectorField,
    /// sigma_bar = rho sigma on the extension grid
    pub sigma_bar: SymTensorField,
    /// unbarred sigma at interior rows (extension grid)
    pub sigma: SymTensorField,
    /// solver-consistent divergence residual sup, relative to the RHS scale
    pub div_residual: f64,
    /// weighted estimator sup of rho-tilde^{-2} |(div mu)^sharp|
    pub rhs_weighted_sup: f64,
}

/// Solve L_lambda W = (div_lambda mu)^sharp on the glued geometry.
pub fn solve_vector_laplacian(
    geo: &SplicedGeometry,
    mom: &SplicedMomentum,
    _cfg: &SolverConfig,
) -> Result<MomentumSolve> {
    let per = geo.per.clone();
    let profiles = geo.profiles;
    // solver-gauge barred metric on the periodic grid
    let ltb_per = geo.restrict_sym(&geo.lambda_tilde_bar.tensor);
    let gbar_per = MetricField::new(ltb_per, crate::grid::DerivDomain::Full)?;
    let w_jet = move |t: f64, b: f64, _p: f64| profiles.rho_tilde_jet(t, b);
    let gauge = SolveGauge { grid: per.clone(), gbar: &gbar_per, w_jet: &w_jet, t_dirichlet: false };

    // RHS on the extension in barred form, then restricted
    let lam_bar = &geo.lambda_bar;
    let rho_jets = move |t: f64, b: f64, _p: f64| profiles.rho_jet(t, b);
    let div_cov = ops::div_conformal_quotient(lam_bar, &rho_jets, &mom.mu_bar)?;
    let mut rhs_ext: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; geo.ext.len()]);
    for idx in 0..geo.ext.len() {
        let (i, j, k) = geo.ext.unidx(idx);
        let (t, b, _) = geo.ext.coords(i, j, k);
        let rho = profiles.rho_value(t, b);
        let gi = lam_bar.ginv_at(idx);
        let dv: Vec3 = std::array::from_fn(|c| div_cov.comps[c][idx]);
        let sharp = tensor::raise(&gi, &dv);
        for c in 0..3 {
            rhs_ext[c][idx] = rho * rho * sharp[c];
        }
    }
    // weighted estimator of the source
    let mut rhs_weighted_sup = 0.0f64;
    for idx in 0..geo.ext.len() {
        let (i, j, k) = geo.ext.unidx(idx);
        if j == BOUNDARY_J {
            continue;
        }
        let (t, b, _) = geo.ext.coords(i, j, k);
        let rt = profiles.rho_tilde_value(t, b);
        let lb = geo.lambda_bar.g_at(idx);
        let v: Vec3 = std::array::from_fn(|c| rhs_ext[c][idx]);
        let low = tensor::lower(&lb, &v);
        let mag = (0..3).map(|a| low[a] * v[a]).sum::<f64>().max(0.0).sqrt();
        // |V|_lambda = rho^{-1} |V|_lambda-bar for vectors
        let rho = profiles.rho_value(t, b);
        rhs_weighted_sup = rhs_weighted_sup.max(mag / (rho * rt * rt));
    }

    let ncomp = 2; // axisymmetric polarized sector (W^phi = 0)
    let apply = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let comps: [Vec<f64>; 3] = [
            basis[0].clone(),
            basis[1].clone(),
            vec![0.0; basis[0].len()],
        ];
        let out = gauge.apply_vector_laplacian(&comps);
        vec![out[0].clone(), out[1].clone()]
    };
    let (op, trips) = assemble_operator(&gauge, ncomp, apply, 8, 14)?;

    let rhs_per: Vec<Vec<f64>> = (0..2)
        .map(|c| {
            geo.restrict_scalar(&ScalarField {
                grid: geo.ext.clone(),
                data: rhs_ext[c].clone(),
            })
            .data
        })
        .collect();
    let rhs_flat = flatten(&per, &rhs_per, ncomp);
    let sol_flat = op.solve(&rhs_flat);
    // solver residual (consistent composition)
    let mut check = vec![0.0; rhs_flat.len()];
    trips.matvec(&sol_flat, &mut check);
    let mut resid = 0.0f64;
    let mut scale = 1e-300f64;
    for r in 0..rhs_flat.len() {
        if op.dirichlet[r] {
            continue;
        }
        resid = resid.max((check[r] - rhs_flat[r]).abs());
        scale = scale.max(rhs_flat[r].abs());
    }
    let div_residual = resid / scale.max(1e-300);

    let sol = unflatten(&per, &sol_flat, ncomp);
    let mut w_per = VectorField::zeros(&per);
    w_per.comps[0] = sol[0].clone();
    w_per.comps[1] = sol[1].clone();

    // sigma on the extension: sigma_bar = mu_bar + rho^{-1} D_{lambda-bar}(W)
    let mut w_ext = VectorField::zeros(&geo.ext);
    for c in 0..3 {
        let per_f = ScalarField { grid: per.clone(), data: w_per.comps[c].clone() };
        w_ext.comps[c] = geo.extend_scalar(&per_f).data;
    }
    let tbar = ops::conformal_killing_field(&geo.lambda_bar, &w_ext)?;
    let rho_field = ScalarField::from_fn(&geo.ext, |t, b, _| profiles.rho_value(t, b));
    let dkw_over_rho = ops::boundary_quotient_sym(&tbar, &rho_field);
    let mut sigma_bar = mom.mu_bar.clone();
    let mut sigma = mom.mu.clone();
    for c in 0..6 {
        for idx in 0..geo.ext.len() {
            let (_, j, _) = geo.ext.unidx(idx);
            sigma_bar.comps[c][idx] += dkw_over_rho.comps[c][idx];
            if j != BOUNDARY_J {
                // D_lambda W = rho^{-2} D_lambda-bar W
                sigma.comps[c][idx] +=
                    tbar.comps[c][idx] / (rho_field.data[idx] * rho_field.data[idx]);
            }
        }
    }
    Ok(MomentumSolve {
        w_field: w_per,
        div_mu_cov: div_cov,
        sigma_bar,
        sigma,
        div_residual,
        rhs_weighted_sup,
    })
}

/// The approximate Lichnerowicz solution and its ingredients.
pub struct ThetaBundle {
    /// on the extension grid
    pub v_eps: ScalarField,
    pub v_tilde: ScalarField,
    pub tau_tilde: ScalarField,
    pub theta: ScalarField,
}

/// Mollification width of the tangential regularization.
pub const MOLL_WIDTH: f64 = 1.0 / 32.0;

/// Build theta_eps = 1 - (3/16) v-tilde with the tangentially mollified
/// regularization of eta * Delta_{gE+m} y.
pub fn approximate_theta(geo: &SplicedGeometry) -> Result<ThetaBundle> {
    let ext = &geo.ext;
    let (nt, nb, np) = ext.shape();
    let big_t = geo.cfg.big_t();
    let y_neck = ScalarField::from_fn(ext, |t, b, _| (t + big_t).exp() * b.cos());
    let lap_em = ops::laplacian_field(&geo.em, &y_neck)?;
    let lap_ref = ops::laplacian_field(&geo.em_ref, &y_neck)?;
    let mut lap_diff = ScalarField::zeros(ext);
    let mut eta_lap = ScalarField::zeros(ext);
    let mut eta_field = ScalarField::zeros(ext);
    for idx in 0..ext.len() {
        let (i, j, k) = ext.unidx(idx);
        let (t, _, _) = ext.coords(i, j, k);
        let s = geo.profiles.s_sym(t);
        let eta = crate::halfspace::annulus_cutoff(s.exp(), 4.0, 6.0).v;
        lap_diff.data[idx] = lap_em.data[idx] - lap_ref.data[idx];
        eta_field.data[idx] = eta;
        eta_lap.data[idx] = eta * lap_diff.data[idx];
    }

    // tangential mollification: convolve at fixed y over the x-plane with a
    // compactly supported radial kernel of width MOLL_WIDTH, in neck
    // coordinates (s = t + T)
    let h = MOLL_WIDTH;
    let (nq_r, nq_a) = (6usize, 12usize);
    // kernel normalization: 2 pi
    //   int_0^1 k(u) u du,  k(u) = exp(-1/(1-u^2)) inside the unit disk
    let kern = |u: f64| -> f64 {
        if u >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - u * u)).exp()
        }
    };
    let mut cnorm = 0.0;
    for a in 0..400 {
        let u = (a as f64 + 0.5) / 400.0;
        cnorm += kern(u) * u / 400.0;
    }
    cnorm *= std::f64::consts::TAU;

    let mut tau = ScalarField::zeros(ext);
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        let s = geo.profiles.s_sym(t);
        // only needed on a neighborhood of supp eta
        if s.abs() > (6.5f64).ln() {
            continue;
        }
        let s_neck = t + big_t;
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                let (tt, b, _) = ext.coords(i, j, k);
                let _ = tt;
                let y = s_neck.exp() * b.cos();
                let x0 = s_neck.exp() * b.sin();
                let mut acc = 0.0;
                for qa in 0..nq_r {
                    let u = (qa as f64 + 0.5) / nq_r as f64;
                    let rq = u * h;
                    let kv = kern(u);
                    for qb in 0..nq_a {
                        let alpha = std::f64::consts::TAU * (qb as f64 + 0.5) / nq_a as f64;
                        let xs =
                            (x0 * x0 + rq * rq - 2.0 * x0 * rq * alpha.cos()).max(0.0).sqrt();
                        let rr = (xs * xs + y * y).sqrt();
                        let sp = rr.ln();
                        let bp = (y / rr).clamp(-1.0, 1.0).acos();
                        // map neck coordinate back to the extension grid:
                        // t' = s' - T, choosing the representative inside
                        let tp = sp - big_t;
                        let tq = if tp < ext.axes[0].lo() { sp + big_t - 2.0 * big_t } else { tp };
                        let _ = tq;
                        let val = ext
                            .interp(&eta_lap.data, 1.0, tp.max(ext.axes[0].lo()).min(ext.axes[0].hi()), bp, 0.0)
                            .unwrap_or(0.0);
                        acc += kv * val * (rq * h / nq_r as f64)
                            * (std::f64::consts::TAU / nq_a as f64);
                    }
                }
                tau.data[idx] = acc / (cnorm * h * h);
            }
        }
    }

    // v-tilde = eta (1 - |dy|^2) + 2/3 y tau
    let mut v_tilde = ScalarField::zeros(ext);
    let mut theta = ScalarField::from_fn(ext, |_, _, _| 1.0);
    for idx in 0..ext.len() {
        let (i, j, k) = ext.unidx(idx);
        let (t, b, _) = ext.coords(i, j, k);
        let yj = crate::models::y_jet(t + big_t, b);
        let emi = tensor::sym_inv(&geo.em.g_at(idx)).unwrap_or([0.0; 6]);
        let dy2 = tensor::dot(&emi, &yj.d, &yj.d);
        let vt = eta_field.data[idx] * (1.0 - dy2) + (2.0 / 3.0) * yj.v * tau.data[idx];
        v_tilde.data[idx] = vt;
        theta.data[idx] = 1.0 - (3.0 / 16.0) * vt;
    }
    Ok(ThetaBundle { v_eps: geo.v_eps.clone(), v_tilde, tau_tilde: tau, theta })
}

/// A scalar Lichnerowicz problem in conformal-gauge form, usable both for
/// the glued geometry and for the seed manifold.
pub struct LichProblem<'a> {
    pub grid: Arc<ChartGrid>,
    pub gbar: &'a MetricField,
    pub w_jet: &'a (dyn Fn(f64, f64, f64) -> ScalarJet + Sync),
    /// R[lambda] as a field (balanced evaluation supplied by the caller)
    pub r_lambda: ScalarField,
    /// |sigma|^2_lambda as a field
    pub sigma2: ScalarField,
    /// the weight used in the residual estimator (rho-tilde or rho)
    pub weight: &'a (dyn Fn(f64, f64) -> f64 + Sync),
    pub t_dirichlet: bool,
}

impl<'a> LichProblem<'a> {
    pub fn gauge(&self) -> SolveGauge<'_> {
        SolveGauge {
            grid: self.grid.clone(),
            gbar: self.gbar,
            w_jet: self.w_jet,
            t_dirichlet: self.t_dirichlet,
        }
    }

    /// Build the glued-geometry problem from the spliced fields.
    pub fn for_geometry(
        geo: &'a SplicedGeometry,
        gbar_per: &'a MetricField,
        w_jet: &'a (dyn Fn(f64, f64, f64) -> ScalarJet + Sync),
        weight: &'a (dyn Fn(f64, f64) -> f64 + Sync),
        sigma_bar: &SymTensorField,
    ) -> Result<Self> {
        let per = geo.per.clone();
        let lam_bar_per = geo.restrict_sym(&geo.lambda_bar.tensor);
        let sig_per = geo.restrict_sym(sigma_bar);
        let mut sigma2 = ScalarField::zeros(&per);
        for idx in 0..per.len() {
            let (i, j, k) = per.unidx(idx);
            let (t, b, _) = per.coords(i, j, k);
            let rho = geo.profiles.rho_value(t, b);
            let g: tensor::Sym = std::array::from_fn(|c| lam_bar_per.comps[c][idx]);
            if let Some(gi) = tensor::sym_inv(&g) {
                sigma2.data[idx] = rho * rho * tensor::norm2_sym(&gi, &sig_per.at(idx));
            }
        }
        let r_plus6 = geo.restrict_scalar(&geo.r_lambda_plus6);
        let r_lambda = ScalarField {
            grid: per.clone(),
            data: r_plus6.data.iter().map(|v| v - 6.0).collect(),
        };
        Ok(LichProblem {
            grid: per,
            gbar: gbar_per,
            w_jet,
            r_lambda,
            sigma2,
            weight,
            t_dirichlet: false,
        })
    }

    /// Full nonlinear residual field L(phi); zero on the boundary row.
    pub fn residual(&self, gauge: &SolveGauge, phi: &[f64]) -> Result<Vec<f64>> {
        let grid = &self.grid;
        for v in phi.iter() {
            if *v <= 0.0 {
                return Err(Error::NonpositiveFactor { min: *v });
            }
        }
        let lap = gauge.apply_scalar_laplacian(phi);
        let mut out = vec![0.0; grid.len()];
        let (nt, nb, _) = grid.shape();
        let bounded = !matches!(grid.axes[0].topology, crate::grid::AxisTopology::Periodic);
        for idx in 0..grid.len() {
            let (i, j, _) = grid.unidx(idx);
            if j == BOUNDARY_J {
                continue;
            }
            if bounded && self.t_dirichlet && (i < 1 || i + 1 >= nt) {
                let _ = nb;
                continue;
            }
            let p = phi[idx];
            out[idx] = lap[idx] - self.r_lambda.data[idx] / 8.0 * p
                + self.sigma2.data[idx] / 8.0 * p.powi(-7)
                - 0.75 * p.powi(5);
        }
        Ok(out)
    }

    /// Weighted C^0_2(w) estimator of a residual field.
    ///
    /// The weight is floored at WEIGHT_FLOOR: below that scale the direct
    /// solver's f64 round-off dominates any continuum content of the
    /// residual, so the estimator would only amplify noise.
    pub fn weighted_residual_sup(&self, r: &[f64]) -> f64 {
        let grid = &self.grid;
        let mut sup = 0.0f64;
        for idx in 0..grid.len() {
            let (i, j, k) = grid.unidx(idx);
            if j == BOUNDARY_J {
                continue;
            }
            let (t, b, _) = grid.coords(i, j, k);
            let w = (self.weight)(t, b).max(WEIGHT_FLOOR);
            sup = sup.max(r[idx].abs() / (w * w));
        }
        sup
    }

    /// Zeroth-order coefficient of the linearization P[theta].
    pub fn linear_coefficient(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|idx| {
                let th = theta[idx];
                -(self.r_lambda.data[idx]
                    + 7.0 * self.sigma2.data[idx] * th.powi(-8)
                    + 30.0 * th.powi(4))
                    / 8.0
            })
            .collect()
    }
}

/// Result of the Lichnerowicz solve.
#[derive(Debug)]
pub struct LichSolveResult {
    pub phi: ScalarField,  // on the periodic grid
    pub theta: ScalarField, // on the periodic grid
    pub u: ScalarField,
    pub residual_history: Vec<f64>,
    pub contraction_ratio: Option<f64>,
    pub iterations: usize,
    pub monotone_after_burnin: bool,
    pub used_newton: bool,
}

/// Picard iteration with the frozen linearization P[theta_eps] (the paper's
/// contraction map), with an optional Newton fallback that re-linearizes.
pub fn solve_lichnerowicz(
    ctx: &LichProblem,
    theta_per: &ScalarField,
    cfg: &SolverConfig,
    newton: bool,
) -> Result<LichSolveResult> {
    let per = ctx.grid.clone();
    let gauge = ctx.gauge();
    let coeff = ctx.linear_coefficient(&theta_per.data);
    let apply_p = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let lap = gauge.apply_scalar_laplacian(&basis[0]);
        vec![(0..lap.len()).map(|i| lap[i] + coeff[i] * basis[0][i]).collect()]
    };
    let (mut op, _) = assemble_operator(&gauge, 1, apply_p, 8, 14)?;

    let mut u = vec![0.0; per.len()];
    let mut history = Vec::new();
    let mut steps: Vec<f64> = Vec::new();
    let mut used_newton = false;
    let mut iterations = 0;
    for it in 0..cfg.max_picard {
        iterations = it + 1;
        let phi: Vec<f64> = (0..per.len()).map(|i| theta_per.data[i] + u[i]).collect();
        let resid = ctx.residual(&gauge, &phi)?;
        let wres = ctx.weighted_residual_sup(&resid);
        history.push(wres);
        if wres < cfg.nonlinear_tol {
            break;
        }
        if newton && it > 0 {
            // re-linearize at the current iterate
            used_newton = true;
            let coeff_n = ctx.linear_coefficient(&phi);
            let apply_n = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
                let lap = gauge.apply_scalar_laplacian(&basis[0]);
                vec![(0..lap.len())
                    .map(|i| lap[i] + coeff_n[i] * basis[0][i])
                    .collect()]
            };
            let (op_n, _) = assemble_operator(&gauge, 1, apply_n, 8, 14)?;
            op = op_n;
        }
        let delta = op.solve(&resid);
        let step: f64 = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        steps.push(step);
        for i in 0..u.len() {
            u[i] -= delta[i];
        }
        if it + 1 == cfg.max_picard {
            return Err(Error::NonlinearSolve(format!(
                "no convergence in {} iterations, weighted residual {wres:.3e}",
                cfg.max_picard
            )));
        }
    }
    // contraction ratio from successive corrections
    let contraction_ratio = if steps.len() >= 2 {
        let mut rs = Vec::new();
        for wpair in steps.windows(2) {
            if wpair[0] > 0.0 {
                rs.push(wpair[1] / wpair[0]);
            }
        }
        rs.into_iter().reduce(f64::max)
    } else {
        None
    };
    let monotone_after_burnin = history.windows(2).skip(1).all(|w| w[1] <= w[0] * 1.5);
    let phi = ScalarField {
        grid: per.clone(),
        data: (0..per.len()).map(|i| theta_per.data[i] + u[i]).collect(),
    };
    if phi.data.iter().any(|v| *v <= 0.0) {
        return Err(Error::NonpositiveFactor {
            min: phi.data.iter().cloned().fold(f64::INFINITY, f64::min),
        });
    }
    Ok(LichSolveResult {
        phi,
        theta: theta_per.clone(),
        u: ScalarField { grid: per, data: u },
        residual_history: history,
        contraction_ratio,
        iterations,
        monotone_after_burnin,
        used_newton,
    })
}

/// Conformally transformed output (g_eps, Sigma_eps) in barred form on the
/// extension grid: gbar_out = phi^4 lambda_bar, Sigma_bar_out = phi^{-2} sigma_bar.
pub struct ConformalOutput {
    pub gbar_out: SymTensorField,
    pub sigma_bar_out: SymTensorField,
    pub phi_ext: ScalarField,
}

pub fn conformal_output(
    geo: &SplicedGeometry,
    sigma_bar: &SymTensorField,
    phi_per: &ScalarField,
) -> Result<ConformalOutput> {
    let phi_ext = geo.extend_scalar(phi_per);
    let mut gbar_out = geo.lambda_bar.tensor.clone();
    let mut sigma_bar_out = sigma_bar.clone();
    for idx in 0..geo.ext.len() {
        let p = phi_ext.data[idx];
        let p4 = p.powi(4);
        let pm2 = p.powi(-2);
        for c in 0..6 {
            gbar_out.comps[c][idx] *= p4;
            sigma_bar_out.comps[c][idx] *= pm2;
        }
    }
    Ok(ConformalOutput { gbar_out, sigma_bar_out, phi_ext })
}

/// Empirical inverse-norm surrogate for L_lambda and P[1].
#[derive(Clone, Debug, Serialize)]
pub struct InvertibilityReport {
    pub delta: f64,
    pub operator: String,
    pub surrogate: f64,
    pub trials: usize,
}

pub fn empirical_invertibility(
    geo: &SplicedGeometry,
    sigma_bar: &SymTensorField,
    deltas: &[f64],
    trials: usize,
    rng_seed: u64,
) -> Result<Vec<InvertibilityReport>> {
    use rand::SeedableRng;
    let per = geo.per.clone();
    let profiles = geo.profiles;
    let ltb_per = geo.restrict_sym(&geo.lambda_tilde_bar.tensor);
    let gbar_per = MetricField::new(ltb_per, crate::grid::DerivDomain::Full)?;
    let w_jet = move |t: f64, b: f64, _p: f64| profiles.rho_tilde_jet(t, b);
    let weight = move |t: f64, b: f64| profiles.rho_tilde_value(t, b);
    let ctx = LichProblem::for_geometry(geo, &gbar_per, &w_jet, &weight, sigma_bar)?;
    let gauge = ctx.gauge();
    // P[1]
    let ones = vec![1.0; per.len()];
    let coeff = ctx.linear_coefficient(&ones);
    let apply_p = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let lap = gauge.apply_scalar_laplacian(&basis[0]);
        vec![(0..lap.len()).map(|i| lap[i] + coeff[i] * basis[0][i]).collect()]
    };
    let (op_p, _) = assemble_operator(&gauge, 1, apply_p, 8, 14)?;
    // L
    let apply_l = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let comps: [Vec<f64>; 3] =
            [basis[0].clone(), basis[1].clone(), vec![0.0; basis[0].len()]];
        let out = gauge.apply_vector_laplacian(&comps);
        vec![out[0].clone(), out[1].clone()]
    };
    let (op_l, _) = assemble_operator(&gauge, 2, apply_l, 8, 14)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::new();
    let (nt, nb, _) = per.shape();
    // interior bump that vanishes near y = 0 so the Dirichlet closure is
    // consistent for every delta in [0, 3)
    let cutoff = |b: f64| {
        let c = b.cos();
        crate::halfspace::smoothstep((c - 0.15) / 0.2).v
    };
    for &delta in deltas {
        for (name, ncomp) in [("vector_laplacian", 2usize), ("linearized_lichnerowicz", 1)] {
            let mut worst = 0.0f64;
            for _ in 0..trials {
                // random smooth interior source
                let mut f = vec![vec![0.0; nt * nb]; ncomp];
                let modes: Vec<(f64, f64, f64)> = (0..4)
                    .map(|_| {
                        (
                            rng.random::<f64>() * 2.0 - 1.0,
                            rng.random::<f64>() * 3.0,
                            rng.random::<f64>() * std::f64::consts::TAU,
                        )
                    })
                    .collect();
                for i in 0..nt {
                    for j in 0..nb {
                        let (t, b, _) = per.coords(i, j, 0);
                        let cb = cutoff(b);
                        if cb == 0.0 {
                            continue;
                        }
                        let period = 2.0 * geo.cfg.big_t();
                        for (c, fc) in f.iter_mut().enumerate() {
                            let mut acc = 0.0;
                            for (amp, freq, phase) in &modes {
                                acc += amp
                                    * ((freq * std::f64::consts::TAU * t / period
                                        + phase
                                        + c as f64)
                                        .sin())
                                    * (2.0 * b).cos();
                            }
                            fc[i * nb + j] = acc * cb;
                        }
                    }
                }
                // normalize in the weighted sup norm
                let mut fn_norm = 1e-300f64;
                for i in 0..nt {
                    for j in 1..nb {
                        let (t, b, _) = per.coords(i, j, 0);
                        let rt = profiles.rho_tilde_value(t, b);
                        let mag: f64 =
                            f.iter().map(|fc| fc[i * nb + j] * fc[i * nb + j]).sum::<f64>().sqrt();
                        fn_norm = fn_norm.max(mag / rt.powf(delta));
                    }
                }
                for fc in &mut f {
                    for v in fc.iter_mut() {
                        *v /= fn_norm;
                    }
                }
                let flat = flatten(&per, &f, ncomp);
                let sol = if ncomp == 1 { op_p.solve(&flat) } else { op_l.solve(&flat) };
                let s = unflatten(&per, &sol, ncomp);
                let mut xn = 0.0f64;
                for i in 0..nt {
                    for j in 1..nb {
                        let (t, b, _) = per.coords(i, j, 0);
                        let rt = profiles.rho_tilde_value(t, b);
                        let mag: f64 =
                            s.iter().map(|sc| sc[i * nb + j] * sc[i * nb + j]).sum::<f64>().sqrt();
                        xn = xn.max(mag / rt.powf(delta));
                    }
                }
                worst = worst.max(xn);
            }
            out.push(InvertibilityReport {
                delta,
                operator: name.into(),
                surrogate: worst,
                trials,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{self, SeedData};
    use crate::splicing::{build_geometry, build_momentum, GluingConfig};

    fn cfg(eps_pow: u32) -> GluingConfig {
        GluingConfig {
            eps_pow,
            c_pow: 2,
            m: 8,
            nb: 17,
            np: 1,
            fd_order: 4,
            allow_outside_guarantee: true,
        }
    }

    fn hyper(cfgv: &GluingConfig) -> (SeedData, SplicedGeometry, SplicedMomentum) {
        let grid = seed::seed_grid(cfgv.seed_octaves(), cfgv.m, cfgv.nb, cfgv.np, cfgv.fd_order)
            .unwrap();
        let sd = SeedData::hyperbolic(&grid).unwrap();
        let geo = build_geometry(&sd, cfgv).unwrap();
        let mom = build_momentum(&sd, &geo).unwrap();
        (sd, geo, mom)
    }

    #[test]
    fn scalar_operator_matches_half_space_model() {
        // on the hyperbolic geometry the scalar gauge Laplacian must act like
        // Delta_breve-g: apply to y^s and compare with s(s-2) y^s
        let c = cfg(4);
        let (_sd, geo, _mom) = hyper(&c);
        let per = geo.per.clone();
        let ltb = geo.restrict_sym(&geo.lambda_tilde_bar.tensor);
        let gbar = MetricField::new(ltb, crate::grid::DerivDomain::Full).unwrap();
        let profiles = geo.profiles;
        let w_jet = move |t: f64, b: f64, _: f64| profiles.rho_tilde_jet(t, b);
        let gauge = SolveGauge { grid: per.clone(), gbar: &gbar, w_jet: &w_jet, t_dirichlet: false };
        // y^s is not periodic; use a periodic-in-t modulation of cos^s(b)
        // instead: u = cos^2 b, for which Delta_gy u has a closed form?  use
        // the indicial test on the extension-free interior: pick s = 2 and
        // compare against the half-space formula via y-jets per node.
        let s = 2.0;
        let u = ScalarField::from_fn(&per, |_, b, _| b.cos().powf(s));
        let lap = gauge.apply_scalar_laplacian(&u.data);
        // Delta_gy (cos^s b) where cos b = y/r: compare against applying the
        // exact half-space operator to f = (y/r)^s = cos^s b:
        // Delta_breve f = y^2 Delta_E f - y d_y f (computed analytically in
        // polar: f depends on b only):
        // Delta_breve f = cos^2 b [f'' + (cot b - tan b... ] -- instead verify
        // with a second discretization: order check against refinement
        let c2 = GluingConfig { m: 16, ..c };
        let (_sd2, geo2, _m2) = hyper(&c2);
        let per2 = geo2.per.clone();
        let ltb2 = geo2.restrict_sym(&geo2.lambda_tilde_bar.tensor);
        let gbar2 = MetricField::new(ltb2, crate::grid::DerivDomain::Full).unwrap();
        let profiles2 = geo2.profiles;
        let w_jet2 = move |t: f64, b: f64, _: f64| profiles2.rho_tilde_jet(t, b);
        let gauge2 =
            SolveGauge { grid: per2.clone(), gbar: &gbar2, w_jet: &w_jet2, t_dirichlet: false };
        let u2 = ScalarField::from_fn(&per2, |_, b, _| b.cos().powf(s));
        let lap2 = gauge2.apply_scalar_laplacian(&u2.data);
        // compare on shared nodes: both grids contain b rows differently, so
        // just verify magnitudes agree at matched angles via interpolation
        let mut worst = 0.0f64;
        let (nt, nb, _) = per.shape();
        for i in (0..nt).step_by(4) {
            for j in 1..nb - 2 {
                let (t, b, _) = per.coords(i, j, 0);
                let v1 = lap[per.idx(i, j, 0)];
                let v2 = per2.interp(&lap2, 1.0, t, b, 0.0).unwrap_or(f64::NAN);
                if v2.is_finite() {
                    worst = worst.max((v1 - v2).abs());
                }
            }
        }
        assert!(worst < 5e-3, "gauge Laplacian self-consistency {worst}");
    }

    #[test]
    fn hyperbolic_w_solve_is_zero() {
        let c = cfg(4);
        let (_sd, geo, mom) = hyper(&c);
        let solve = solve_vector_laplacian(&geo, &mom, &SolverConfig::default()).unwrap();
        assert!(solve.w_field.sup_norm() < 1e-9, "W sup {}", solve.w_field.sup_norm());
        assert!(solve.sigma_bar.sup_norm() < 1e-9, "sigma sup {}", solve.sigma_bar.sup_norm());
    }

    #[test]
    fn hyperbolic_theta_is_one_and_phi_is_one() {
        let c = cfg(4);
        let (_sd, geo, mom) = hyper(&c);
        let solve = solve_vector_laplacian(&geo, &mom, &SolverConfig::default()).unwrap();
        let tb = approximate_theta(&geo).unwrap();
        let mut worst = 0.0f64;
        for v in &tb.theta.data {
            worst = worst.max((v - 1.0).abs());
        }
        assert!(worst < 1e-9, "theta - 1 sup {worst}");
        let ltb_per = geo.restrict_sym(&geo.lambda_tilde_bar.tensor);
        let gbar_per = MetricField::new(ltb_per, crate::grid::DerivDomain::Full).unwrap();
        let profiles = geo.profiles;
        let w_jet = move |t: f64, b: f64, _p: f64| profiles.rho_tilde_jet(t, b);
        let weight = move |t: f64, b: f64| profiles.rho_tilde_value(t, b);
        let ctx = LichProblem::for_geometry(&geo, &gbar_per, &w_jet, &weight, &solve.sigma_bar)
            .unwrap();
        let theta_per = geo.restrict_scalar(&tb.theta);
        let res =
            solve_lichnerowicz(&ctx, &theta_per, &SolverConfig::default(), false).unwrap();
        assert!(res.iterations <= 2, "iterations {}", res.iterations);
        let mut worst = 0.0f64;
        for v in &res.phi.data {
            worst = worst.max((v - 1.0).abs());
        }
        assert!(worst < 1e-9, "phi - 1 sup {worst}");
    }

    #[test]
    fn manufactured_vector_solution_recovered() {
        // RHS manufactured through the assembled operator must reproduce the
        // manufactured field to solver precision
        let c = cfg(4);
        let (_sd, geo, _mom) = hyper(&c);
        let per = geo.per.clone();
        let ltb = geo.restrict_sym(&geo.lambda_tilde_bar.tensor);
        let gbar = MetricField::new(ltb, crate::grid::DerivDomain::Full).unwrap();
        let profiles = geo.profiles;
        let w_jet = move |t: f64, b: f64, _: f64| profiles.rho_tilde_jet(t, b);
        let gauge = SolveGauge { grid: per.clone(), gbar: &gbar, w_jet: &w_jet, t_dirichlet: false };
        let apply = |basis: &[Vec<f64>]| -> Vec<Vec<f64>> {
            let comps: [Vec<f64>; 3] =
                [basis[0].clone(), basis[1].clone(), vec![0.0; basis[0].len()]];
            let out = gauge.apply_vector_laplacian(&comps);
            vec![out[0].clone(), out[1].clone()]
        };
        let (op, trips) = assemble_operator(&gauge, 2, apply, 8, 14).unwrap();
        let (nt, nb, _) = per.shape();
        let period = 2.0 * geo.cfg.big_t();
        let mut w_star = vec![vec![0.0; nt * nb]; 2];
        for i in 0..nt {
            for j in 0..nb {
                let (t, b, _) = per.coords(i, j, 0);
                let cb = b.cos();
                let envelope = cb * cb; // vanishes at y = 0
                w_star[0][i * nb + j] =
                    envelope * (std::f64::consts::TAU * t / period).sin();
                w_star[1][i * nb + j] =
                    envelope * b.sin() * (2.0 * std::f64::consts::TAU * t / period).cos();
            }
        }
        let flat = flatten(&per, &w_star, 2);
        let mut rhs = vec![0.0; flat.len()];
        trips.matvec(&flat, &mut rhs);
        // zero out Dirichlet rows of the manufactured data so the solve is
        // consistent
        let sol = op.solve(&rhs);
        let mut worst = 0.0f64;
        for r in 0..flat.len() {
            if op.dirichlet[r] {
                continue;
            }
            worst = worst.max((sol[r] - flat[r]).abs());
        }
        assert!(worst < 1e-8, "manufactured recovery error {worst}");
    }

    #[test]
    fn indicial_polynomial_of_model_operator() {
        // P[1] on the hyperbolic geometry acts on y^s as (s-3)(s+1) y^s; the
        // periodic chart cannot hold y^s globally, so measure on the seed
        // gauge (bounded grid) instead
        let grid = seed::seed_grid(3, 12, 33, 1, 4).unwrap();
        let sd = SeedData::hyperbolic(&grid).unwrap();
        let gauge = SolveGauge {
            grid: grid.clone(),
            gbar: &sd.gbar,
            w_jet: &|t, b, _| seed::rho_seed_jet(t, b),
            t_dirichlet: true,
        };
        for s in [0.5f64, 1.0, 2.0, 2.5] {
            let u = ScalarField::from_fn(&grid, |t, b, _| (t.exp() * b.cos()).powf(s));
            let lap = gauge.apply_scalar_laplacian(&u.data);
            // sample interior nodes where rho = y exactly (collar zone)
            let (nt, nb, _) = grid.shape();
            let mut worst = 0.0f64;
            for i in 0..nt {
                for j in 4..nb - 4 {
                    let (t, b, _) = grid.coords(i, j, 0);
                    if t < -1.2 || t > -0.9 {
                        continue;
                    }
                    let idx = grid.idx(i, j, 0);
                    let y = t.exp() * b.cos();
                    let pu = lap[idx] - 3.0 * u.data[idx];
                    let want = ((s - 3.0) * (s + 1.0)) * y.powf(s);
                    worst = worst.max((pu - want).abs() / want.abs().max(1e-12));
                }
            }
            assert!(worst < 2e-2, "indicial mismatch {worst} at s = {s}");
        }
    }
}
