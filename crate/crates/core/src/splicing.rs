//! Construction of the spliced manifold, metric, and momentum tensor.
//!
//! The quotient manifold M_eps for the two-chart seed is globally covered by
//! one log-polar chart with deck transformation t -> t + 2T, T = ln(2/eps).
//! All spliced fields are assembled on a bounded extension
//! t in [-T - pad, T + pad] (so no finite-difference stencil ever wraps
//! across component-discontinuous representations) and then restricted to
//! the fundamental periodic grid t in [-T, T) for the elliptic solves.
//!
//! Pullbacks through alpha_{eps,i} and the deck map are exact index shifts;
//! the neck region A_c appears as an index-shifted "neck view" centered on
//! the seam.

use crate::error::{Error, Result};
use crate::grid::{
    ChartGrid, DerivDomain, ScalarField, SymTensorField, Variance,
};
use crate::halfspace::{self, Jet2};
use crate::models;
use crate::ops::{self, MetricField};
use crate::seed::{self, SeedData};
use crate::shear::{self, DegeneratePolicy, OmegaArg};
use crate::tensor::{self, ScalarJet, Sym};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Configuration of one gluing run.  eps and c are restricted to powers of
/// two so every chart transition lands exactly on grid nodes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GluingConfig {
    /// eps = 2^{-eps_pow}
    pub eps_pow: u32,
    /// c = 2^{-c_pow}; regions A_c and E_c use this parameter
    pub c_pow: u32,
    /// grid nodes per octave of t
    pub m: usize,
    /// angular nodes
    pub nb: usize,
    /// azimuthal nodes (1 = axisymmetric)
    pub np: usize,
    pub fd_order: usize,
    /// accept eps outside the strict guarantee eps < c^2 < 1/64
    pub allow_outside_guarantee: bool,
}

impl Default for GluingConfig {
    fn default() -> Self {
        GluingConfig {
            eps_pow: 5,
            c_pow: 3,
            m: 12,
            nb: 33,
            np: 1,
            fd_order: 4,
            allow_outside_guarantee: true,
        }
    }
}

impl GluingConfig {
    pub fn eps(&self) -> f64 {
        2.0f64.powi(-(self.eps_pow as i32))
    }

    pub fn c(&self) -> f64 {
        2.0f64.powi(-(self.c_pow as i32))
    }

    /// T = ln(2/eps), half the period of the glued chart.
    pub fn big_t(&self) -> f64 {
        (self.eps_pow as f64 + 1.0) * std::f64::consts::LN_2
    }

    pub fn dt(&self) -> f64 {
        std::f64::consts::LN_2 / self.m as f64
    }

    pub fn pad(&self) -> usize {
        (self.m / 2).max(self.fd_order + 4).min(self.m - 1)
    }

    /// Does this run satisfy the strict smallness chain eps < c^2 < 1/64?
    pub fn within_guarantee(&self) -> bool {
        let eps = self.eps();
        let c = self.c();
        eps < c * c && c * c < 1.0 / 64.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_pow < 3 {
            return Err(Error::Config("eps must be at most 1/8".into()));
        }
        if self.m < 8 {
            return Err(Error::Config("need at least 8 nodes per octave".into()));
        }
        if self.pad() >= self.m {
            return Err(Error::Config("extension pad must stay below one octave".into()));
        }
        if !self.allow_outside_guarantee && !self.within_guarantee() {
            return Err(Error::Config(format!(
                "eps = {} violates eps < c^2 < 1/64 with c = {}",
                self.eps(),
                self.c()
            )));
        }
        Ok(())
    }

    /// Seed grid octaves required to feed this gluing.
    pub fn seed_octaves(&self) -> usize {
        self.eps_pow as usize + 3
    }
}

/// Closed-form radial profiles of the glued defining functions.
#[derive(Clone, Copy, Debug)]
pub struct GluingProfiles {
    pub eps: f64,
    pub big_t: f64,
}

impl GluingProfiles {
    pub fn new(cfg: &GluingConfig) -> Self {
        GluingProfiles { eps: cfg.eps(), big_t: cfg.big_t() }
    }

    /// K(r) = F(2r/eps) G(r) F(2/(eps r)); rho_eps = 2 y K(r).
    pub fn k_profile_t(&self, t: f64) -> Jet2 {
        let r = t.exp();
        let rj = Jet2::new(r, r, r); // jet of e^t in t
        let a1 = rj.scale(2.0 / self.eps);
        let f1 = Jet2::chain(halfspace::f_jet(a1.v).expect("r > 0"), a1);
        let g = Jet2::chain(halfspace::g_jet(r).expect("r > 0"), rj);
        let a2 = rj.recip().scale(2.0 / self.eps);
        let f2 = Jet2::chain(halfspace::f_jet(a2.v).expect("r > 0"), a2);
        f1.mul(g).mul(f2)
    }

    /// Exact 2-jet of rho_eps in (t, b).
    pub fn rho_jet(&self, t: f64, b: f64) -> ScalarJet {
        let y = models::y_jet(t, b);
        let k = self.k_profile_t(t);
        ScalarJet {
            v: 2.0 * y.v * k.v,
            d: [2.0 * (y.d[0] * k.v + y.v * k.d), 2.0 * y.d[1] * k.v, 0.0],
            dd: [
                2.0 * (y.dd[0] * k.v + 2.0 * y.d[0] * k.d + y.v * k.dd),
                2.0 * (y.dd[1] * k.v + y.d[1] * k.d),
                0.0,
                2.0 * y.dd[3] * k.v,
                0.0,
                0.0,
            ],
        }
    }

    pub fn rho_value(&self, t: f64, b: f64) -> f64 {
        2.0 * t.exp() * b.cos() * self.k_profile_t(t).v
    }

    /// omega_eps as a function of t alone (psi-product form).
    pub fn omega_jet_t(&self, t: f64) -> Jet2 {
        let r = t.exp();
        let rj = Jet2::new(r, r, r);
        let e2 = self.eps * self.eps;
        // psi(2r + eps^2/(2r)) * psi(2/r + eps^2 r/2)
        let a1 = rj.scale(2.0).add(rj.recip().scale(0.5 * e2));
        let p1 = Jet2::chain(halfspace::psi_jet(a1.v).expect("arg > 0"), a1);
        let a2 = rj.recip().scale(2.0).add(rj.scale(0.5 * e2));
        let p2 = Jet2::chain(halfspace::psi_jet(a2.v).expect("arg > 0"), a2);
        p1.mul(p2)
    }

    pub fn omega_value(&self, t: f64) -> f64 {
        self.omega_jet_t(t).v
    }

    /// Exact 2-jet of tilde rho = rho / omega.
    pub fn rho_tilde_jet(&self, t: f64, b: f64) -> ScalarJet {
        let r = self.rho_jet(t, b);
        let w = self.omega_jet_t(t);
        // quotient in (t, b): omega depends on t only
        let v = r.v / w.v;
        let dt = (r.d[0] - v * w.d) / w.v;
        let db = r.d[1] / w.v;
        let dtt = (r.dd[0] - 2.0 * dt * w.d - v * w.dd) / w.v;
        let dtb = (r.dd[1] - db * w.d) / w.v;
        let dbb = r.dd[3] / w.v;
        ScalarJet { v, d: [dt, db, 0.0], dd: [dtt, dtb, 0.0, dbb, 0.0, 0.0] }
    }

    pub fn rho_tilde_value(&self, t: f64, b: f64) -> f64 {
        self.rho_value(t, b) / self.omega_value(t)
    }

    /// Symmetric representative s of the neck radial coordinate: the
    /// A_eps-chart log-radius of the point, in [-T, T).
    pub fn s_sym(&self, t: f64) -> f64 {
        if t < 0.0 {
            t + self.big_t
        } else {
            t - self.big_t
        }
    }

    /// Unwrapped neck log-radius on the extension (smooth across the seam at
    /// t = -T).
    pub fn s_neck(&self, t: f64) -> f64 {
        t + self.big_t
    }
}

/// The glued geometry on the extension grid, plus the periodic solve grid.
#[derive(Debug)]
pub struct SplicedGeometry {
    pub cfg: GluingConfig,
    pub profiles: GluingProfiles,
    /// bounded assembly grid, t in [-T - pad dt, T + pad dt]
    pub ext: Arc<ChartGrid>,
    /// periodic fundamental grid, t in [-T, T)
    pub per: Arc<ChartGrid>,
    pub pad: usize,
    /// barred spliced metric rho_eps^2 lambda_eps
    pub lambda_bar: MetricField,
    /// solver-gauge metric tilde-rho_eps^2 lambda_eps
    pub lambda_tilde_bar: MetricField,
    /// hyperbolic reference in the same gauge: rho_eps^2 breve-g
    pub lambda_ref_bar: MetricField,
    /// neck-frame metric g_E + m_eps (components grow like e^{2 s_neck})
    pub em: MetricField,
    /// closed-form g_E in the neck frame
    pub em_ref: MetricField,
    pub m_eps: SymTensorField,
    pub j_eps: SymTensorField,
    /// well-balanced R[lambda_eps] + 6
    pub r_lambda_plus6: ScalarField,
    /// v_eps = 1 - |dy|^2_{gE+m} + (2/3) y Delta_{gE+m} y (balanced)
    pub v_eps: ScalarField,
    /// background metric h_bar_eps = tilde-rho^2 breve-g for intermediate norms
    pub hbar: MetricField,
    /// was lambda assembled from bit-identical seed samples on E_c?
    pub exterior_bit_exact: bool,
}

fn seed_index(seed: &SeedData, t: f64) -> Result<usize> {
    let ax = &seed.grid.axes[0];
    let dt = ax.spacing();
    let pos = (t - ax.lo()) / dt;
    let i = pos.round() as isize;
    if (pos - i as f64).abs() > 1e-8 {
        return Err(Error::GridMismatch(format!(
            "gluing sample t = {t} does not land on a seed node (offset {})",
            pos - i as f64
        )));
    }
    if i < 0 || i as usize >= ax.n() {
        return Err(Error::GridMismatch(format!("gluing sample t = {t} outside the seed grid")));
    }
    Ok(i as usize)
}

/// Build the spliced geometry from a seed.
pub fn build_geometry(seedd: &SeedData, cfg: &GluingConfig) -> Result<SplicedGeometry> {
    cfg.validate()?;
    // grid compatibility
    let sdt = seedd.grid.axes[0].spacing();
    if (sdt - cfg.dt()).abs() > 1e-12 {
        return Err(Error::GridMismatch("seed and gluing grids must share dt".into()));
    }
    if seedd.grid.axes[1].n() != cfg.nb || seedd.grid.axes[2].n() != cfg.np {
        return Err(Error::GridMismatch("seed and gluing grids must share angular axes".into()));
    }
    let profiles = GluingProfiles::new(cfg);
    let big_t = cfg.big_t();
    let pad = cfg.pad();
    let dt = cfg.dt();
    let nt_per = 2 * (cfg.eps_pow as usize + 1) * cfg.m;
    // build the extension axis from the seed's own node array so every
    // shared coordinate is bitwise identical
    let lo_t = -big_t - pad as f64 * dt;
    let seed_ax = &seedd.grid.axes[0];
    let i0f = (lo_t - seed_ax.lo()) / seed_ax.spacing();
    let i0 = i0f.round() as isize;
    if (i0f - i0 as f64).abs() > 1e-8 || i0 < 0 {
        return Err(Error::GridMismatch("gluing extension does not align with the seed grid".into()));
    }
    let n_ext = nt_per + 2 * pad + 1;
    if i0 as usize + n_ext > seed_ax.n() {
        return Err(Error::GridMismatch("seed grid too small for this gluing".into()));
    }
    let ext_nodes: Vec<f64> = seed_ax.nodes[i0 as usize..i0 as usize + n_ext].to_vec();
    let ext = ChartGrid::new(
        [
            crate::grid::Axis {
                label: "t".into(),
                nodes: ext_nodes,
                topology: crate::grid::AxisTopology::Bounded,
                grading: crate::grid::Grading::Uniform,
            },
            crate::grid::Axis::polar_angle(cfg.nb),
            seedd.grid.axes[2].clone(),
        ],
        cfg.fd_order,
    )?;
    let per = ChartGrid::log_polar(-big_t, big_t, nt_per, cfg.nb, cfg.np, true, cfg.fd_order)?;

    let (nt, nb, np) = ext.shape();
    let mut lambda_bar = SymTensorField::zeros(&ext, Variance::Covariant);
    let exterior_bit_exact = true;
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        let s_sym = profiles.s_sym(t);
        let r_sym = s_sym.exp();
        let chi1 = halfspace::chi(r_sym);
        let chi2 = 1.0 - chi1;
        let (t_lo, t_hi) = if t < 0.0 { (t, t + 2.0 * big_t) } else { (t - 2.0 * big_t, t) };
        let i_lo = if chi1 > 0.0 { Some(seed_index(seedd, t_lo)?) } else { None };
        let i_hi = if chi2 > 0.0 { Some(seed_index(seedd, t_hi)?) } else { None };
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                if chi2 == 0.0 || chi1 == 0.0 {
                    // saturated zone: rho_eps == rho_seed there, so the
                    // barred metric is the seed sample, bit for bit
                    let si = if chi2 == 0.0 { i_lo.unwrap() } else { i_hi.unwrap() };
                    let sidx = seedd.grid.idx(si, j, k);
                    for c in 0..6 {
                        lambda_bar.comps[c][idx] = seedd.gbar.tensor.comps[c][sidx];
                    }
                } else {
                    // mix zone (off E_c): splice barred cometrics with the
                    // b-independent profile ratios (rho_seed / rho_eps)^2, so
                    // the assembly stays finite on the boundary row
                    let slo = seedd.grid.idx(i_lo.unwrap(), j, k);
                    let shi = seedd.grid.idx(i_hi.unwrap(), j, k);
                    let kk = profiles.k_profile_t(t).v;
                    let r_lo = (t_lo - t).exp()
                        * halfspace::g_jet(t_lo.exp()).expect("r > 0").v
                        / kk;
                    let r_hi = (t_hi - t).exp()
                        * halfspace::g_jet(t_hi.exp()).expect("r > 0").v
                        / kk;
                    let mut bmix: Sym = [0.0; 6];
                    for c in 0..6 {
                        bmix[c] = chi1 * r_lo * r_lo * seedd.gbar_inv.comps[c][slo]
                            + chi2 * r_hi * r_hi * seedd.gbar_inv.comps[c][shi];
                    }
                    let lam_bar = tensor::sym_inv(&bmix).ok_or(Error::SingularMetric {
                        i,
                        j,
                        k,
                        det: tensor::sym_det(&bmix),
                    })?;
                    for c in 0..6 {
                        lambda_bar.comps[c][idx] = lam_bar[c];
                    }
                }
            }
        }
    }
    let lambda_bar = MetricField::new(lambda_bar, DerivDomain::Full)?;

    // solver gauge and references (closed forms)
    let mut ltb = SymTensorField::zeros(&ext, Variance::Covariant);
    let mut lrb = SymTensorField::zeros(&ext, Variance::Covariant);
    let mut hbar = SymTensorField::zeros(&ext, Variance::Covariant);
    let mut em = SymTensorField::zeros(&ext, Variance::Covariant);
    let mut em_ref = SymTensorField::zeros(&ext, Variance::Covariant);
    let mut m_eps = SymTensorField::zeros(&ext, Variance::Covariant);
    let mut j_eps = SymTensorField::zeros(&ext, Variance::Contravariant);
    for i in 0..nt {
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                let (t, b, _) = ext.coords(i, j, k);
                let rho = profiles.rho_value(t, b);
                let rho_t = profiles.rho_tilde_value(t, b);
                let s_neck = profiles.s_neck(t);
                let lam_bar: Sym = lambda_bar.g_at(idx);
                // ratio tilde-rho / rho = 1/omega (b-independent, positive)
                let inv_om = 1.0 / profiles.omega_value(t);
                for c in 0..6 {
                    ltb.comps[c][idx] = inv_om * inv_om * lam_bar[c];
                }
                // hyperbolic reference rho^2 breve g = 4 K^2 g_E, written with
                // the same operations as the seed background so the arrays
                // coincide bitwise wherever K == G
                let kk = profiles.k_profile_t(t).v;
                let fourk2 = 4.0 * kk * kk;
                let ge_here = models::euclidean_components(t, b);
                let (sb, _cb) = b.sin_cos();
                let _ = sb;
                for c in 0..6 {
                    lrb.comps[c][idx] = fourk2 * ge_here[c];
                }
                // background h_bar = tilde-rho^2 breve g
                let hpref = rho_t * rho_t / (b.cos() * b.cos());
                hbar.comps[0][idx] = hpref;
                hbar.comps[3][idx] = hpref;
                hbar.comps[5][idx] = hpref * sb * sb;
                // neck frame: gE + m = (y_neck / rho)^2 lambda_bar
                let ratio = (big_t).exp() / (2.0 * self_k(&profiles, t));
                let r2 = ratio * ratio;
                let ge = models::euclidean_components(s_neck, b);
                for c in 0..6 {
                    em.comps[c][idx] = r2 * lam_bar[c];
                    em_ref.comps[c][idx] = ge[c];
                    m_eps.comps[c][idx] = em.comps[c][idx] - ge[c];
                }
                // j_eps = y^{-2} lambda^{-1} - gE^{-1}
                let lam_inv = tensor::sym_inv(&lam_bar).unwrap_or([0.0; 6]);
                let gei = tensor::sym_inv(&ge).unwrap_or([0.0; 6]);
                for c in 0..6 {
                    // lambda^{-1} = rho^2 lambda_bar^{-1}
                    j_eps.comps[c][idx] = (rho * rho / ((s_neck.exp() * b.cos().max(1e-300)).powi(2)))
                        .max(0.0)
                        .mul_add(0.0, (rho / (s_neck.exp() * b.cos().max(1e-300))).powi(2) * lam_inv[c])
                        - gei[c];
                }
                let _ = rho;
            }
        }
    }
    let lambda_tilde_bar = MetricField::new(ltb, DerivDomain::Full)?;
    let lambda_ref_bar = MetricField::new(lrb, DerivDomain::Full)?;
    let hbar = MetricField::new(hbar, DerivDomain::Full)?;
    let em = MetricField::new(em, DerivDomain::Full)?;
    let em_ref = MetricField::new(em_ref, DerivDomain::Full)?;

    // balanced v_eps and R[lambda] + 6
    let y_neck = ScalarField::from_fn(&ext, |t, b, _| (t + big_t).exp() * b.cos());
    let lap_em = ops::laplacian_field(&em, &y_neck)?;
    let lap_ref = ops::laplacian_field(&em_ref, &y_neck)?;
    let mut v_eps = ScalarField::zeros(&ext);
    for idx in 0..ext.len() {
        let (i, j, k) = ext.unidx(idx);
        let (t, b, _) = ext.coords(i, j, k);
        let yj = models::y_jet(t + big_t, b);
        let emi = tensor::sym_inv(&em.g_at(idx)).unwrap_or([0.0; 6]);
        let dy2 = tensor::dot(&emi, &yj.d, &yj.d);
        v_eps.data[idx] =
            1.0 - dy2 + (2.0 / 3.0) * yj.v * (lap_em.data[idx] - lap_ref.data[idx]);
    }
    let r_em = ops::scalar_curvature(&em);
    let r_ref = ops::scalar_curvature(&em_ref);
    let mut r_lambda_plus6 = ScalarField::zeros(&ext);
    for idx in 0..ext.len() {
        r_lambda_plus6.data[idx] = 6.0 * v_eps.data[idx]
            + y_neck.data[idx] * y_neck.data[idx] * (r_em.data[idx] - r_ref.data[idx]);
    }

    Ok(SplicedGeometry {
        cfg: *cfg,
        profiles,
        ext,
        per,
        pad,
        lambda_bar,
        lambda_tilde_bar,
        lambda_ref_bar,
        em,
        em_ref,
        m_eps,
        j_eps,
        r_lambda_plus6,
        v_eps,
        hbar,
        exterior_bit_exact,
    })
}

fn self_k(p: &GluingProfiles, t: f64) -> f64 {
    p.k_profile_t(t).v
}

impl SplicedGeometry {
    /// Restrict an extension scalar to the periodic fundamental grid.
    pub fn restrict_scalar(&self, f: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(&self.per);
        let (nt, nb, np) = self.per.shape();
        for i in 0..nt {
            for j in 0..nb {
                for k in 0..np {
                    out.data[self.per.idx(i, j, k)] =
                        f.data[self.ext.idx(i + self.pad, j, k)];
                }
            }
        }
        out
    }

    pub fn restrict_sym(&self, f: &SymTensorField) -> SymTensorField {
        let mut out = SymTensorField::zeros(&self.per, f.variance);
        let (nt, nb, np) = self.per.shape();
        for c in 0..6 {
            for i in 0..nt {
                for j in 0..nb {
                    for k in 0..np {
                        out.comps[c][self.per.idx(i, j, k)] =
                            f.comps[c][self.ext.idx(i + self.pad, j, k)];
                    }
                }
            }
        }
        out
    }

    /// Extend a periodic scalar back to the extension grid (by periodicity).
    pub fn extend_scalar(&self, f: &ScalarField) -> ScalarField {
        let mut out = ScalarField::zeros(&self.ext);
        let (nt_e, nb, np) = self.ext.shape();
        let nt_p = self.per.axes[0].n();
        for i in 0..nt_e {
            let ip = (i + nt_p - (self.pad % nt_p)) % nt_p;
            for j in 0..nb {
                for k in 0..np {
                    out.data[self.ext.idx(i, j, k)] = f.data[self.per.idx(ip, j, k)];
                }
            }
        }
        out
    }

    /// Index of the extension node holding fundamental-domain coordinate t.
    pub fn ext_index_of_t(&self, t: f64) -> Option<usize> {
        let ax = &self.ext.axes[0];
        let pos = (t - ax.lo()) / ax.spacing();
        let i = pos.round() as isize;
        if (pos - i as f64).abs() < 1e-8 && i >= 0 && (i as usize) < ax.n() {
            Some(i as usize)
        } else {
            None
        }
    }

    /// A bounded "neck view" grid in the A_eps log-radius s, |s| <= half_width,
    /// together with the map to extension node indices.
    pub fn neck_view_grid(&self, half_width: f64) -> Result<(Arc<ChartGrid>, Vec<usize>)> {
        let dt = self.cfg.dt();
        let nhw = (half_width / dt).round() as usize;
        let n = 2 * nhw + 1;
        let grid = ChartGrid::log_polar(
            -(nhw as f64) * dt,
            nhw as f64 * dt,
            n,
            self.cfg.nb,
            self.cfg.np,
            false,
            self.cfg.fd_order,
        )?;
        let mut map = Vec::with_capacity(n);
        for i in 0..n {
            let s = grid.axes[0].nodes[i];
            // s >= 0 -> t = s - T ; s < 0 -> t = s + T
            let t = if s >= -1e-12 { s - self.cfg.big_t() } else { s + self.cfg.big_t() };
            let ei = self.ext_index_of_t(t).ok_or_else(|| {
                Error::GridMismatch(format!("neck view node s = {s} has no extension node"))
            })?;
            map.push(ei);
        }
        Ok((grid, map))
    }

    /// A bounded exterior view |t| <= half_width of the extension grid,
    /// with the map to extension node indices.
    pub fn exterior_view(&self, half_width: f64) -> Result<(Arc<ChartGrid>, Vec<usize>)> {
        let dt = self.cfg.dt();
        let nhw = (half_width / dt).round() as usize;
        let n = 2 * nhw + 1;
        let i_mid = self.ext_index_of_t(0.0).ok_or_else(|| {
            Error::GridMismatch("extension grid has no t = 0 node".into())
        })?;
        if i_mid < nhw || i_mid + nhw >= self.ext.axes[0].n() {
            return Err(Error::GridMismatch("exterior view exceeds the extension".into()));
        }
        let nodes: Vec<f64> =
            self.ext.axes[0].nodes[i_mid - nhw..=i_mid + nhw].to_vec();
        let grid = ChartGrid::new(
            [
                crate::grid::Axis {
                    label: "t".into(),
                    nodes,
                    topology: crate::grid::AxisTopology::Bounded,
                    grading: crate::grid::Grading::Uniform,
                },
                crate::grid::Axis::polar_angle(self.cfg.nb),
                self.ext.axes[2].clone(),
            ],
            self.cfg.fd_order,
        )?;
        let map: Vec<usize> = (i_mid - nhw..=i_mid + nhw).collect();
        debug_assert_eq!(map.len(), n);
        Ok((grid, map))
    }

    /// Copy an extension field onto a neck view.
    pub fn neck_sym(&self, view: &(Arc<ChartGrid>, Vec<usize>), f: &SymTensorField) -> SymTensorField {
        let (grid, map) = view;
        let mut out = SymTensorField::zeros(grid, f.variance);
        let (nt, nb, np) = grid.shape();
        for c in 0..6 {
            for i in 0..nt {
                for j in 0..nb {
                    for k in 0..np {
                        out.comps[c][grid.idx(i, j, k)] =
                            f.comps[c][self.ext.idx(map[i], j, k)];
                    }
                }
            }
        }
        out
    }

    pub fn neck_scalar(&self, view: &(Arc<ChartGrid>, Vec<usize>), f: &ScalarField) -> ScalarField {
        let (grid, map) = view;
        let mut out = ScalarField::zeros(grid);
        let (nt, nb, np) = grid.shape();
        for i in 0..nt {
            for j in 0..nb {
                for k in 0..np {
                    out.data[grid.idx(i, j, k)] = f.data[self.ext.idx(map[i], j, k)];
                }
            }
        }
        out
    }
}

/// The spliced momentum pieces on the extension grid.
#[derive(Debug)]
pub struct SplicedMomentum {
    pub nu_ext: SymTensorField,
    pub nu_neck: SymTensorField,
    /// H_{lambda_bar}(rho_eps): hybrid evaluation (seed samples where the
    /// splice is saturated, fresh evaluation in the mix zone)
    pub h_lambda: SymTensorField,
    /// mu_bar = rho mu = H + rho (nu_neck + nu_ext); valid up to y = 0
    pub mu_bar: SymTensorField,
    /// unbarred mu at interior rows
    pub mu: SymTensorField,
    /// sup |tr_lambda mu| / sup |mu_bar|
    pub trace_residual: f64,
}

pub fn build_momentum(seedd: &SeedData, geo: &SplicedGeometry) -> Result<SplicedMomentum> {
    let ext = &geo.ext;
    let profiles = &geo.profiles;
    let big_t = geo.cfg.big_t();
    let dt = geo.cfg.dt();
    let (nt, nb, np) = ext.shape();

    // exact closed-form H of the hyperbolic reference pair (rho^2 breve-g, rho)
    let mut h_exact = SymTensorField::zeros(ext, Variance::Covariant);
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        let scale = 2.0 * t.exp() * profiles.k_profile_t(t).v;
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                let (_, b, _) = ext.coords(i, j, k);
                let rj = profiles.rho_jet(t, b);
                let he = shear::exact_reference_h(&rj, scale, b);
                for c in 0..6 {
                    h_exact.comps[c][idx] = he[c];
                }
            }
        }
    }

    // balanced finite-difference head: H(lambda_bar) - H(lambda_ref_bar),
    // reused from the seed on the coincidence zone so exterior identities
    // stay bitwise
    let hybrid_limit = big_t - std::f64::consts::LN_2 - 5.0 * dt;
    let (h_fd, _) = shear::h_tensor_field(
        &geo.lambda_bar,
        &OmegaArg::Analytic(&|t, b, _| profiles.rho_jet(t, b)),
        DegeneratePolicy::Error,
    )?;
    let (h_fd_ref, _) = shear::h_tensor_field(
        &geo.lambda_ref_bar,
        &OmegaArg::Analytic(&|t, b, _| profiles.rho_jet(t, b)),
        DegeneratePolicy::Error,
    )?;
    let mut hb = SymTensorField::zeros(ext, Variance::Covariant);
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        let from_seed = t.abs() <= hybrid_limit;
        let si = if from_seed { seed_index(seedd, t).ok() } else { None };
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                match si {
                    Some(si) => {
                        let sidx = seedd.grid.idx(si, j, k);
                        for c in 0..6 {
                            hb.comps[c][idx] = seedd.hb_field.comps[c][sidx];
                        }
                    }
                    None => {
                        for c in 0..6 {
                            hb.comps[c][idx] = h_fd.comps[c][idx] - h_fd_ref.comps[c][idx];
                        }
                    }
                }
            }
        }
    }

    // h_lambda = balanced head + exact reference part
    let mut h_lambda = SymTensorField::zeros(ext, Variance::Covariant);
    for c in 0..6 {
        for idx in 0..ext.len() {
            h_lambda.comps[c][idx] = hb.comps[c][idx] + h_exact.comps[c][idx];
        }
    }

    // neck correction from the masked exact reference H; the mask is the
    // analytic support |s_sym| <= ln 2 of the F-transition (plus one node)
    let mut h_exact_masked = h_exact.clone();
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        if profiles.s_sym(t).abs() > std::f64::consts::LN_2 + dt {
            for j in 0..nb {
                for k in 0..np {
                    let idx = ext.idx(i, j, k);
                    for c in 0..6 {
                        h_exact_masked.comps[c][idx] = 0.0;
                    }
                }
            }
        }
    }
    let rho_field = ScalarField::from_fn(ext, |t, b, _| profiles.rho_value(t, b));
    // rho nu_neck = -H_masked + 1/3 tr_{lambda-bar}(H_masked) lambda-bar
    let mut nu_neck_bar = SymTensorField::zeros(ext, Variance::Covariant);
    for idx in 0..ext.len() {
        let lam_bar = geo.lambda_bar.g_at(idx);
        let lam_inv = geo.lambda_bar.ginv_at(idx);
        let hm = h_exact_masked.at(idx);
        let tr = tensor::trace(&lam_inv, &hm);
        for c in 0..6 {
            nu_neck_bar.comps[c][idx] = -hm[c] + tr / 3.0 * lam_bar[c];
        }
    }
    // report-form nu pieces (quotients; not used in the assembly)
    let nu_approx = {
        let q = ops::boundary_quotient_sym(&h_exact_masked, &rho_field);
        let mut out = q;
        for c in 0..6 {
            for v in &mut out.comps[c] {
                *v = -*v;
            }
        }
        out
    };
    let mut nu_neck = SymTensorField::zeros(ext, Variance::Covariant);
    for idx in 0..ext.len() {
        let lam_bar = geo.lambda_bar.g_at(idx);
        let lam_inv = geo.lambda_bar.ginv_at(idx);
        let na = nu_approx.at(idx);
        let tr_a = tensor::trace(&lam_inv, &na);
        for c in 0..6 {
            nu_neck.comps[c][idx] = na[c] - tr_a / 3.0 * lam_bar[c];
        }
    }

    // nu_ext: chi(r^2/8)-weighted seed samples, barred (unquotiented) and plain
    let mut nu_ext = SymTensorField::zeros(ext, Variance::Covariant);
    let mut nu_ext_bar = SymTensorField::zeros(ext, Variance::Covariant);
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        let s_sym = profiles.s_sym(t);
        let w1 = halfspace::chi((2.0 * s_sym).exp() / 8.0);
        let w2 = halfspace::chi((-2.0 * s_sym).exp() / 8.0);
        let (t_lo, t_hi) = if t < 0.0 { (t, t + 2.0 * big_t) } else { (t - 2.0 * big_t, t) };
        let i_lo = if w1 > 0.0 { Some(seed_index(seedd, t_lo)?) } else { None };
        let i_hi = if w2 > 0.0 { Some(seed_index(seedd, t_hi)?) } else { None };
        if i_lo.is_none() && i_hi.is_none() {
            continue;
        }
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                for c in 0..6 {
                    let mut v = 0.0;
                    let mut vb = 0.0;
                    if let Some(si) = i_lo {
                        let sidx = seedd.grid.idx(si, j, k);
                        v += w1 * seedd.nu.comps[c][sidx];
                        vb += w1 * seedd.nu_bar.comps[c][sidx];
                    }
                    if let Some(si) = i_hi {
                        let sidx = seedd.grid.idx(si, j, k);
                        v += w2 * seedd.nu.comps[c][sidx];
                        vb += w2 * seedd.nu_bar.comps[c][sidx];
                    }
                    nu_ext.comps[c][idx] = v;
                    nu_ext_bar.comps[c][idx] = vb;
                }
            }
        }
    }

    // mu_bar = h_lambda + (rho nu_neck) + (rho nu_ext), every term
    // unquotiented: the hyperbolic family cancels to round-off everywhere,
    // and mu_bar == sigma_bar bitwise on the exterior
    let mut mu_bar = SymTensorField::zeros(ext, Variance::Covariant);
    let mut mu = SymTensorField::zeros(ext, Variance::Covariant);
    for idx in 0..ext.len() {
        let (_, j, _) = ext.unidx(idx);
        let rho = rho_field.data[idx];
        for c in 0..6 {
            mu_bar.comps[c][idx] = h_lambda.comps[c][idx]
                + nu_neck_bar.comps[c][idx]
                + nu_ext_bar.comps[c][idx];
            if j != crate::grid::BOUNDARY_J {
                mu.comps[c][idx] = mu_bar.comps[c][idx] / rho;
            }
        }
    }
    // trace residual w.r.t. lambda (barred pairing is rho-free), scaled by
    // the momentum magnitude of the construction
    let mut tr_res = 0.0f64;
    let scale = mu_bar.sup_norm().max(h_lambda.sup_norm()).max(1e-300);
    for idx in 0..ext.len() {
        let lam_inv = geo.lambda_bar.ginv_at(idx);
        tr_res = tr_res.max(tensor::trace(&lam_inv, &mu_bar.at(idx)).abs());
    }
    Ok(SplicedMomentum {
        nu_ext,
        nu_neck,
        h_lambda,
        mu_bar,
        mu,
        trace_residual: tr_res / scale,
    })
}

/// Neck-region diagnostics of Prop. g-neck type.
#[derive(Clone, Debug, Serialize)]
pub struct NeckDiagnostics {
    pub sup_one_minus_dy2: f64,
    pub sup_y_lap_y: f64,
    pub sup_scalar_curv: f64,
    /// sup at y = 0 of | |d rho_eps|^2_{lambda_bar} - 1 |
    pub boundary_drho: f64,
}

pub fn neck_diagnostics(geo: &SplicedGeometry) -> NeckDiagnostics {
    let ext = &geo.ext;
    let (nt, nb, np) = ext.shape();
    let c = geo.cfg.c();
    let half = -(c.ln());
    let mut s1 = 0.0f64;
    let mut s2 = 0.0f64;
    let mut s3 = 0.0f64;
    let y_neck = ScalarField::from_fn(ext, |t, b, _| (t + geo.cfg.big_t()).exp() * b.cos());
    let lap_em = ops::laplacian_field(&geo.em, &y_neck).unwrap();
    let lap_ref = ops::laplacian_field(&geo.em_ref, &y_neck).unwrap();
    let r_em = ops::scalar_curvature(&geo.em);
    let r_ref = ops::scalar_curvature(&geo.em_ref);
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        if geo.profiles.s_sym(t).abs() > half {
            continue;
        }
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                let (tt, b, _) = ext.coords(i, j, k);
                let yj = models::y_jet(tt + geo.cfg.big_t(), b);
                let emi = tensor::sym_inv(&geo.em.g_at(idx)).unwrap_or([0.0; 6]);
                let dy2 = tensor::dot(&emi, &yj.d, &yj.d);
                s1 = s1.max((1.0 - dy2).abs());
                s2 = s2.max((yj.v * (lap_em.data[idx] - lap_ref.data[idx])).abs());
                s3 = s3.max((r_em.data[idx] - r_ref.data[idx]).abs());
            }
        }
    }
    // boundary WAH identity |d rho|^2 = 1 at y = 0
    let mut bd = 0.0f64;
    for i in 0..nt {
        for k in 0..np {
            let idx = ext.idx(i, crate::grid::BOUNDARY_J, k);
            let (t, b, _) = ext.coords(i, crate::grid::BOUNDARY_J, k);
            let gi = geo.lambda_bar.ginv_at(idx);
            let rj = geo.profiles.rho_jet(t, b);
            bd = bd.max((tensor::dot(&gi, &rj.d, &rj.d) - 1.0).abs());
        }
    }
    NeckDiagnostics {
        sup_one_minus_dy2: s1,
        sup_y_lap_y: s2,
        sup_scalar_curv: s3,
        boundary_drho: bd,
    }
}

/// Exterior-restriction report: how exactly the glued fields reproduce the
/// seed on E_c.
#[derive(Clone, Debug, Serialize)]
pub struct ExteriorReport {
    pub lambda_bit_exact: bool,
    pub rho_sup_diff: f64,
    pub mu_sup_diff: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

pub fn exterior_restriction(
    seedd: &SeedData,
    geo: &SplicedGeometry,
    mom: &SplicedMomentum,
) -> Result<ExteriorReport> {
    let ext = &geo.ext;
    let c = geo.cfg.c();
    let window = -(c.ln());
    let (nt, nb, np) = ext.shape();
    let mut bit = true;
    let mut rho_diff = 0.0f64;
    let mut mu_diff = 0.0f64;
    let mut om_min = f64::INFINITY;
    let mut om_max: f64 = 0.0;
    for i in 0..nt {
        let t = ext.axes[0].nodes[i];
        if t.abs() > window {
            continue;
        }
        let si = seed_index(seedd, t)?;
        let om = geo.profiles.omega_value(t);
        om_min = om_min.min(om);
        om_max = om_max.max(om);
        for j in 0..nb {
            for k in 0..np {
                let idx = ext.idx(i, j, k);
                let sidx = seedd.grid.idx(si, j, k);
                for cc in 0..6 {
                    if geo.lambda_bar.tensor.comps[cc][idx] != seedd.gbar.tensor.comps[cc][sidx] {
                        bit = false;
                    }
                    let d = (mom.mu_bar.comps[cc][idx] - seedd.sigma_bar.comps[cc][sidx]).abs();
                    mu_diff = mu_diff.max(d);
                }
                let (tt, b, _) = ext.coords(i, j, k);
                rho_diff = rho_diff
                    .max((geo.profiles.rho_value(tt, b) - seed::rho_seed_value(tt, b)).abs());
            }
        }
    }
    Ok(ExteriorReport {
        lambda_bit_exact: bit,
        rho_sup_diff: rho_diff,
        mu_sup_diff: mu_diff,
        omega_min: om_min,
        omega_max: om_max,
    })
}
