//! Exact primitives of the hyperbolic upper half-space model: points, regions,
//! isometries, defining functions, and the inversion-symmetric cutoff profiles
//! used throughout the gluing construction.
//!
//! Coordinates are X = (x1, x2, y) with y > 0 in the interior and y = 0 on the
//! conformal boundary.  All profile functions carry closed-form first and
//! second derivatives via a small forward-mode jet type so that downstream
//! code never differentiates a cutoff numerically.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Value together with first and second derivative of a univariate function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet2 {
    pub const fn new(v: f64, d: f64, dd: f64) -> Self {
        Jet2 { v, d, dd }
    }

    /// Jet of the identity map at `x`.
    pub const fn var(x: f64) -> Self {
        Jet2 { v: x, d: 1.0, dd: 0.0 }
    }

    pub const fn constant(c: f64) -> Self {
        Jet2 { v: c, d: 0.0, dd: 0.0 }
    }

    pub fn add(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v + o.v, self.d + o.d, self.dd + o.dd)
    }

    pub fn sub(self, o: Jet2) -> Jet2 {
        Jet2::new(self.v - o.v, self.d - o.d, self.dd - o.dd)
    }

    pub fn mul(self, o: Jet2) -> Jet2 {
        Jet2::new(
            self.v * o.v,
            self.d * o.v + self.v * o.d,
            self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        )
    }

    pub fn div(self, o: Jet2) -> Jet2 {
        let v = self.v / o.v;
        let d = (self.d - v * o.d) / o.v;
        let dd = (self.dd - 2.0 * d * o.d - v * o.dd) / o.v;
        Jet2::new(v, d, dd)
    }

    pub fn scale(self, c: f64) -> Jet2 {
        Jet2::new(c * self.v, c * self.d, c * self.dd)
    }

    pub fn recip(self) -> Jet2 {
        Jet2::constant(1.0).div(self)
    }

    /// Composition g(f(x)) given the jet of g at f.v.
    pub fn chain(outer: Jet2, inner: Jet2) -> Jet2 {
        Jet2::new(
            outer.v,
            outer.d * inner.d,
            outer.dd * inner.d * inner.d + outer.d * inner.dd,
        )
    }
}

/// exp(-1/t) for t > 0, identically 0 for t <= 0.
fn bump(t: f64) -> Jet2 {
    if t <= 0.0 {
        return Jet2::constant(0.0);
    }
    let e = (-1.0 / t).exp();
    let d = e / (t * t);
    let dd = e * (1.0 - 2.0 * t) / (t * t * t * t);
    Jet2::new(e, d, dd)
}

/// Smooth monotone step: 0 on (-inf, 0], 1 on [1, inf), built from `bump`.
/// Satisfies step(t) + step(1 - t) = 1 exactly by construction.
pub fn smoothstep(t: f64) -> Jet2 {
    if t <= 0.0 {
        return Jet2::constant(0.0);
    }
    if t >= 1.0 {
        return Jet2::constant(1.0);
    }
    let n = bump(t);
    // m(t) = bump(1 - t); chain through the sign flip by hand.
    let m0 = bump(1.0 - t);
    let m = Jet2::new(m0.v, -m0.d, m0.dd);
    n.div(n.add(m))
}

/// Nondecreasing profile with eta = 0 on (-inf, 1/2] and eta = 1 on [2, inf).
pub fn eta(r: f64) -> Jet2 {
    let scale = 1.0 / 1.5;
    let u = Jet2::new((r - 0.5) * scale, scale, 0.0);
    Jet2::chain(smoothstep(u.v), u)
}

/// The cutoff of the splicing construction: nondecreasing, chi = 0 on
/// (0, 1/2], chi = 1 on [2, inf), and chi(r) + chi(1/r) = 1 for all r > 0.
///
/// Built as eta(r) / (eta(r) + eta(1/r)); the denominator is positive for
/// every r and the partition identity holds by construction.
pub fn chi_jet(r: f64) -> Result<Jet2> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("chi requires r > 0, got {r}")));
    }
    if r >= 2.0 {
        return Ok(Jet2::constant(1.0));
    }
    if r <= 0.5 {
        return Ok(Jet2::constant(0.0));
    }
    let rj = Jet2::var(r);
    let n = Jet2::chain(eta(r), rj);
    let inv = rj.recip();
    let m = Jet2::chain(eta(inv.v), inv);
    Ok(n.div(n.add(m)))
}

pub fn chi(r: f64) -> f64 {
    chi_jet(r).map(|j| j.v).unwrap_or(f64::NAN)
}

/// F(r) = chi(r) + r^{-2} chi(1/r).  Satisfies F(1/r) = r^2 F(r), F = 1 on
/// [2, inf) and F(r) = r^{-2} on (0, 1/2].
pub fn f_jet(r: f64) -> Result<Jet2> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("F requires r > 0, got {r}")));
    }
    if r >= 2.0 {
        return Ok(Jet2::constant(1.0));
    }
    let rj = Jet2::var(r);
    let r2inv = rj.mul(rj).recip();
    if r <= 0.5 {
        return Ok(r2inv);
    }
    let inv = rj.recip();
    let c = chi_jet(r)?;
    let cinv = Jet2::chain(chi_jet(inv.v)?, inv);
    Ok(c.add(r2inv.mul(cinv)))
}

pub fn f_cutoff(r: f64) -> f64 {
    f_jet(r).map(|j| j.v).unwrap_or(f64::NAN)
}

/// G(r) = chi(1/r) + r^{-2} chi(r): the mirror profile of `F`.  G = 1 on
/// (0, 1/2], G = r^{-2} on [2, inf), and y*G is inversion-invariant; used as
/// the radial part of the seed defining function.
pub fn g_jet(r: f64) -> Result<Jet2> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("G requires r > 0, got {r}")));
    }
    if r <= 0.5 {
        return Ok(Jet2::constant(1.0));
    }
    let rj = Jet2::var(r);
    let r2inv = rj.mul(rj).recip();
    if r >= 2.0 {
        return Ok(r2inv);
    }
    let inv = rj.recip();
    let c = chi_jet(r)?;
    let cinv = Jet2::chain(chi_jet(inv.v)?, inv);
    Ok(cinv.add(r2inv.mul(c)))
}

/// Integral of `smoothstep` from 0 to v, by fixed Gauss-Legendre quadrature.
fn smoothstep_integral(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if v >= 1.0 {
        // step(t) + step(1-t) = 1 makes the full integral exactly 1/2.
        return 0.5 + (v - 1.0);
    }
    // 40-point Gauss-Legendre on [0, v]; integrand is analytic inside (0,1).
    const N: usize = 40;
    let mut acc = 0.0;
    let (nodes, weights) = gauss_legendre_40();
    for i in 0..N {
        let t = 0.5 * v * (nodes[i] + 1.0);
        acc += weights[i] * smoothstep(t).v;
    }
    0.5 * v * acc
}

fn gauss_legendre_40() -> ([f64; 40], [f64; 40]) {
    // Nodes/weights computed once by Newton iteration on Legendre P_40.
    let mut nodes = [0.0; 40];
    let mut weights = [0.0; 40];
    let n = 40usize;
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = -x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The neck-weight profile: psi(x) = 2x on (0, 1/4], psi = 1 on [3/4, inf),
/// smooth and nondecreasing in between (psi' = 2(1 - step) there, which keeps
/// monotonicity exact and lands on 1 because the step integrates to 1/2).
pub fn psi_jet(x: f64) -> Result<Jet2> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("psi requires x > 0, got {x}")));
    }
    if x <= 0.25 {
        return Ok(Jet2::new(2.0 * x, 2.0, 0.0));
    }
    if x >= 0.75 {
        return Ok(Jet2::constant(1.0));
    }
    let u = (x - 0.25) * 2.0;
    let s = smoothstep(u);
    let value = (0.5 + 2.0 * ((x - 0.25) - 0.5 * smoothstep_integral(u))).min(1.0);
    Ok(Jet2::new(value, 2.0 * (1.0 - s.v), -4.0 * s.d))
}

pub fn psi(x: f64) -> f64 {
    psi_jet(x).map(|j| j.v).unwrap_or(f64::NAN)
}

/// Cutoff in log-radius: 1 on the annulus A_{1/a}, supported in A_{1/b}
/// (log-radii |ln r| < ln a and |ln r| < ln b, with b > a).
pub fn annulus_cutoff(r: f64, a: f64, b: f64) -> Jet2 {
    debug_assert!(b > a && a > 1.0);
    let s = r.ln().abs();
    let (la, lb) = (a.ln(), b.ln());
    if s <= la {
        return Jet2::constant(1.0);
    }
    if s >= lb {
        return Jet2::constant(0.0);
    }
    // d|ln r|/dr = sign(ln r)/r
    let sign = if r >= 1.0 { 1.0 } else { -1.0 };
    let u = Jet2::new((s - la) / (lb - la), sign / (r * (lb - la)), -sign / (r * r * (lb - la)));
    let st = Jet2::chain(smoothstep(u.v), u);
    Jet2::constant(1.0).sub(st)
}

// ---------------------------------------------------------------------------
// Points, isometries, regions
// ---------------------------------------------------------------------------

/// A point of the closed upper half space (y >= 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpacePoint {
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
}

impl HalfSpacePoint {
    pub fn new(x1: f64, x2: f64, y: f64) -> Self {
        HalfSpacePoint { x1, x2, y }
    }

    /// Euclidean radius |X|.
    pub fn radius(&self) -> f64 {
        (self.x1 * self.x1 + self.x2 * self.x2 + self.y * self.y).sqrt()
    }

    pub fn xnorm2(&self) -> f64 {
        self.x1 * self.x1 + self.x2 * self.x2
    }

    /// Hyperbolic distance to another interior point.
    pub fn hyperbolic_distance(&self, o: &HalfSpacePoint) -> f64 {
        let dx1 = self.x1 - o.x1;
        let dx2 = self.x2 - o.x2;
        let dy = self.y - o.y;
        let q = (dx1 * dx1 + dx2 * dx2 + dy * dy) / (2.0 * self.y * o.y);
        libm::acosh(1.0 + q)
    }
}

/// The inversion X -> X / |X|^2, an isometry of hyperbolic space fixing the
/// unit hemisphere and mapping each annulus A_r to itself.
pub fn inversion(p: &HalfSpacePoint) -> Result<HalfSpacePoint> {
    let r2 = p.x1 * p.x1 + p.x2 * p.x2 + p.y * p.y;
    if r2 == 0.0 {
        return Err(Error::Domain("inversion is undefined at the origin".into()));
    }
    Ok(HalfSpacePoint::new(p.x1 / r2, p.x2 / r2, p.y / r2))
}

/// The scaling isometry X -> eps * X.
pub fn scaling(eps: f64, p: &HalfSpacePoint) -> Result<HalfSpacePoint> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("scaling requires eps > 0, got {eps}")));
    }
    Ok(HalfSpacePoint::new(eps * p.x1, eps * p.x2, eps * p.y))
}

/// The ball-model defining function pulled back to the half space:
/// breve_rho = 2y / (|x|^2 + (1+y)^2).
pub fn breve_rho(p: &HalfSpacePoint) -> f64 {
    2.0 * p.y / (p.xnorm2() + (1.0 + p.y) * (1.0 + p.y))
}

/// Subsets of hyperbolic space used by the construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Hyperbolic ball of radius r centered at (0, 0, 1).
    BreveBall(f64),
    /// Y_r = { |x| < r, y < r }.
    Y(f64),
    /// A_r = { r < |X| < 1/r }   (requires r < 1).
    Annulus(f64),
    /// B_r = { |X| < r } in the closed half space.
    HalfBall(f64),
}

impl Region {
    pub fn contains(&self, p: &HalfSpacePoint) -> bool {
        match *self {
            Region::BreveBall(r) => {
                p.y > 0.0 && p.hyperbolic_distance(&HalfSpacePoint::new(0.0, 0.0, 1.0)) < r
            }
            Region::Y(r) => p.xnorm2().sqrt() < r && p.y < r,
            Region::Annulus(r) => {
                let rr = p.radius();
                r < rr && rr < 1.0 / r
            }
            Region::HalfBall(r) => p.radius() < r,
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            Region::BreveBall(r) | Region::Y(r) | Region::Annulus(r) | Region::HalfBall(r) => r,
        }
    }
}

/// A Moebius parametrization (x, y) -> (x* + y* x, y* y) of a unit-scale
/// neighborhood, the basic chart for all uniform norm definitions.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MobiusParam {
    pub center: HalfSpacePoint,
    /// Domain radius of the parametrized hyperbolic ball, in [1, 2].
    pub domain_radius: f64,
}

impl MobiusParam {
    pub fn new(center: HalfSpacePoint, domain_radius: f64) -> Result<Self> {
        if !(center.y > 0.0) {
            return Err(Error::Domain("Moebius center must have y > 0".into()));
        }
        if !(1.0..=2.0).contains(&domain_radius) {
            return Err(Error::Domain(format!(
                "Moebius domain radius must lie in [1,2], got {domain_radius}"
            )));
        }
        Ok(MobiusParam { center, domain_radius })
    }

    /// Apply the parametrization to a point of the domain ball.
    pub fn apply(&self, q: &HalfSpacePoint) -> Result<HalfSpacePoint> {
        if !Region::BreveBall(self.domain_radius).contains(q) && q.y > 0.0 {
            let d = q.hyperbolic_distance(&HalfSpacePoint::new(0.0, 0.0, 1.0));
            if d > self.domain_radius {
                return Err(Error::Domain(format!(
                    "point at hyperbolic distance {d:.3} outside Moebius domain radius {}",
                    self.domain_radius
                )));
            }
        }
        Ok(HalfSpacePoint::new(
            self.center.x1 + self.center.y * q.x1,
            self.center.x2 + self.center.y * q.x2,
            self.center.y * q.y,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                (a.ln() * (1.0 - t) + b.ln() * t).exp()
            })
            .collect()
    }

    #[test]
    fn chi_partition_of_unity() {
        for r in logspace(1e-3, 1e3, 10_000) {
            let s = chi(r) + chi(1.0 / r);
            assert!((s - 1.0).abs() < 1e-12, "chi(r)+chi(1/r) = {s} at r = {r}");
        }
    }

    #[test]
    fn chi_endpoints_and_midpoint() {
        assert_eq!(chi(2.0), 1.0);
        assert_eq!(chi(0.5), 0.0);
        assert_eq!(chi(3.0), 1.0);
        assert_abs_diff_eq!(chi(1.0), 0.5, epsilon = 1e-15);
        // nondecreasing on a fine grid
        let mut prev = -1.0;
        for r in logspace(0.1, 10.0, 2000) {
            let v = chi(r);
            assert!(v >= prev - 1e-14, "chi not nondecreasing at r = {r}");
            prev = v;
        }
    }

    #[test]
    fn f_scaling_identity() {
        for r in logspace(1e-2, 1e2, 10_000) {
            let lhs = f_cutoff(1.0 / r);
            let rhs = r * r * f_cutoff(r);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0),
                "F(1/r) - r^2 F(r) = {} at r = {r}",
                lhs - rhs
            );
        }
        assert_eq!(f_cutoff(3.0), 1.0);
        assert_eq!(f_cutoff(1.0 / 3.0), 9.0);
        assert_eq!(f_cutoff(0.25), 16.0);
        for r in logspace(1e-3, 1e3, 300) {
            assert!(f_cutoff(r) > 0.0);
        }
    }

    #[test]
    fn g_profile_and_inversion_invariance_of_yg() {
        assert_eq!(g_jet(0.3).unwrap().v, 1.0);
        assert_abs_diff_eq!(g_jet(4.0).unwrap().v, 1.0 / 16.0, epsilon = 1e-15);
        // y G and y F are inversion invariant: (y/r^2) P(1/r) = y P(r).
        for r in logspace(1e-2, 1e2, 500) {
            for (p, q) in [(f_cutoff(r), f_cutoff(1.0 / r)), (g_jet(r).unwrap().v, g_jet(1.0 / r).unwrap().v)] {
                let lhs = q / (r * r);
                assert!((lhs - p).abs() < 1e-12 * p.abs().max(1.0));
            }
        }
    }

    #[test]
    fn psi_law() {
        assert_abs_diff_eq!(psi(0.125), 0.25, epsilon = 1e-15);
        assert_eq!(psi(1.0), 1.0);
        assert_eq!(psi(0.75), 1.0);
        let mid = psi(0.5);
        assert!(mid > 0.5 && mid < 1.0, "psi(1/2) = {mid}");
        let mut prev = 0.0;
        for i in 1..2000 {
            let x = i as f64 * 1e-3;
            let v = psi(x);
            assert!(v >= prev - 1e-14, "psi not nondecreasing at {x}");
            assert!(v > 0.0 && v <= 1.0);
            prev = v;
        }
        // continuity across the matching points
        assert_abs_diff_eq!(psi(0.25 + 1e-9), 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(psi(0.75 - 1e-9), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn profile_jets_match_finite_differences() {
        let h = 1e-5;
        for r in [0.6, 0.9, 1.0, 1.3, 1.9, 0.52, 0.3, 2.5] {
            for (name, f) in [
                ("chi", chi_jet as fn(f64) -> Result<Jet2>),
                ("F", f_jet),
                ("G", g_jet),
            ] {
                let j = f(r).unwrap();
                let fp = (f(r + h).unwrap().v - f(r - h).unwrap().v) / (2.0 * h);
                let fpp = (f(r + h).unwrap().v - 2.0 * j.v + f(r - h).unwrap().v) / (h * h);
                assert!((j.d - fp).abs() < 1e-7 * (1.0 + fp.abs()), "{name}' at {r}: {} vs {fp}", j.d);
                assert!((j.dd - fpp).abs() < 2e-4 * (1.0 + fpp.abs()), "{name}'' at {r}: {} vs {fpp}", j.dd);
            }
        }
        for x in [0.3, 0.5, 0.7] {
            let j = psi_jet(x).unwrap();
            let fp = (psi(x + h) - psi(x - h)) / (2.0 * h);
            let fpp = (psi(x + h) - 2.0 * j.v + psi(x - h)) / (h * h);
            assert!((j.d - fp).abs() < 1e-7);
            assert!((j.dd - fpp).abs() < 2e-4 * (1.0 + fpp.abs()));
        }
    }

    #[test]
    fn inversion_fixed_point_and_example() {
        let p = HalfSpacePoint::new(0.0, 0.0, 1.0);
        let q = inversion(&p).unwrap();
        assert_eq!(q, p);
        let p = HalfSpacePoint::new(3.0, 0.0, 4.0);
        let q = inversion(&p).unwrap();
        assert_abs_diff_eq!(q.x1, 3.0 / 25.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.y, 4.0 / 25.0, epsilon = 1e-15);
        assert!(inversion(&HalfSpacePoint::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn scaling_examples() {
        let p = HalfSpacePoint::new(1.0, 0.0, 1.0);
        assert_eq!(scaling(1.0, &p).unwrap(), p);
        let q = scaling(2.0, &p).unwrap();
        assert_eq!(q, HalfSpacePoint::new(2.0, 0.0, 2.0));
        assert!(scaling(0.0, &p).is_err());
        assert!(scaling(-1.0, &p).is_err());
    }

    #[test]
    fn breve_rho_values_and_annulus_equivalence() {
        assert_abs_diff_eq!(breve_rho(&HalfSpacePoint::new(0.0, 0.0, 1.0)), 0.5, epsilon = 1e-15);
        assert_eq!(breve_rho(&HalfSpacePoint::new(0.0, 0.0, 0.0)), 0.0);
        // brute-force sup/inf of breve_rho / y over a fine grid on A_c
        let c: f64 = 0.25;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..200 {
            for j in 1..200 {
                let r = (c.ln() + (1.0 / c / c).ln() * i as f64 / 199.0).exp();
                let th = std::f64::consts::FRAC_PI_2 * j as f64 / 200.0;
                let p = HalfSpacePoint::new(r * th.sin(), 0.0, r * th.cos());
                if Region::Annulus(c).contains(&p) {
                    let ratio = breve_rho(&p) / p.y;
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                }
            }
        }
        assert!(lo > 0.0 && hi.is_finite());
        assert!(hi / lo < 1e3, "equivalence constant blew up: {}", hi / lo);
    }

    #[test]
    fn inversion_preserves_annulus() {
        let reg = Region::Annulus(0.2);
        for &(a, b, c) in &[(0.3, 0.1, 0.4), (1.0, 0.0, 2.0), (0.0, 0.0, 4.0), (0.21, 0.0, 0.01)] {
            let p = HalfSpacePoint::new(a, b, c);
            let q = inversion(&p).unwrap();
            assert_eq!(reg.contains(&p), reg.contains(&q));
        }
    }

    #[test]
    fn mobius_examples_and_containment() {
        // center (0,1): identity
        let m = MobiusParam::new(HalfSpacePoint::new(0.0, 0.0, 1.0), 2.0).unwrap();
        let q = HalfSpacePoint::new(0.3, -0.2, 0.8);
        assert_eq!(m.apply(&q).unwrap(), q);
        // image of the ball center is the chart center
        let m = MobiusParam::new(HalfSpacePoint::new(0.4, -0.1, 0.05), 2.0).unwrap();
        let c = m.apply(&HalfSpacePoint::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(c, m.center);
        // unit-centered B_2 sits inside A_{1/8} (e^2 < 8), which is what makes
        // parametrizations with centers in Y_{1/8} land inside the chart box
        let mut sampled = 0usize;
        for i in 0..24 {
            for k in 1..24 {
                let q = HalfSpacePoint::new(-4.0 + i as f64 / 3.0, 0.0, k as f64 / 3.0);
                if Region::BreveBall(2.0).contains(&q) {
                    sampled += 1;
                    assert!(Region::Annulus(0.125).contains(&q), "B_2 point {q:?} outside A_1/8");
                }
            }
        }
        assert!(sampled > 20);
        let centers = [
            HalfSpacePoint::new(0.1, 0.0, 0.05),
            HalfSpacePoint::new(-0.08, 0.05, 0.1),
            HalfSpacePoint::new(0.0, 0.0, 0.001),
        ];
        let mut m = MobiusParam::new(centers[0], 2.0).unwrap();
        for c in centers {
            assert!(Region::Y(0.125).contains(&c));
            m = MobiusParam::new(c, 2.0).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    for k in 1..6 {
                        let q = HalfSpacePoint::new(
                            -1.0 + 0.4 * i as f64,
                            -1.0 + 0.4 * j as f64,
                            0.4 * k as f64,
                        );
                        if Region::BreveBall(2.0).contains(&q) {
                            let img = m.apply(&q).unwrap();
                            // image stays inside the background chart box Y_1
                            assert!(
                                Region::Y(1.0).contains(&img),
                                "image {img:?} escaped the chart box for center {c:?}"
                            );
                        }
                    }
                }
            }
        }
        // outside domain -> error
        assert!(m.apply(&HalfSpacePoint::new(0.0, 0.0, 20.0)).is_err());
    }

    #[test]
    fn annulus_cutoff_profile() {
        let j = annulus_cutoff(1.0, 4.0, 6.0);
        assert_eq!(j.v, 1.0);
        assert_eq!(annulus_cutoff(7.0, 4.0, 6.0).v, 0.0);
        assert_eq!(annulus_cutoff(1.0 / 7.0, 4.0, 6.0).v, 0.0);
        let mid = annulus_cutoff(5.0, 4.0, 6.0).v;
        assert!(mid > 0.0 && mid < 1.0);
        // symmetric in r -> 1/r
        for r in [3.0, 4.5, 5.5] {
            let a = annulus_cutoff(r, 4.0, 6.0).v;
            let b = annulus_cutoff(1.0 / r, 4.0, 6.0).v;
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }
}
