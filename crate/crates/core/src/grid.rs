//! Grid-based fields on chart boxes.
//!
//! Production charts are log-polar: coordinates (t, b, p) with t = ln r,
//! b the angle from the symmetry axis (b = pi/2 is the conformal boundary
//! y = 0), and p the azimuthal angle.  The grid machinery itself is generic:
//! per-axis node placement (uniform or geometric), per-axis topology, and
//! finite-difference stencils of configurable order generated by polynomial
//! fitting, so one-sided and graded stencils come out of the same code path.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

pub const BOUNDARY_J: usize = 0; // index of the y = 0 node row on the angular axis

/// Node placement rule along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Grading {
    Uniform,
    /// Spacing shrinks geometrically toward the `lo` end by this ratio < 1.
    GeometricTowardLo(f64),
    /// Spacing shrinks geometrically toward the `hi` end.
    GeometricTowardHi(f64),
}

/// Topology / closure of one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AxisTopology {
    /// Plain interval; one-sided stencils at both ends.
    Bounded,
    /// Periodic with the given period; spacing must be uniform.
    Periodic,
    /// `lo` end is a boundary row (one-sided stencils); `hi` end is a polar
    /// axis half a cell beyond the last node, crossed by parity reflection.
    BoundaryToAxis,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub nodes: Vec<f64>,
    pub topology: AxisTopology,
    pub grading: Grading,
}

impl Axis {
    pub fn uniform(label: &str, lo: f64, hi: f64, n: usize) -> Axis {
        let nodes = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect();
        Axis { label: label.into(), nodes, topology: AxisTopology::Bounded, grading: Grading::Uniform }
    }

    pub fn periodic(label: &str, lo: f64, period: f64, n: usize) -> Axis {
        let nodes = (0..n).map(|i| lo + period * i as f64 / n as f64).collect();
        Axis { label: label.into(), nodes, topology: AxisTopology::Periodic, grading: Grading::Uniform }
    }

    /// Geometrically graded bounded axis, refined toward `lo` (ratio < 1).
    pub fn geometric(label: &str, lo: f64, hi: f64, n: usize, ratio: f64) -> Result<Axis> {
        if !(ratio > 0.0) || ratio >= 1.0 {
            return Err(Error::Config(format!("geometric grading ratio must be in (0,1), got {ratio}")));
        }
        // spacings h, h*ratio^{-1}, ... increasing away from lo
        let m = n - 1;
        let mut spac = Vec::with_capacity(m);
        let mut s = 1.0;
        for _ in 0..m {
            spac.push(s);
            s /= ratio;
        }
        let total: f64 = spac.iter().sum();
        let mut nodes = Vec::with_capacity(n);
        let mut x = lo;
        nodes.push(x);
        for h in &spac {
            x += (hi - lo) * h / total;
            nodes.push(x);
        }
        nodes[m] = hi;
        Ok(Axis {
            label: label.into(),
            nodes,
            topology: AxisTopology::Bounded,
            grading: Grading::GeometricTowardLo(ratio),
        })
    }

    /// Angular axis from the boundary row b = hi (= pi/2) down to half a cell
    /// off the polar axis; node 0 sits exactly on the boundary.
    pub fn polar_angle(n: usize) -> Axis {
        let h = std::f64::consts::FRAC_PI_2 / (n as f64 - 0.5);
        let nodes = (0..n).map(|j| std::f64::consts::FRAC_PI_2 - j as f64 * h).collect();
        Axis {
            label: "beta".into(),
            nodes,
            topology: AxisTopology::BoundaryToAxis,
            grading: Grading::Uniform,
        }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn lo(&self) -> f64 {
        self.nodes.first().copied().unwrap_or(0.0)
    }

    pub fn hi(&self) -> f64 {
        self.nodes.last().copied().unwrap_or(0.0)
    }

    pub fn spacing(&self) -> f64 {
        if self.nodes.len() < 2 {
            0.0
        } else {
            self.nodes[1] - self.nodes[0]
        }
    }

    pub fn period(&self) -> f64 {
        debug_assert!(matches!(self.topology, AxisTopology::Periodic));
        self.n() as f64 * self.spacing()
    }

    fn validate(&self, min_width: usize) -> Result<()> {
        if self.n() < min_width && self.n() != 1 {
            return Err(Error::Config(format!(
                "axis {} has {} nodes, below stencil width {min_width}",
                self.label,
                self.n()
            )));
        }
        for w in self.nodes.windows(2) {
            if w[1] <= w[0] && !(self.topology == AxisTopology::BoundaryToAxis) {
                return Err(Error::Config(format!("axis {} nodes not increasing", self.label)));
            }
            if w[1] >= w[0] && self.topology == AxisTopology::BoundaryToAxis {
                return Err(Error::Config(format!("axis {} must decrease from the boundary", self.label)));
            }
        }
        Ok(())
    }
}

/// Reference to a (possibly reflected) sample along one axis.
#[derive(Clone, Copy, Debug)]
enum Tap {
    Real(usize),
    /// Mirrored across the polar axis: read this real index, multiply by the
    /// component parity, and (in 3D) shift the azimuth by half a turn.
    Mirror(usize),
}

#[derive(Clone, Debug)]
struct Stencil {
    taps: Vec<(Tap, f64)>,
}

/// Fornberg-style weights: m-th derivative at `x0` from nodes `xs`.
fn fd_weights(x0: f64, xs: &[f64], m: usize) -> Vec<f64> {
    let n = xs.len();
    // c[k][j]: weight of node j for k-th derivative; classic recursion.
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c[m].clone()
}

/// Per-axis table of derivative stencils.
#[derive(Clone, Debug)]
struct AxisStencils {
    d1: Vec<Stencil>,
    d2: Vec<Stencil>,
}

fn build_axis_stencils(axis: &Axis, order: usize, min_index: usize) -> AxisStencils {
    let n = axis.n();
    if n == 1 {
        // degenerate (axisymmetric) axis: derivatives vanish identically
        let z = Stencil { taps: vec![] };
        return AxisStencils { d1: vec![z.clone()], d2: vec![z] };
    }
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    for i in 0..n {
        if i < min_index {
            d1.push(Stencil { taps: vec![] });
            d2.push(Stencil { taps: vec![] });
        } else {
            d1.push(stencil_at(axis, order, i, 1, min_index));
            d2.push(stencil_at(axis, order, i, 2, min_index));
        }
    }
    AxisStencils { d1, d2 }
}

fn stencil_at(axis: &Axis, order: usize, i: usize, m: usize, min_index: usize) -> Stencil {
    let n = axis.n() as isize;
    // Near the polar axis, inverse-metric factors of size 1/sin^2(beta)
    // amplify truncation error by two orders; widen the stencil there to
    // keep the global accuracy uniform.
    let boost = if axis.topology == AxisTopology::BoundaryToAxis && axis.nodes[i] < 0.35 {
        2
    } else {
        0
    };
    let w = (order + boost + m) as isize; // window size giving accuracy `order`
    let i = i as isize;
    let min_index = min_index as isize;
    // candidate window centered at i
    let mut lo = i - w / 2;
    match axis.topology {
        AxisTopology::Periodic => {}
        AxisTopology::Bounded => {
            lo = lo.clamp(0, n - w);
        }
        AxisTopology::BoundaryToAxis => {
            // boundary end (index 0 or min_index): clamp; axis end (index
            // n-1): allow ghost indices beyond n-1, resolved by reflection.
            if lo < min_index {
                lo = min_index;
            }
        }
    }
    let x0 = axis.nodes[i as usize];
    let mut xs = Vec::with_capacity(w as usize);
    let mut taps = Vec::with_capacity(w as usize);
    for o in 0..w {
        let j = lo + o;
        match axis.topology {
            AxisTopology::Periodic => {
                let period = axis.period();
                let jr = j.rem_euclid(n);
                let shift = ((j - jr) / n) as f64 * period;
                xs.push(axis.nodes[jr as usize] + shift);
                taps.push(Tap::Real(jr as usize));
            }
            AxisTopology::Bounded => {
                xs.push(axis.nodes[j as usize]);
                taps.push(Tap::Real(j as usize));
            }
            AxisTopology::BoundaryToAxis => {
                if j < n {
                    xs.push(axis.nodes[j as usize]);
                    taps.push(Tap::Real(j as usize));
                } else {
                    // ghost beyond the polar axis: nodes sit at
                    // pi/2 - (j + 1/2 reflected) spacing; mirror index
                    let g = j - n; // 0-based ghost count
                    let mirror = (n - 1 - g) as usize;
                    // ghost coordinate: reflect across the axis value 0 side:
                    // axis end coordinate is nodes[n-1] (= h/2 above 0);
                    // ghost node g sits at -(nodes[n-1-g])  ... relative to 0
                    let ax = axis.nodes[mirror];
                    xs.push(-ax);
                    taps.push(Tap::Mirror(mirror));
                }
            }
        }
    }
    let ws = fd_weights(x0, &xs, m);
    Stencil { taps: taps.into_iter().zip(ws).collect() }
}

/// Which angular rows a derivative may read.
///
/// `Interior` treats the y = 0 row as absent: stencils near the boundary are
/// one-sided from row 1 inward, and output on row 0 is zero (trimmed domain).
/// Required when differentiating unbarred quantities that blow up at y = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivDomain {
    Full,
    Interior,
}

/// Discretized chart box with cached stencil tables.
#[derive(Clone, Debug)]
pub struct ChartGrid {
    pub axes: [Axis; 3],
    pub fd_order: usize,
    stencils: [AxisStencils; 3],
    stencils_b_interior: AxisStencils,
}

impl PartialEq for ChartGrid {
    fn eq(&self, other: &Self) -> bool {
        self.fd_order == other.fd_order
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                a.topology == b.topology && a.nodes == b.nodes
            })
    }
}

impl ChartGrid {
    pub fn new(axes: [Axis; 3], fd_order: usize) -> Result<Arc<ChartGrid>> {
        if fd_order != 2 && fd_order != 4 {
            return Err(Error::Config(format!("finite-difference order must be 2 or 4, got {fd_order}")));
        }
        for ax in &axes {
            ax.validate(fd_order + 2)?;
        }
        let stencils = [
            build_axis_stencils(&axes[0], fd_order, 0),
            build_axis_stencils(&axes[1], fd_order, 0),
            build_axis_stencils(&axes[2], fd_order, 0),
        ];
        let stencils_b_interior = if axes[1].topology == AxisTopology::BoundaryToAxis {
            build_axis_stencils(&axes[1], fd_order, 1)
        } else {
            stencils[1].clone()
        };
        Ok(Arc::new(ChartGrid { axes, fd_order, stencils, stencils_b_interior }))
    }

    /// Log-polar half-space chart: t in [t_lo, t_hi] (bounded or periodic),
    /// `nb` angular nodes from the boundary down to the axis, `np` azimuthal
    /// nodes (1 = axisymmetric).
    pub fn log_polar(
        t_lo: f64,
        t_hi: f64,
        nt: usize,
        nb: usize,
        np: usize,
        periodic_t: bool,
        fd_order: usize,
    ) -> Result<Arc<ChartGrid>> {
        let t = if periodic_t {
            Axis::periodic("t", t_lo, t_hi - t_lo, nt)
        } else {
            Axis::uniform("t", t_lo, t_hi, nt)
        };
        let b = Axis::polar_angle(nb);
        let p = if np == 1 {
            Axis {
                label: "phi".into(),
                nodes: vec![0.0],
                topology: AxisTopology::Periodic,
                grading: Grading::Uniform,
            }
        } else {
            Axis::periodic("phi", 0.0, std::f64::consts::TAU, np)
        };
        ChartGrid::new([t, b, p], fd_order)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.axes[0].n(), self.axes[1].n(), self.axes[2].n())
    }

    pub fn len(&self) -> usize {
        self.axes[0].n() * self.axes[1].n() * self.axes[2].n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axisymmetric(&self) -> bool {
        self.axes[2].n() == 1
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.axes[1].n() + j) * self.axes[2].n() + k
    }

    #[inline]
    pub fn unidx(&self, idx: usize) -> (usize, usize, usize) {
        let np = self.axes[2].n();
        let nb = self.axes[1].n();
        let k = idx % np;
        let j = (idx / np) % nb;
        let i = idx / (np * nb);
        (i, j, k)
    }

    /// Chart coordinates of a node.
    #[inline]
    pub fn coords(&self, i: usize, j: usize, k: usize) -> (f64, f64, f64) {
        (self.axes[0].nodes[i], self.axes[1].nodes[j], self.axes[2].nodes[k])
    }

    /// Is this node on the conformal boundary (y = 0)?
    #[inline]
    pub fn on_boundary(&self, j: usize) -> bool {
        matches!(self.axes[1].topology, AxisTopology::BoundaryToAxis) && j == BOUNDARY_J
    }

    /// Partial derivative along `axis` of one component array.
    ///
    /// `parity` is the sign the component picks up under reflection across
    /// the polar axis (product of -1 per angular index).
    pub fn deriv(&self, axis: usize, m: usize, data: &[f64], parity: f64) -> Vec<f64> {
        let mut out = vec![0.0; data.len()];
        self.deriv_domain_into(axis, m, data, parity, DerivDomain::Full, &mut out);
        out
    }

    pub fn deriv_interior(&self, axis: usize, m: usize, data: &[f64], parity: f64) -> Vec<f64> {
        let mut out = vec![0.0; data.len()];
        self.deriv_domain_into(axis, m, data, parity, DerivDomain::Interior, &mut out);
        out
    }

    pub fn deriv_into(&self, axis: usize, m: usize, data: &[f64], parity: f64, out: &mut [f64]) {
        self.deriv_domain_into(axis, m, data, parity, DerivDomain::Full, out);
    }

    pub fn deriv_domain_into(
        &self,
        axis: usize,
        m: usize,
        data: &[f64],
        parity: f64,
        domain: DerivDomain,
        out: &mut [f64],
    ) {
        let (nt, nb, np) = self.shape();
        let base = if axis == 1 && domain == DerivDomain::Interior {
            &self.stencils_b_interior
        } else {
            &self.stencils[axis]
        };
        let table = match m {
            1 => &base.d1,
            2 => &base.d2,
            _ => panic!("only first and second derivatives supported"),
        };
        if self.axes[axis].n() == 1 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let halfp = np / 2;
        let jmin = if domain == DerivDomain::Interior
            && matches!(self.axes[1].topology, AxisTopology::BoundaryToAxis)
        {
            1
        } else {
            0
        };
        for i in 0..nt {
            for j in 0..nb {
                if j < jmin {
                    for k in 0..np {
                        out[self.idx(i, j, k)] = 0.0;
                    }
                    continue;
                }
                for k in 0..np {
                    let s = match axis {
                        0 => &table[i],
                        1 => &table[j],
                        _ => &table[k],
                    };
                    let mut acc = 0.0;
                    for &(tap, w) in &s.taps {
                        let v = match (axis, tap) {
                            (0, Tap::Real(ii)) => data[self.idx(ii, j, k)],
                            (1, Tap::Real(jj)) => data[self.idx(i, jj, k)],
                            (1, Tap::Mirror(jj)) => {
                                let kk = if np > 1 { (k + halfp) % np } else { k };
                                parity * data[self.idx(i, jj, kk)]
                            }
                            (2, Tap::Real(kk)) => data[self.idx(i, j, kk)],
                            _ => unreachable!("mirror taps only occur on the angular axis"),
                        };
                        acc += w * v;
                    }
                    out[self.idx(i, j, k)] = acc;
                }
            }
        }
    }

    /// Trapezoid-type quadrature weights per axis node (for volume integrals).
    pub fn quad_weights(&self, axis: usize) -> Vec<f64> {
        let ax = &self.axes[axis];
        let n = ax.n();
        if n == 1 {
            // axisymmetric azimuth: weight = full circle
            return vec![if axis == 2 { std::f64::consts::TAU } else { 1.0 }];
        }
        let mut w = vec![0.0; n];
        match ax.topology {
            AxisTopology::Periodic => {
                let h = ax.spacing().abs();
                w.iter_mut().for_each(|v| *v = h);
            }
            _ => {
                for i in 0..n - 1 {
                    let h = (ax.nodes[i + 1] - ax.nodes[i]).abs();
                    w[i] += 0.5 * h;
                    w[i + 1] += 0.5 * h;
                }
                if ax.topology == AxisTopology::BoundaryToAxis {
                    // half cell between the last node and the polar axis
                    w[n - 1] += ax.nodes[n - 1].abs();
                }
            }
        }
        w
    }

    /// Tensor-product Lagrange interpolation of one component at chart
    /// coordinates (t, b, p); degree = fd_order.
    pub fn interp(&self, data: &[f64], parity: f64, t: f64, b: f64, p: f64) -> Result<f64> {
        Ok(self.interp_plan(t, b, p)?.apply(self, data, parity))
    }

    /// Precompute taps and weights for interpolation at one point, so that
    /// many components can be evaluated without re-locating the axes.
    pub fn interp_plan(&self, t: f64, b: f64, p: f64) -> Result<InterpPlan> {
        let npts = self.fd_order + 1;
        let (it, wt) = self.interp_axis(0, t, npts)?;
        let (ib, wb) = self.interp_axis(1, b, npts)?;
        let (ip, wp) = if self.axes[2].n() == 1 {
            (vec![Tap::Real(0)], vec![1.0])
        } else {
            self.interp_axis(2, p, npts)?
        };
        let np = self.axes[2].n();
        let halfp = np / 2;
        let mut taps = Vec::with_capacity(it.len() * ib.len() * ip.len());
        for (a, &ta) in it.iter().enumerate() {
            for (b_, &tb) in ib.iter().enumerate() {
                for (c, &tc) in ip.iter().enumerate() {
                    let w = wt[a] * wb[b_] * wp[c];
                    let i = match ta {
                        Tap::Real(v) => v,
                        Tap::Mirror(_) => unreachable!(),
                    };
                    let k0 = match tc {
                        Tap::Real(v) => v,
                        Tap::Mirror(_) => unreachable!(),
                    };
                    match tb {
                        Tap::Real(j) => taps.push((self.idx(i, j, k0), w, false)),
                        Tap::Mirror(j) => {
                            let kk = if np > 1 { (k0 + halfp) % np } else { k0 };
                            taps.push((self.idx(i, j, kk), w, true));
                        }
                    }
                }
            }
        }
        Ok(InterpPlan { taps })
    }

    fn interp_axis(&self, axis: usize, x: f64, npts: usize) -> Result<(Vec<Tap>, Vec<f64>)> {
        let ax = &self.axes[axis];
        let n = ax.n() as isize;
        let w = npts as isize;
        // locate bracketing index on the (possibly decreasing) node array
        let increasing = ax.nodes[1] > ax.nodes[0];
        let mut xq = x;
        if ax.topology == AxisTopology::Periodic {
            let period = ax.period();
            let lo = ax.lo();
            xq = lo + (x - lo).rem_euclid(period);
        }
        let pos = if increasing {
            ax.nodes.partition_point(|&v| v < xq) as isize
        } else {
            ax.nodes.partition_point(|&v| v > xq) as isize
        };
        let mut lo = pos - w / 2;
        match ax.topology {
            AxisTopology::Periodic => {}
            AxisTopology::Bounded => {
                if xq < ax.lo() - 1e-12 || xq > ax.hi() + 1e-12 {
                    return Err(Error::Resolution(format!(
                        "interpolation point {xq} outside axis {} range",
                        ax.label
                    )));
                }
                lo = lo.clamp(0, n - w);
            }
            AxisTopology::BoundaryToAxis => {
                if lo < 0 {
                    lo = 0;
                }
                if lo + w > n + 2 {
                    return Err(Error::Resolution(format!(
                        "interpolation point {xq} beyond polar axis on {}",
                        ax.label
                    )));
                }
            }
        }
        let mut xs = Vec::with_capacity(npts);
        let mut taps = Vec::with_capacity(npts);
        for o in 0..w {
            let j = lo + o;
            match ax.topology {
                AxisTopology::Periodic => {
                    let period = ax.period();
                    let jr = j.rem_euclid(n);
                    let shift = ((j - jr) as f64 / n as f64) * period;
                    xs.push(ax.nodes[jr as usize] + shift);
                    taps.push(Tap::Real(jr as usize));
                }
                AxisTopology::Bounded => {
                    xs.push(ax.nodes[j as usize]);
                    taps.push(Tap::Real(j as usize));
                }
                AxisTopology::BoundaryToAxis => {
                    if j < n {
                        xs.push(ax.nodes[j as usize]);
                        taps.push(Tap::Real(j as usize));
                    } else {
                        let g = j - n;
                        let mirror = (n - 1 - g) as usize;
                        xs.push(-ax.nodes[mirror]);
                        taps.push(Tap::Mirror(mirror));
                    }
                }
            }
        }
        // Lagrange weights
        let mut ws = vec![0.0; npts];
        for a in 0..npts {
            let mut wgt = 1.0;
            for b in 0..npts {
                if a != b {
                    wgt *= (xq - xs[b]) / (xs[a] - xs[b]);
                }
            }
            ws[a] = wgt;
        }
        Ok((taps, ws))
    }
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// Precomputed interpolation taps at one point.
#[derive(Clone, Debug)]
pub struct InterpPlan {
    /// (flat node index, weight, mirrored-across-axis flag)
    taps: Vec<(usize, f64, bool)>,
}

impl InterpPlan {
    pub fn apply(&self, _grid: &ChartGrid, data: &[f64], parity: f64) -> f64 {
        let mut acc = 0.0;
        for &(idx, w, mirrored) in &self.taps {
            let v = if mirrored { parity * data[idx] } else { data[idx] };
            acc += w * v;
        }
        acc
    }
}

/// Reflection parity of a component with `nang` angular (beta) indices.
#[inline]
pub fn parity_for(nang: usize) -> f64 {
    if nang % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Symmetric 2-tensor component order: (tt, tb, tp, bb, bp, pp).
pub const SYM_IDX: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

#[inline]
pub fn sym_flat(a: usize, b: usize) -> usize {
    match (a.min(b), a.max(b)) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        (2, 2) => 5,
        _ => unreachable!(),
    }
}

pub const SYM_PARITY: [f64; 6] = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
pub const VEC_PARITY: [f64; 3] = [1.0, -1.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Covariant,
    Contravariant,
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    pub grid: Arc<ChartGrid>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct VectorField {
    pub grid: Arc<ChartGrid>,
    pub comps: [Vec<f64>; 3],
}

#[derive(Clone, Debug)]
pub struct CovectorField {
    pub grid: Arc<ChartGrid>,
    pub comps: [Vec<f64>; 3],
}

#[derive(Clone, Debug)]
pub struct SymTensorField {
    pub grid: Arc<ChartGrid>,
    pub variance: Variance,
    pub comps: [Vec<f64>; 6],
}

impl ScalarField {
    pub fn zeros(grid: &Arc<ChartGrid>) -> Self {
        ScalarField { grid: grid.clone(), data: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: &Arc<ChartGrid>, mut f: impl FnMut(f64, f64, f64) -> f64) -> Self {
        let mut data = vec![0.0; grid.len()];
        let (nt, nb, np) = grid.shape();
        for i in 0..nt {
            for j in 0..nb {
                for k in 0..np {
                    let (t, b, p) = grid.coords(i, j, k);
                    data[grid.idx(i, j, k)] = f(t, b, p);
                }
            }
        }
        ScalarField { grid: grid.clone(), data }
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl VectorField {
    pub fn zeros(grid: &Arc<ChartGrid>) -> Self {
        VectorField { grid: grid.clone(), comps: std::array::from_fn(|_| vec![0.0; grid.len()]) }
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl CovectorField {
    pub fn zeros(grid: &Arc<ChartGrid>) -> Self {
        CovectorField { grid: grid.clone(), comps: std::array::from_fn(|_| vec![0.0; grid.len()]) }
    }
}

impl SymTensorField {
    pub fn zeros(grid: &Arc<ChartGrid>, variance: Variance) -> Self {
        SymTensorField {
            grid: grid.clone(),
            variance,
            comps: std::array::from_fn(|_| vec![0.0; grid.len()]),
        }
    }

    pub fn at(&self, idx: usize) -> [f64; 6] {
        std::array::from_fn(|c| self.comps[c][idx])
    }

    pub fn sup_norm(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format: small binary header + component-major little-endian body
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"HGLF";
const VERSION: u32 = 1;

fn write_axis(w: &mut impl Write, ax: &Axis) -> Result<()> {
    let topo = match ax.topology {
        AxisTopology::Bounded => 0u8,
        AxisTopology::Periodic => 1,
        AxisTopology::BoundaryToAxis => 2,
    };
    w.write_all(&[topo])?;
    w.write_all(&(ax.n() as u64).to_le_bytes())?;
    w.write_all(&ax.lo().to_le_bytes())?;
    w.write_all(&ax.hi().to_le_bytes())?;
    let (gtag, gpar) = match ax.grading {
        Grading::Uniform => (0u8, 0.0),
        Grading::GeometricTowardLo(r) => (1, r),
        Grading::GeometricTowardHi(r) => (2, r),
    };
    w.write_all(&[gtag])?;
    w.write_all(&gpar.to_le_bytes())?;
    Ok(())
}

fn read_axis(r: &mut impl Read, label: &str) -> Result<Axis> {
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let lo = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let hi = f64::from_le_bytes(b8);
    let mut gt = [0u8; 1];
    r.read_exact(&mut gt)?;
    r.read_exact(&mut b8)?;
    let gpar = f64::from_le_bytes(b8);
    let ax = match (b1[0], gt[0]) {
        (0, 0) => Axis::uniform(label, lo, hi, n),
        (0, 1) => Axis::geometric(label, lo, hi, n, gpar)?,
        (1, _) => {
            if n == 1 {
                Axis {
                    label: label.into(),
                    nodes: vec![lo],
                    topology: AxisTopology::Periodic,
                    grading: Grading::Uniform,
                }
            } else {
                // period reconstructed from n uniform cells spanning [lo, hi+h)
                let h = (hi - lo) / (n as f64 - 1.0);
                Axis::periodic(label, lo, h * n as f64, n)
            }
        }
        (2, _) => Axis::polar_angle(n),
        _ => return Err(Error::Format("unknown axis encoding".into())),
    };
    Ok(ax)
}

/// Write a raw component-major field block.
pub fn write_field_blob(
    w: &mut impl Write,
    grid: &ChartGrid,
    comps: &[&[f64]],
    rank_tag: u8,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.fd_order as u32).to_le_bytes())?;
    for ax in &grid.axes {
        write_axis(w, ax)?;
    }
    w.write_all(&[rank_tag])?;
    w.write_all(&(comps.len() as u32).to_le_bytes())?;
    for c in comps {
        for v in *c {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_field_blob(r: &mut impl Read) -> Result<(Arc<ChartGrid>, u8, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != VERSION {
        return Err(Error::Format("unsupported version".into()));
    }
    r.read_exact(&mut b4)?;
    let order = u32::from_le_bytes(b4) as usize;
    let labels = ["t", "beta", "phi"];
    let mut axes = Vec::with_capacity(3);
    for l in labels {
        axes.push(read_axis(r, l)?);
    }
    let grid = ChartGrid::new([axes[0].clone(), axes[1].clone(), axes[2].clone()], order)?;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    r.read_exact(&mut b4)?;
    let ncomp = u32::from_le_bytes(b4) as usize;
    let n = grid.len();
    let mut comps = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let mut data = vec![0.0; n];
        let mut b8 = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        comps.push(data);
    }
    Ok((grid, tag[0], comps))
}

impl ScalarField {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        write_field_blob(w, &self.grid, &[&self.data], 0)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (grid, tag, mut comps) = read_field_blob(r)?;
        if tag != 0 || comps.len() != 1 {
            return Err(Error::Format("not a scalar field".into()));
        }
        Ok(ScalarField { grid, data: comps.pop().unwrap() })
    }
}

impl SymTensorField {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let refs: Vec<&[f64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        let tag = if self.variance == Variance::Covariant { 3 } else { 4 };
        write_field_blob(w, &self.grid, &refs, tag)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (grid, tag, comps) = read_field_blob(r)?;
        if !(tag == 3 || tag == 4) || comps.len() != 6 {
            return Err(Error::Format("not a symmetric tensor field".into()));
        }
        let mut it = comps.into_iter();
        Ok(SymTensorField {
            grid,
            variance: if tag == 3 { Variance::Covariant } else { Variance::Contravariant },
            comps: std::array::from_fn(|_| it.next().unwrap()),
        })
    }
}

impl VectorField {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let refs: Vec<&[f64]> = self.comps.iter().map(|c| c.as_slice()).collect();
        write_field_blob(w, &self.grid, &refs, 1)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let (grid, tag, comps) = read_field_blob(r)?;
        if tag != 1 || comps.len() != 3 {
            return Err(Error::Format("not a vector field".into()));
        }
        let mut it = comps.into_iter();
        Ok(VectorField { grid, comps: std::array::from_fn(|_| it.next().unwrap()) })
    }
}

pub fn check_same_grid(a: &Arc<ChartGrid>, b: &Arc<ChartGrid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_weights_reproduce_classic_central() {
        // order-4 central first derivative on uniform nodes
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fd_weights(0.0, &xs, 1);
        let expect = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        let w2 = fd_weights(0.0, &xs, 2);
        let expect2 = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        for (a, b) in w2.iter().zip(expect2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_convergence_order() {
        // measure observed order on a smooth function, bounded axis
        let f = |t: f64| (1.3 * t).sin() + 0.3 * (2.0 * t).cos();
        let fp = |t: f64| 1.3 * (1.3 * t).cos() - 0.6 * (2.0 * t).sin();
        let mut errs = Vec::new();
        for n in [33usize, 65] {
            let grid = ChartGrid::log_polar(-1.0, 1.0, n, 8, 1, false, 4).unwrap();
            let sf = ScalarField::from_fn(&grid, |t, _, _| f(t));
            let d = grid.deriv(0, 1, &sf.data, 1.0);
            let mut emax = 0.0f64;
            let (nt, nb, _) = grid.shape();
            for i in 0..nt {
                for j in 0..nb {
                    let (t, _, _) = grid.coords(i, j, 0);
                    emax = emax.max((d[grid.idx(i, j, 0)] - fp(t)).abs());
                }
            }
            errs.push(emax);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.5, "observed order {order}, errors {errs:?}");
    }

    #[test]
    fn periodic_derivative_exact_wrap() {
        let n = 64;
        let grid = ChartGrid::log_polar(0.0, std::f64::consts::TAU, n, 8, 1, true, 4).unwrap();
        let sf = ScalarField::from_fn(&grid, |t, _, _| (3.0 * t).sin());
        let d = grid.deriv(0, 1, &sf.data, 1.0);
        let (nt, nb, _) = grid.shape();
        for i in 0..nt {
            for j in 0..nb {
                let (t, _, _) = grid.coords(i, j, 0);
                let err = (d[grid.idx(i, j, 0)] - 3.0 * (3.0 * t).cos()).abs();
                assert!(err < 2e-3, "periodic derivative error {err} at node {i}");
            }
        }
    }

    #[test]
    fn polar_axis_parity_smoothness() {
        // even function of beta across the axis: derivative must vanish there
        let grid = ChartGrid::log_polar(-1.0, 1.0, 17, 33, 1, false, 4).unwrap();
        let sf = ScalarField::from_fn(&grid, |_, b, _| b.cos()); // even across axis
        let d = grid.deriv(1, 1, &sf.data, 1.0);
        let (_, nb, _) = grid.shape();
        // node nearest the axis: derivative of cos(b) is -sin(b), small there
        let j = nb - 1;
        let (_, b, _) = grid.coords(8, j, 0);
        let err = (d[grid.idx(8, j, 0)] + b.sin()).abs();
        assert!(err < 1e-6, "axis-adjacent derivative error {err}");
        // odd component: value ~ sin(b); derivative cos(b) near 1 at the axis
        let sfo = ScalarField::from_fn(&grid, |_, b, _| b.sin());
        let do_ = grid.deriv(1, 1, &sfo.data, -1.0);
        let err = (do_[grid.idx(8, j, 0)] - b.cos()).abs();
        assert!(err < 1e-6, "odd-parity axis derivative error {err}");
    }

    #[test]
    fn geometric_grading_monotone_and_derivatives() {
        let ax = Axis::geometric("y", 0.0, 1.0, 33, 0.85).unwrap();
        for w in ax.nodes.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!(ax.nodes[1] - ax.nodes[0] < ax.nodes[32] - ax.nodes[31]);
        let grid = ChartGrid::new(
            [ax, Axis::polar_angle(8), Axis::uniform("p", 0.0, 1.0, 8)],
            4,
        );
        // uniform("p") bounded axis is fine
        let grid = grid.unwrap();
        let sf = ScalarField::from_fn(&grid, |t, _, _| t * t * t);
        let d = grid.deriv(0, 1, &sf.data, 1.0);
        let (nt, _, _) = grid.shape();
        for i in 0..nt {
            let (t, _, _) = grid.coords(i, 3, 2);
            assert!((d[grid.idx(i, 3, 2)] - 3.0 * t * t).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_accuracy() {
        let grid = ChartGrid::log_polar(-2.0, 2.0, 65, 33, 1, false, 4).unwrap();
        let f = |t: f64, b: f64| (t).sin() * b.cos() + 0.2 * t * b;
        let sf = ScalarField::from_fn(&grid, |t, b, _| f(t, b));
        for (t, b) in [(0.13, 0.7), (-1.4, 1.2), (1.9, 0.3), (0.0, 1.5)] {
            let v = grid.interp(&sf.data, 1.0, t, b, 0.0).unwrap();
            assert!((v - f(t, b)).abs() < 1e-6, "interp error at ({t},{b})");
        }
        // out of range -> resolution error
        assert!(grid.interp(&sf.data, 1.0, 5.0, 0.7, 0.0).is_err());
    }

    #[test]
    fn blob_roundtrip_bitexact() {
        let grid = ChartGrid::log_polar(-1.0, 3.0, 33, 17, 1, true, 4).unwrap();
        let sf = ScalarField::from_fn(&grid, |t, b, _| (t * 1.7).sin() + b);
        let mut buf = Vec::new();
        sf.write_to(&mut buf).unwrap();
        let back = ScalarField::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(sf.data, back.data);
        assert_eq!(*sf.grid, *back.grid);

        let mut st = SymTensorField::zeros(&grid, Variance::Covariant);
        st.comps[1][7] = -3.25;
        let mut buf = Vec::new();
        st.write_to(&mut buf).unwrap();
        let back = SymTensorField::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(st.comps, back.comps);
        assert_eq!(back.variance, Variance::Covariant);
    }
}
