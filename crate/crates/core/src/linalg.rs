//! Direct linear solvers: banded LU with partial pivoting, a small dense LU,
//! and a Woodbury wrapper that handles the low-rank wrap coupling of periodic
//! operators so that one banded factorization serves the whole solve.

use crate::error::{Error, Result};

/// Dense column-major matrix, only used for capacitance systems.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Factor a dense n x n matrix given in row-major order.
    pub fn factor(n: usize, a_row_major: &[f64]) -> Result<DenseLu> {
        let mut a = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                a[c * n + r] = a_row_major[r * n + c];
            }
        }
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for r in k + 1..n {
                let v = a[k * n + r].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::LinearSolve(format!("dense LU breakdown at column {k}")));
            }
            piv[k] = p;
            if p != k {
                for c in 0..n {
                    a.swap(c * n + k, c * n + p);
                }
            }
            let d = a[k * n + k];
            for r in k + 1..n {
                a[k * n + r] /= d;
            }
            for c in k + 1..n {
                let m = a[c * n + k];
                if m != 0.0 {
                    for r in k + 1..n {
                        a[c * n + r] -= a[k * n + r] * m;
                    }
                }
            }
        }
        Ok(DenseLu { n, a, piv })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let bk = b[k];
            if bk != 0.0 {
                for r in k + 1..n {
                    b[r] -= self.a[k * n + r] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            b[k] /= self.a[k * n + k];
            let bk = b[k];
            if bk != 0.0 {
                for r in 0..k {
                    b[r] -= self.a[k * n + r] * bk;
                }
            }
        }
    }
}

/// Banded matrix in LAPACK-style storage prepared for partial pivoting:
/// `ab[row_in_band][col]` with kl extra rows of fill space.
pub struct BandedMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    /// (2*kl + ku + 1) x n, column-major bands: entry (r, c) lives at
    /// ab[kl + ku + r - c][c].
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> BandedMatrix {
        BandedMatrix { n, kl, ku, ab: vec![0.0; (2 * kl + ku + 1) * n] }
    }

    #[inline]
    fn rows(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.n && c < self.n);
        debug_assert!(
            (r as isize - c as isize).unsigned_abs() <= if r >= c { self.kl } else { self.ku },
            "entry ({r},{c}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let rows = self.rows();
        let idx = (self.kl + self.ku + r) as isize - c as isize;
        self.ab[c * rows + idx as usize] += v;
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let d = r as isize - c as isize;
        if d > self.kl as isize || -d > self.ku as isize {
            return 0.0;
        }
        let idx = (self.kl + self.ku) as isize + d;
        self.ab[c * self.rows() + idx as usize]
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.n {
            let lo = c.saturating_sub(self.ku);
            let hi = (c + self.kl).min(self.n - 1);
            for r in lo..=hi {
                out[r] += self.get(r, c) * x[c];
            }
        }
    }

    /// In-place LU factorization with partial pivoting (gbtrf-style).
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let rows = self.rows();
        let mut piv = vec![0usize; n];
        for k in 0..n {
            // pivot search within the column band
            let rmax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = 0.0;
            for r in k..=rmax {
                let v = self.ab[k * rows + (kl + ku + r - k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::LinearSolve(format!("banded LU breakdown at column {k}")));
            }
            piv[k] = p;
            if p != k {
                // swap rows k and p across all columns where both are in band
                let cmax = (k + ku + kl).min(n - 1);
                for c in k..=cmax {
                    let ik = (kl + ku + k) as isize - c as isize;
                    let ip = (kl + ku + p) as isize - c as isize;
                    if ik >= 0 && ip >= 0 && (ik as usize) < rows && (ip as usize) < rows {
                        self.ab.swap(c * rows + ik as usize, c * rows + ip as usize);
                    }
                }
            }
            let d = self.ab[k * rows + kl + ku];
            for r in k + 1..=rmax {
                let idx = k * rows + (kl + ku + r - k);
                self.ab[idx] /= d;
            }
            let cmax = (k + ku + kl).min(n - 1);
            for c in k + 1..=cmax {
                let ucidx = (kl + ku + k) as isize - c as isize;
                if ucidx < 0 {
                    continue;
                }
                let m = self.ab[c * rows + ucidx as usize];
                if m != 0.0 {
                    for r in k + 1..=rmax {
                        let lidx = k * rows + (kl + ku + r - k);
                        let tidx = (kl + ku + r) as isize - c as isize;
                        if tidx >= 0 {
                            let l = self.ab[lidx];
                            self.ab[c * rows + tidx as usize] -= l * m;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, ku, ab: self.ab, piv })
    }
}

pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let rows = 2 * kl + ku + 1;
        // forward
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                let rmax = (k + kl).min(n - 1);
                for r in k + 1..=rmax {
                    b[r] -= self.ab[k * rows + (kl + ku + r - k)] * bk;
                }
            }
        }
        // backward: U has bandwidth ku + kl after pivoting
        for k in (0..n).rev() {
            let mut acc = b[k];
            let cmax = (k + ku + kl).min(n - 1);
            for c in k + 1..=cmax {
                let idx = (kl + ku + k) as isize - c as isize;
                if idx >= 0 {
                    acc -= self.ab[c * rows + idx as usize] * b[c];
                }
            }
            b[k] = acc / self.ab[k * rows + kl + ku];
        }
    }
}

/// Sparse triplet accumulator for operators that are banded up to a known
/// low-rank wrap correction (periodic axes).
pub struct PeriodicBandSystem {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    banded: BandedMatrix,
    /// wrap entries (r, c, v) outside the band
    wrap: Vec<(usize, usize, f64)>,
}

impl PeriodicBandSystem {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        PeriodicBandSystem { n, kl, ku, banded: BandedMatrix::zeros(n, kl, ku), wrap: Vec::new() }
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let d = r as isize - c as isize;
        if d >= 0 && d as usize <= self.kl || d < 0 && (-d) as usize <= self.ku {
            self.banded.add(r, c, v);
        } else {
            self.wrap.push((r, c, v));
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        self.banded.matvec(x, out);
        for &(r, c, v) in &self.wrap {
            out[r] += v * x[c];
        }
    }

    /// Factor: banded LU of the in-band part plus a Woodbury correction for
    /// the wrap entries.
    pub fn factor(self) -> Result<PeriodicBandLu> {
        let n = self.n;
        let lu = self.banded.factor()?;
        if self.wrap.is_empty() {
            return Ok(PeriodicBandLu { n, lu, cols: Vec::new(), y: Vec::new(), cap: None });
        }
        // distinct wrap columns
        let mut cols: Vec<usize> = self.wrap.iter().map(|&(_, c, _)| c).collect();
        cols.sort_unstable();
        cols.dedup();
        let m = cols.len();
        let col_pos = |c: usize| cols.binary_search(&c).unwrap();
        // U: n x m with the wrap entries; A = B + U * S^T where S selects cols
        let mut u = vec![0.0; n * m];
        for &(r, c, v) in &self.wrap {
            u[col_pos(c) * n + r] += v;
        }
        // Y = B^{-1} U
        let mut y = vec![0.0; n * m];
        for j in 0..m {
            let mut col = u[j * n..(j + 1) * n].to_vec();
            lu.solve(&mut col);
            y[j * n..(j + 1) * n].copy_from_slice(&col);
        }
        // capacitance C = I + S^T Y  (m x m, row-major)
        let mut cap = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                cap[i * m + j] = y[j * n + cols[i]] + if i == j { 1.0 } else { 0.0 };
            }
        }
        let cap = DenseLu::factor(m, &cap)?;
        Ok(PeriodicBandLu { n, lu, cols, y, cap: Some(cap) })
    }
}

pub struct PeriodicBandLu {
    n: usize,
    lu: BandedLu,
    cols: Vec<usize>,
    y: Vec<f64>,
    cap: Option<DenseLu>,
}

impl PeriodicBandLu {
    pub fn solve(&self, b: &mut [f64]) {
        self.lu.solve(b);
        if let Some(cap) = &self.cap {
            let m = self.cols.len();
            let mut w: Vec<f64> = (0..m).map(|i| b[self.cols[i]]).collect();
            cap.solve(&mut w);
            for j in 0..m {
                let wj = w[j];
                if wj != 0.0 {
                    for r in 0..self.n {
                        b[r] -= self.y[j * self.n + r] * wj;
                    }
                }
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> impl FnMut() -> f64 {
        let mut s = seed.max(1);
        move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 1_000_003) as f64 / 500_001.5 - 1.0
        }
    }

    #[test]
    fn dense_lu_random() {
        let mut r = rng(3);
        let n = 12;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = r() + if i == j { 4.0 } else { 0.0 };
            }
        }
        let xs: Vec<f64> = (0..n).map(|_| r()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                b[i] += a[i * n + j] * xs[j];
            }
        }
        let lu = DenseLu::factor(n, &a).unwrap();
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn banded_lu_vs_matvec() {
        let mut r = rng(17);
        let n = 60;
        let (kl, ku) = (4, 3);
        let mut a = BandedMatrix::zeros(n, kl, ku);
        for c in 0..n {
            for d in -(ku as isize)..=(kl as isize) {
                let rr = c as isize + d;
                if rr >= 0 && (rr as usize) < n {
                    a.add(rr as usize, c, r() + if d == 0 { 5.0 } else { 0.0 });
                }
            }
        }
        let xs: Vec<f64> = (0..n).map(|_| r()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&xs, &mut b);
        let lu = a.factor().unwrap();
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-9, "mismatch at {i}: {} vs {}", b[i], xs[i]);
        }
    }

    #[test]
    fn banded_lu_needs_pivoting() {
        // zero diagonal forces a pivot
        let n = 4;
        let mut a = BandedMatrix::zeros(n, 1, 1);
        a.add(0, 0, 0.0);
        a.add(0, 1, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 0.0);
        a.add(1, 2, 2.0);
        a.add(2, 1, 1.0);
        a.add(2, 2, 1.0);
        a.add(2, 3, -1.0);
        a.add(3, 2, 2.0);
        a.add(3, 3, 1.0);
        let xs = [1.0, -2.0, 3.0, 0.5];
        let mut b = vec![0.0; n];
        let mut aa = BandedMatrix::zeros(n, 1, 1);
        for rr in 0..n {
            for cc in 0..n {
                let v = a.get(rr, cc);
                if v != 0.0 {
                    aa.add(rr, cc, v);
                }
            }
        }
        a.matvec(&xs, &mut b);
        let lu = aa.factor().unwrap();
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_ring_laplacian() {
        // -u'' on a periodic ring: singular up to constants, so add a mass
        // term; compare against a dense reference by matvec round trip.
        let n = 40;
        let mut sys = PeriodicBandSystem::new(n, 1, 1);
        for i in 0..n {
            sys.add(i, i, 2.0 + 0.3);
            sys.add(i, (i + 1) % n, -1.0);
            sys.add(i, (i + n - 1) % n, -1.0);
        }
        let xs: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.7).sin()).collect();
        let mut b = vec![0.0; n];
        sys.matvec(&xs, &mut b);
        let lu = sys.factor().unwrap();
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-10, "ring solve mismatch at {i}");
        }
    }

    #[test]
    fn periodic_wide_band_random() {
        let mut r = rng(91);
        let n = 90;
        let (kl, ku) = (6, 6);
        let mut sys = PeriodicBandSystem::new(n, kl, ku);
        for i in 0..n {
            for d in -7isize..=7 {
                let c = (i as isize + d).rem_euclid(n as isize) as usize;
                sys.add(i, c, r() * 0.3 + if d == 0 { 4.0 } else { 0.0 });
            }
        }
        let xs: Vec<f64> = (0..n).map(|_| r()).collect();
        let mut b = vec![0.0; n];
        sys.matvec(&xs, &mut b);
        let lu = sys.factor().unwrap();
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - xs[i]).abs() < 1e-9, "periodic solve mismatch at {i}");
        }
    }
}
