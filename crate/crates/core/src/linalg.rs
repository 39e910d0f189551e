//! Small dense and banded solvers used by the stepper, the eigen-solvers and
//! the modulation fits.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::C64;

/// Solve a complex tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` couples row `i + 1` to column `i`, `upper[i]` couples row `i`
/// to column `i + 1`. No pivoting: callers guarantee diagonal dominance in
/// modulus.
pub fn thomas_complex(lower: &[C64], diag: &[C64], upper: &[C64], rhs: &mut [C64]) {
    let n = diag.len();
    debug_assert_eq!(rhs.len(), n);
    if n == 0 {
        return;
    }
    let mut c_prime = vec![C64::new(0.0, 0.0); n];
    let mut denom = diag[0];
    c_prime[0] = if n > 1 { upper[0] / denom } else { C64::new(0.0, 0.0) };
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c_prime[i - 1];
        if i + 1 < n {
            c_prime[i] = upper[i] / denom;
        }
        let prev = rhs[i - 1];
        rhs[i] = (rhs[i] - lower[i - 1] * prev) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= c_prime[i] * next;
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly below `x`.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let n = diag.len();
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..n {
        let qq = if q.abs() < tiny { tiny.copysign(q) } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval enclosing the spectrum of a symmetric tridiagonal matrix.
pub fn gershgorin(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut radius = 0.0;
        if i > 0 {
            radius += off[i - 1].abs();
        }
        if i + 1 < n {
            radius += off[i].abs();
        }
        lo = lo.min(diag[i] - radius);
        hi = hi.max(diag[i] + radius);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based) by Sturm bisection.
pub fn bisect_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> f64 {
    let (mut lo, mut hi) = gershgorin(diag, off);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (lo.abs().max(hi.abs())).max(f64::EPSILON * scale) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// LU factorization with partial pivoting of a general band matrix.
///
/// The matrix has `kl` sub-diagonals and `ku` super-diagonals; row
/// interchanges add up to `kl` extra super-diagonals of fill.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// row-major band: entry (i, j) at `ab[i * width + (j + kl - i)]`
    ab: Vec<f64>,
    width: usize,
    piv: Vec<usize>,
}

impl BandLu {
    /// Factor the band matrix given by `entry(i, j)` for `|i - j|` within the band.
    pub fn factor(n: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> f64) -> Option<Self> {
        let width = 2 * kl + ku + 1;
        let mut ab = vec![0.0; n * width];
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        for i in 0..n {
            let j0 = i.saturating_sub(kl);
            let j1 = (i + ku).min(n - 1);
            for j in j0..=j1 {
                ab[idx(i, j)] = entry(i, j);
            }
        }
        let mut piv = vec![0; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = ab[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    ab.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = ab[idx(k, k)];
            for i in k + 1..=last_row {
                let factor = ab[idx(i, k)] / pivot;
                ab[idx(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..=last_col {
                        ab[idx(i, j)] -= factor * ab[idx(k, j)];
                    }
                }
            }
        }
        Some(BandLu { n, kl, ku, ab, width, piv })
    }

    pub fn solve(&self, rhs: &mut [f64]) {
        let n = self.n;
        let kl = self.kl;
        let width = self.width;
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                rhs.swap(k, p);
            }
            let last_row = (k + kl).min(n - 1);
            for i in k + 1..=last_row {
                rhs[i] -= self.ab[idx(i, k)] * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + kl + self.ku).min(n - 1);
            let mut s = rhs[k];
            for j in k + 1..=last_col {
                s -= self.ab[idx(k, j)] * rhs[j];
            }
            rhs[k] = s / self.ab[idx(k, k)];
        }
    }
}

/// Real tridiagonal solve with partial pivoting, for shifted (indefinite)
/// systems in inverse iteration. Returns `None` on an exactly singular pivot.
pub fn tridiag_solve_pivoting(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Option<()> {
    let n = diag.len();
    let lu = BandLu::factor(n, 1, 1, |i, j| {
        if i == j {
            diag[i]
        } else if j + 1 == i {
            lower[j]
        } else {
            upper[i]
        }
    })?;
    lu.solve(rhs);
    Some(())
}

/// Dense solve `A x = b` with partial pivoting. `a` is row-major `n x n` and
/// is overwritten. Returns `None` when a pivot underflows `tol` relative to
/// the largest entry.
pub fn dense_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if a[i * n + k].abs() > a[p * n + k].abs() {
                p = i;
            }
        }
        if a[p * n + k].abs() <= 1e-14 * scale {
            return None;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            b.swap(k, p);
        }
        for i in k + 1..n {
            let f = a[i * n + k] / a[k * n + k];
            if f != 0.0 {
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
                b[i] -= f * b[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in k + 1..n {
            s -= a[k * n + j] * b[j];
        }
        b[k] = s / a[k * n + k];
    }
    Some(())
}
