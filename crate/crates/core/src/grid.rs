//! Radial grids on `[r_min, r_max]` with quadrature for the measure `r^{D-1} dr`.
//!
//! Quadrature is product-trapezoid: the integrand is replaced by its
//! piecewise-linear interpolant, which is then integrated exactly against
//! `r^k`. The nodal weights are therefore positive, constants and linear
//! functions integrate exactly, and sub-windows that cut through an interval
//! stay additive.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{config, Result};

/// Node placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stretch {
    Uniform,
    /// Constant ratio `r_{i+1} / r_i`, fixed by the node count and bounds.
    Geometric,
}

/// Default inner radius used by [`RadialGrid::default_for`].
pub const DEFAULT_R_MIN: f64 = 1e-3;
/// Default outer radius used by [`RadialGrid::default_for`].
pub const DEFAULT_R_MAX: f64 = 1e2;
/// Default node count used by [`RadialGrid::default_for`].
pub const DEFAULT_NODES: usize = 2048;

#[derive(Debug, Clone)]
pub struct RadialGrid {
    dim: usize,
    r: Vec<f64>,
    stretch: Stretch,
    /// `∫ hat_i r^{D-1} dr`
    w: Vec<f64>,
    /// `∫ hat_i r^{D-3} dr`
    w_inv_sq: Vec<f64>,
    /// `∫_{r_k}^{r_{k+1}} r^{D-1} dr`
    mass: Vec<f64>,
    h: Vec<f64>,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.r == other.r
    }
}

/// Build a grid of `m` nodes spanning `[r_min, r_max]` in dimension `dim`.
pub fn make_grid(dim: usize, r_min: f64, r_max: f64, m: usize, stretch: Stretch) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(dim, r_min, r_max, m, stretch).map(Arc::new)
}

impl RadialGrid {
    pub fn new(dim: usize, r_min: f64, r_max: f64, m: usize, stretch: Stretch) -> Result<Self> {
        if dim < 3 {
            return Err(config(alloc::format!("dimension must be >= 3, got {dim}")));
        }
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(config(alloc::format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        if m < 16 {
            return Err(config(alloc::format!("need at least 16 nodes, got {m}")));
        }
        let last = (m - 1) as f64;
        let r: Vec<f64> = match stretch {
            Stretch::Uniform => {
                let step = (r_max - r_min) / last;
                (0..m).map(|k| if k + 1 == m { r_max } else { r_min + k as f64 * step }).collect()
            }
            Stretch::Geometric => {
                let per_decade = last / (r_max / r_min).log10();
                if per_decade < 8.0 {
                    return Err(config(alloc::format!(
                        "geometric grid has {per_decade:.2} nodes per decade, need >= 8"
                    )));
                }
                let log_ratio = (r_max / r_min).ln() / last;
                (0..m).map(|k| if k + 1 == m { r_max } else { r_min * (k as f64 * log_ratio).exp() }).collect()
            }
        };
        Self::build(dim, r, stretch)
    }

    /// Grid from explicit nodes (e.g. read back from a snapshot file).
    pub fn from_nodes(dim: usize, r: Vec<f64>) -> Result<Self> {
        if dim < 3 {
            return Err(config(alloc::format!("dimension must be >= 3, got {dim}")));
        }
        if r.len() < 3 {
            return Err(config("need at least 3 nodes"));
        }
        if !(r[0] > 0.0) || r.windows(2).any(|p| !(p[1] > p[0])) || r.iter().any(|x| !x.is_finite()) {
            return Err(config("nodes must be positive, finite and strictly increasing"));
        }
        Self::build(dim, r, Stretch::Uniform)
    }

    /// The default laboratory grid: geometric, 2048 nodes on `[1e-3, 1e2]`.
    pub fn default_for(dim: usize) -> Result<Arc<Self>> {
        make_grid(dim, DEFAULT_R_MIN, DEFAULT_R_MAX, DEFAULT_NODES, Stretch::Geometric)
    }

    fn build(dim: usize, r: Vec<f64>, stretch: Stretch) -> Result<Self> {
        let m = r.len();
        let mut w = vec![0.0; m];
        let mut w_inv_sq = vec![0.0; m];
        let mut mass = vec![0.0; m - 1];
        let mut h = vec![0.0; m - 1];
        for k in 0..m - 1 {
            let (a, b) = (r[k], r[k + 1]);
            h[k] = b - a;
            let (l, rr) = hat_moments(a, b, a, b, dim - 1);
            w[k] += l;
            w[k + 1] += rr;
            mass[k] = l + rr;
            let (l, rr) = hat_moments(a, b, a, b, dim - 3);
            w_inv_sq[k] += l;
            w_inv_sq[k + 1] += rr;
        }
        Ok(RadialGrid { dim, r, stretch, w, w_inv_sq, mass, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.r.len()
    }
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.r
    }
    pub fn r_min(&self) -> f64 {
        self.r[0]
    }
    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }
    pub fn stretch(&self) -> Stretch {
        self.stretch
    }
    /// Ratio `r_{i+1}/r_i` for geometric grids.
    pub fn ratio(&self) -> Option<f64> {
        match self.stretch {
            Stretch::Geometric => Some(self.r[1] / self.r[0]),
            Stretch::Uniform => None,
        }
    }
    /// Quadrature weights for `∫ g r^{D-1} dr ≈ Σ w_i g(r_i)`.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }
    /// Quadrature weights for `∫ g r^{D-3} dr`, used for the `|u|²/r²` term.
    pub fn weights_inv_sq(&self) -> &[f64] {
        &self.w_inv_sq
    }
    /// `∫_{r_k}^{r_{k+1}} r^{D-1} dr` per interval.
    pub fn interval_mass(&self) -> &[f64] {
        &self.mass
    }
    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    /// Coefficient of the harmonic exterior tail, `(D-2) r_max^{D-2}`.
    ///
    /// Extending a field beyond `r_max` by `u(r_max) (r_max/r)^{D-2}` adds
    /// `½ (D-2) r_max^{D-2} |u(r_max)|²` to the Dirichlet energy; the stepper
    /// uses the matching Robin condition `∂ᵣu = -(D-2) u / r` at `r_max`.
    pub fn robin_coefficient(&self) -> f64 {
        (self.dim as f64 - 2.0) * self.r_max().powi(self.dim as i32 - 2)
    }

    /// Symmetric stiffness matrix of `∫ |∂ᵣu|² r^{D-1} dr` plus the exterior
    /// tail, as (diagonal, off-diagonal).
    pub fn stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.len();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m - 1];
        for k in 0..m - 1 {
            let c = self.mass[k] / (self.h[k] * self.h[k]);
            diag[k] += c;
            diag[k + 1] += c;
            off[k] = -c;
        }
        diag[m - 1] += self.robin_coefficient();
        (diag, off)
    }

    /// Index `k` of the interval `[r_k, r_{k+1}]` containing `x` (clamped).
    pub fn locate(&self, x: f64) -> usize {
        let idx = self.r.partition_point(|&v| v <= x);
        idx.saturating_sub(1).min(self.len() - 2)
    }

    /// Resolve `[r1, r2]` against the grid: `r1 = 0` means `r_min`, an
    /// infinite `r2` means `r_max`.
    pub fn window(&self, r1: f64, r2: f64) -> Result<(f64, f64)> {
        if !(r1 >= 0.0) || !(r1 < r2) {
            return Err(config(alloc::format!("window needs 0 <= r1 < r2, got ({r1}, {r2})")));
        }
        Ok((r1.max(self.r_min()), r2.min(self.r_max())))
    }

    /// Nodal weights `∫_{lo}^{hi} hat_i r^k dr`, summed into `out`.
    pub fn window_weights(&self, lo: f64, hi: f64, power: usize, out: &mut [f64]) {
        if hi <= lo {
            return;
        }
        let first = self.locate(lo);
        for k in first..self.len() - 1 {
            let (a, b) = (self.r[k], self.r[k + 1]);
            if a >= hi {
                break;
            }
            let (s, e) = (a.max(lo), b.min(hi));
            if e <= s {
                continue;
            }
            let (l, rr) = hat_moments(a, b, s, e, power);
            out[k] += l;
            out[k + 1] += rr;
        }
    }

    /// Per-interval `∫_{[lo,hi] ∩ [r_k, r_{k+1}]} r^{D-1} dr`.
    pub fn window_mass(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len() - 1];
        if hi <= lo {
            return out;
        }
        let first = self.locate(lo);
        for (k, slot) in out.iter_mut().enumerate().skip(first) {
            let (a, b) = (self.r[k], self.r[k + 1]);
            if a >= hi {
                break;
            }
            if a >= lo && b <= hi {
                *slot = self.mass[k];
                continue;
            }
            let (s, e) = (a.max(lo), b.min(hi));
            if e > s {
                let (l, rr) = hat_moments(a, b, s, e, self.dim - 1);
                *slot = l + rr;
            }
        }
        out
    }

    /// Quadrature of nodal values `g` against `r^{D-1}` on `[r1, r2]`.
    pub fn integrate(&self, g: &[f64], r1: f64, r2: f64) -> Result<f64> {
        let (lo, hi) = self.window(r1, r2)?;
        if lo <= self.r_min() && hi >= self.r_max() {
            return Ok(g.iter().zip(&self.w).map(|(a, b)| a * b).sum());
        }
        let mut wts = vec![0.0; self.len()];
        self.window_weights(lo, hi, self.dim - 1, &mut wts);
        Ok(g.iter().zip(&wts).map(|(a, b)| a * b).sum())
    }
}

/// `(∫_{lo}^{hi} r^k (b-r)/(b-a) dr, ∫_{lo}^{hi} r^k (r-a)/(b-a) dr)` for
/// `a <= lo < hi <= b`, summed term by term with no cancellation.
pub(crate) fn hat_moments(a: f64, b: f64, lo: f64, hi: f64, k: usize) -> (f64, f64) {
    let len = hi - lo;
    let (from_a, to_b) = (lo - a, b - lo);
    let mut left = 0.0;
    let mut right = 0.0;
    let mut binom = 1.0;
    let mut len_pow = 1.0;
    let lo_pow = |e: usize| lo.powi(e as i32);
    for j in 0..=k {
        let base = binom * lo_pow(k - j) * len_pow;
        let jf = j as f64;
        left += base * (to_b / (jf + 1.0) - len / (jf + 2.0));
        right += base * (from_a / (jf + 1.0) + len / (jf + 2.0));
        binom = binom * (k - j) as f64 / (jf + 1.0);
        len_pow *= len;
    }
    let span = b - a;
    (left * len / span, right * len / span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_by_construction() {
        let g = RadialGrid::new(4, 1e-3, 1e2, 2048, Stretch::Geometric).unwrap();
        assert_eq!(g.r_min(), 1e-3);
        assert_eq!(g.r_max(), 1e2);
        assert_eq!(g.len(), 2048);
    }

    #[test]
    fn uniform_spacing() {
        let g = RadialGrid::new(3, 0.1, 1.0, 16, Stretch::Uniform).unwrap();
        for (k, &r) in g.nodes().iter().enumerate() {
            assert!((r - (0.1 + k as f64 * 0.9 / 15.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_of_one() {
        let g = RadialGrid::new(4, 0.1, 1.0, 16, Stretch::Uniform).unwrap();
        let ones = vec![1.0; g.len()];
        let q = g.integrate(&ones, 0.0, f64::INFINITY).unwrap();
        assert!((q - 0.249975).abs() / 0.249975 < 1e-3);
        // linear interpolation of a constant is exact
        assert!((q - 0.249975).abs() < 1e-15);
    }

    #[test]
    fn quadrature_moments_default_grid() {
        for dim in 3..=6 {
            let g = RadialGrid::default_for(dim).unwrap();
            let (a, b) = (g.r_min(), g.r_max());
            for k in 0..=2 {
                let vals: Vec<f64> = g.nodes().iter().map(|r| r.powi(k)).collect();
                let q = g.integrate(&vals, 0.0, f64::INFINITY).unwrap();
                let p = (k + dim as i32) as f64;
                let exact = (b.powf(p) - a.powf(p)) / p;
                assert!((q - exact).abs() / exact < 1e-3, "dim={dim} k={k}");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(RadialGrid::new(2, 0.1, 1.0, 32, Stretch::Uniform).is_err());
        assert!(RadialGrid::new(3, 1.0, 0.1, 32, Stretch::Uniform).is_err());
        assert!(RadialGrid::new(3, 0.0, 1.0, 32, Stretch::Uniform).is_err());
        assert!(RadialGrid::new(3, 0.1, 1.0, 8, Stretch::Uniform).is_err());
        // 16 nodes over 10 decades is fewer than 8 per decade
        assert!(RadialGrid::new(3, 1e-5, 1e5, 16, Stretch::Geometric).is_err());
    }

    #[test]
    fn geometric_nodes_per_decade() {
        let g = RadialGrid::new(4, 1e-3, 1e2, 64, Stretch::Geometric).unwrap();
        let ratio = g.ratio().unwrap();
        assert!(1.0 / ratio.log10() >= 8.0);
    }

    #[test]
    fn hat_moments_split_additively() {
        let (l1, r1) = hat_moments(2.0, 2.5, 2.0, 2.2, 4);
        let (l2, r2) = hat_moments(2.0, 2.5, 2.2, 2.5, 4);
        let (l, r) = hat_moments(2.0, 2.5, 2.0, 2.5, 4);
        assert!((l1 + l2 - l).abs() < 1e-14 && (r1 + r2 - r).abs() < 1e-14);
        // total equals ∫ r^4
        let exact = (2.5f64.powi(5) - 2.0f64.powi(5)) / 5.0;
        assert!((l + r - exact).abs() < 1e-13);
    }
}
