//! Inner products, the localized energy-space norm, and finite-difference
//! radial operators.
//!
//! The discrete Laplacian is the weighted-symmetric operator `Δ_h = -W⁻¹ K`
//! with `W` the lumped quadrature weights and `K` the stiffness of
//! `∫ |∂ᵣu|² r^{D-1} dr` (plus the harmonic exterior tail). The kinetic part
//! of [`EnergyForm`] uses exactly the same interval differences, so the
//! discrete energy is the one the stepper dissipates.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::Result;
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::C64;

/// `⟨f | g⟩ = Re Σ w_i conj(f_i) g_i`.
pub fn inner(f: &RadialField, g: &RadialField) -> Result<f64> {
    f.check_same_grid(g)?;
    Ok(inner_raw(f.grid().weights(), f.values(), g.values()))
}

pub(crate) fn inner_raw(w: &[f64], f: &[C64], g: &[C64]) -> f64 {
    w.iter().zip(f.iter().zip(g)).map(|(wi, (a, b))| wi * (a.re * b.re + a.im * b.im)).sum()
}

/// Weighted `L²(r^{D-1} dr)` norm.
pub fn l2_norm(f: &RadialField) -> f64 {
    f.grid().weights().iter().zip(f.values()).map(|(w, v)| w * v.norm_sqr()).sum::<f64>().sqrt()
}

/// Second-order first derivative: three-point stencils on the nonuniform
/// grid, one-sided at both ends.
pub fn d_r(f: &RadialField) -> RadialField {
    let r = f.grid().nodes();
    let v = f.values();
    let n = r.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    let three_point = |x0: f64, x1: f64, x2: f64, at: f64| -> (f64, f64, f64) {
        // derivative of the quadratic through (x0,x1,x2) evaluated at `at`
        let c0 = (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let c1 = (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let c2 = (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
        (c0, c1, c2)
    };
    let (a, b, c) = three_point(r[0], r[1], r[2], r[0]);
    out[0] = v[0] * a + v[1] * b + v[2] * c;
    for i in 1..n - 1 {
        let (a, b, c) = three_point(r[i - 1], r[i], r[i + 1], r[i]);
        out[i] = v[i - 1] * a + v[i] * b + v[i + 1] * c;
    }
    let (a, b, c) = three_point(r[n - 3], r[n - 2], r[n - 1], r[n - 1]);
    out[n - 1] = v[n - 3] * a + v[n - 2] * b + v[n - 1] * c;
    RadialField::from_raw(f.grid().clone(), out)
}

/// Radial Laplacian `∂²ᵣ + (D-1)/r ∂ᵣ`.
///
/// Zero flux at `r_min` (even extension through the origin) and the Robin
/// condition `∂ᵣu = -(D-2)u/r` at `r_max`.
pub fn laplacian(f: &RadialField) -> RadialField {
    let grid = f.grid();
    let (diag, off) = grid.stiffness();
    let mut out = vec![C64::new(0.0, 0.0); f.len()];
    apply_neg_laplacian_raw(grid, &diag, &off, f.values(), &mut out);
    for v in out.iter_mut() {
        *v = -*v;
    }
    RadialField::from_raw(grid.clone(), out)
}

/// `out = W⁻¹ K v`, i.e. `-Δ_h v`.
pub(crate) fn apply_neg_laplacian_raw(grid: &RadialGrid, diag: &[f64], off: &[f64], v: &[C64], out: &mut [C64]) {
    let w = grid.weights();
    let n = v.len();
    for i in 0..n {
        let mut acc = v[i] * diag[i];
        if i > 0 {
            acc += v[i - 1] * off[i - 1];
        }
        if i + 1 < n {
            acc += v[i + 1] * off[i];
        }
        out[i] = acc / w[i];
    }
}

/// Quadratic form of the localized energy-space norm on a window `[r1, r2]`:
/// `Σ_k c_k |u_{k+1} - u_k|² + Σ_i ŵ_i |u_i|²`, where `c_k` is the window
/// mass of interval `k` over `h_k²` and `ŵ_i` integrates `hat_i r^{D-3}`.
#[derive(Debug, Clone)]
pub struct EnergyForm {
    grid: Arc<RadialGrid>,
    pub(crate) kin: Vec<f64>,
    pub(crate) nod: Vec<f64>,
    window: (f64, f64),
}

impl EnergyForm {
    pub fn new(grid: &Arc<RadialGrid>, r1: f64, r2: f64) -> Result<Self> {
        let (lo, hi) = grid.window(r1, r2)?;
        let h = grid.spacing();
        let kin = if lo <= grid.r_min() && hi >= grid.r_max() {
            grid.interval_mass().iter().zip(h).map(|(m, h)| m / (h * h)).collect()
        } else {
            grid.window_mass(lo, hi).iter().zip(h).map(|(m, h)| m / (h * h)).collect()
        };
        let nod = if lo <= grid.r_min() && hi >= grid.r_max() {
            grid.weights_inv_sq().to_vec()
        } else {
            let mut nod = vec![0.0; grid.len()];
            grid.window_weights(lo, hi, grid.dim() - 3, &mut nod);
            nod
        };
        Ok(EnergyForm { grid: grid.clone(), kin, nod, window: (lo, hi) })
    }

    pub fn full(grid: &Arc<RadialGrid>) -> Self {
        Self::new(grid, 0.0, f64::INFINITY).expect("full window is valid")
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// `Σ c_k |Δu_k|²`, i.e. `∫ |∂ᵣu|² r^{D-1} dr` on the window.
    pub fn gradient_sq(&self, u: &[C64]) -> f64 {
        self.kin.iter().zip(u.windows(2)).map(|(c, p)| c * (p[1] - p[0]).norm_sqr()).sum()
    }

    /// `Σ ŵ_i |u_i|²`, i.e. `∫ |u|²/r² r^{D-1} dr` on the window.
    pub fn hardy_sq(&self, u: &[C64]) -> f64 {
        self.nod.iter().zip(u).map(|(w, v)| w * v.norm_sqr()).sum()
    }

    pub fn norm_sq(&self, u: &[C64]) -> f64 {
        self.gradient_sq(u) + self.hardy_sq(u)
    }

    /// Real part of the bilinear form associated with [`Self::norm_sq`].
    pub fn inner(&self, f: &[C64], g: &[C64]) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.kin.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let df = f[k + 1] - f[k];
            let dg = g[k + 1] - g[k];
            acc += c * (df.re * dg.re + df.im * dg.im);
        }
        for (i, w) in self.nod.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            acc += w * (f[i].re * g[i].re + f[i].im * g[i].im);
        }
        acc
    }
}

/// `Ẽ(u; r1, r2) = ∫_{r1}^{r2} (|∂ᵣu|² + |u|²/r²) r^{D-1} dr`, the squared
/// localized energy-space norm. `r2 = ∞` stands for `r_max`.
pub fn norm_e(f: &RadialField, r1: f64, r2: f64) -> Result<f64> {
    let form = EnergyForm::new(f.grid(), r1, r2)?;
    Ok(form.norm_sq(f.values()))
}

/// Contribution of the harmonic exterior extension `u(r_max)(r_max/r)^{D-2}`
/// to `Ẽ(u; r_max, ∞)`. Reported separately as the truncation tail.
pub fn exterior_tail_norm_e(f: &RadialField) -> f64 {
    let grid = f.grid();
    let d = grid.dim() as f64;
    let um = f.values()[f.len() - 1].norm_sqr();
    um * grid.r_max().powi(grid.dim() as i32 - 2) * ((d - 2.0) * (d - 2.0) + 1.0) / (d - 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Stretch};

    fn w4(r: f64) -> f64 {
        1.0 / (1.0 + r * r / 8.0)
    }

    #[test]
    fn derivative_of_constant_and_linear() {
        let g = make_grid(4, 1e-3, 1e2, 512, Stretch::Geometric).unwrap();
        let c = RadialField::from_real_fn(&g, |_| 3.0);
        assert!(d_r(&c).linf() < 1e-9);
        let lin = RadialField::from_real_fn(&g, |r| r);
        for v in d_r(&lin).values() {
            assert!((v.re - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_of_w_at_one() {
        // uniform grid with a node at r = 1
        let g = make_grid(4, 0.01, 2.01, 2001, Stretch::Uniform).unwrap();
        let i = g.nodes().iter().position(|&r| (r - 1.0).abs() < 1e-12).unwrap();
        let f = RadialField::from_real_fn(&g, w4);
        let expected = -0.25 * (1.0f64 + 1.0 / 8.0).powi(-2);
        assert!((expected + 0.197530864).abs() < 1e-8);
        assert!((d_r(&f).values()[i].re - expected).abs() < 1e-6);
    }

    #[test]
    fn laplacian_of_constant_and_r_squared() {
        let g = make_grid(4, 1e-3, 10.0, 1024, Stretch::Geometric).unwrap();
        let c = RadialField::from_real_fn(&g, |_| 2.5);
        let lc = laplacian(&c);
        // zero up to rounding of O(1/h²) entries; the Robin node sees the exterior tail
        for (i, v) in lc.values()[..g.len() - 1].iter().enumerate() {
            let h = g.spacing()[i];
            assert!(v.norm() < 1e-13 / (h * h), "node {i}: {v}");
        }
        let sq = RadialField::from_real_fn(&g, |r| r * r);
        let l = laplacian(&sq);
        for (i, v) in l.values().iter().enumerate().take(g.len() - 1).skip(1) {
            assert!((v.re - 8.0).abs() < 1e-3, "node {i}: {}", v.re);
        }
    }

    #[test]
    fn laplacian_of_w_is_minus_w_cubed() {
        let g = RadialGrid::default_for(4).unwrap();
        let f = RadialField::from_real_fn(&g, w4);
        let l = laplacian(&f);
        let n = g.len();
        for i in 1..n - 1 {
            let r = g.nodes()[i];
            let exact = -w4(r).powi(3);
            assert!((l.values()[i].re - exact).abs() < 1e-4 * (1.0 + r * r).recip() + 1e-9, "r={r}");
        }
    }

    #[test]
    fn inner_products() {
        let g = RadialGrid::default_for(4).unwrap();
        let z = RadialField::zeros(&g);
        assert_eq!(inner(&z, &z).unwrap(), 0.0);
        let w = RadialField::from_real_fn(&g, w4);
        let iw = w.scale(C64::new(0.0, 1.0));
        assert_eq!(inner(&w, &iw).unwrap(), 0.0);
        // ∫ (1+r²/8)^{-2} r³ dr on [1e-3, 100] = 32 (ln(1+x) + 1/(1+x)) |_{x=r²/8}
        let prim = |r: f64| {
            let x = r * r / 8.0;
            32.0 * ((1.0 + x).ln() + 1.0 / (1.0 + x))
        };
        let exact = prim(100.0) - prim(1e-3);
        let got = inner(&w, &w).unwrap();
        assert!((got - exact).abs() / exact < 1e-4, "{got} vs {exact}");
    }

    #[test]
    fn norm_window_additivity() {
        let g = RadialGrid::default_for(3).unwrap();
        let f = RadialField::from_fn(&g, |r| C64::new((-r).exp(), 0.3 * (-(r * r)).exp()));
        let a = norm_e(&f, 0.0, 0.37).unwrap();
        let b = norm_e(&f, 0.37, 5.2).unwrap();
        let c = norm_e(&f, 5.2, f64::INFINITY).unwrap();
        let total = norm_e(&f, 0.0, f64::INFINITY).unwrap();
        assert!((a + b + c - total).abs() < 1e-12);
        assert!(norm_e(&f, 1.0, 1.0).is_err());
        assert!(norm_e(&f, 2.0, 1.0).is_err());
    }
}
