//! The Aubin-Talenti ground state and its modulated copies.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::TAU;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{config, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::radial::d_r;
use crate::C64;

/// `W(r) = (1 + r²/(D(D-2)))^{-(D-2)/2}`.
pub fn w_profile(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    (1.0 + r * r / (d * (d - 2.0))).powf(-(d - 2.0) / 2.0)
}

/// `W'(r) = -(r/D) (1 + r²/(D(D-2)))^{-D/2}`.
pub fn w_derivative(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    -(r / d) * (1.0 + r * r / (d * (d - 2.0))).powf(-d / 2.0)
}

/// `ΛW = r W' + (D-2)/2 W`, the generator of Ḣ¹ scaling applied to `W`.
pub fn lambda_w(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    r * w_derivative(dim, r) + 0.5 * (d - 2.0) * w_profile(dim, r)
}

/// Radius of the sign change of `ΛW`, `√(D(D-2))`.
pub fn lambda_w_zero(dim: usize) -> f64 {
    let d = dim as f64;
    (d * (d - 2.0)).sqrt()
}

/// `λ^{-(D-2)/2}`, the Ḣ¹ amplitude factor.
pub fn h1_amplitude(dim: usize, lambda: f64) -> f64 {
    lambda.powf(-(dim as f64 - 2.0) / 2.0)
}

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let t = theta % TAU;
    if t < 0.0 {
        t + TAU
    } else if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Phases and scales of an `N`-bubble configuration, ordered `λ_1 <= ... <= λ_N`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BubbleParams {
    theta: Vec<f64>,
    lambda: Vec<f64>,
}

impl BubbleParams {
    /// Pairs are sorted by scale and phases wrapped into `[0, 2π)`.
    pub fn new(theta: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        if theta.len() != lambda.len() {
            return Err(config("theta and lambda must have equal length"));
        }
        if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) || theta.iter().any(|t| !t.is_finite()) {
            return Err(config("scales must be finite and > 0, phases finite"));
        }
        let mut pairs: Vec<(f64, f64)> = theta.into_iter().map(wrap_phase).zip(lambda).collect();
        pairs.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));
        let (theta, lambda) = pairs.into_iter().unzip();
        Ok(BubbleParams { theta, lambda })
    }

    pub fn empty() -> Self {
        BubbleParams::default()
    }

    pub fn single(theta: f64, lambda: f64) -> Result<Self> {
        Self::new(alloc::vec![theta], alloc::vec![lambda])
    }

    pub fn count(&self) -> usize {
        self.lambda.len()
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Indices of bubbles outside the resolved range `[10 r_min, r_max / 10]`.
    pub fn unresolved(&self, grid: &RadialGrid) -> Vec<usize> {
        self.lambda.iter().enumerate().filter(|(_, &l)| !is_resolved(grid, l)).map(|(j, _)| j).collect()
    }

    /// `Σ_j (λ_j/λ_{j+1})^{(D-2)/2}` over the chain `[floor, λ_1..λ_N, top]`,
    /// skipping absent ends.
    pub fn ratio_sum(&self, dim: usize, floor: Option<f64>, top: Option<f64>) -> f64 {
        let chain: Vec<f64> = floor.into_iter().chain(self.lambda.iter().copied()).chain(top).collect();
        let e = (dim as f64 - 2.0) / 2.0;
        chain.windows(2).map(|p| (p[0] / p[1]).powf(e)).sum()
    }

    pub fn rotated(&self, alpha: f64) -> BubbleParams {
        BubbleParams { theta: self.theta.iter().map(|t| wrap_phase(t + alpha)).collect(), lambda: self.lambda.clone() }
    }

    pub fn rescaled(&self, mu: f64) -> BubbleParams {
        BubbleParams { theta: self.theta.clone(), lambda: self.lambda.iter().map(|l| l * mu).collect() }
    }
}

/// `r_min <= λ/10` and `10 λ <= r_max`.
pub fn is_resolved(grid: &RadialGrid, lambda: f64) -> bool {
    grid.r_min() <= lambda / 10.0 && 10.0 * lambda <= grid.r_max()
}

/// `e^{iθ} λ^{-(D-2)/2} W(r/λ)` sampled on the grid.
pub fn bubble(theta: f64, lambda: f64, grid: &Arc<RadialGrid>) -> RadialField {
    let dim = grid.dim();
    let amp = h1_amplitude(dim, lambda);
    let phase = C64::from_polar(1.0, theta);
    RadialField::from_fn(grid, |r| phase * (amp * w_profile(dim, r / lambda)))
}

/// `Σ_j e^{iθ_j} W_{λ_j}`; the zero field when `N = 0`.
pub fn multi_bubble(params: &BubbleParams, grid: &Arc<RadialGrid>) -> RadialField {
    let mut out = RadialField::zeros(grid);
    add_bubbles(params, grid, out.values_mut());
    out
}

pub(crate) fn add_bubbles(params: &BubbleParams, grid: &RadialGrid, out: &mut [C64]) {
    let dim = grid.dim();
    for (&theta, &lambda) in params.theta().iter().zip(params.lambda()) {
        let amp = h1_amplitude(dim, lambda);
        let phase = C64::from_polar(amp, theta);
        for (v, &r) in out.iter_mut().zip(grid.nodes()) {
            *v += phase * w_profile(dim, r / lambda);
        }
    }
}

/// `Λf = r ∂ᵣf + (D-2)/2 f` with the discrete derivative.
pub fn apply_lambda(f: &RadialField) -> RadialField {
    generator(f, (f.grid().dim() as f64 - 2.0) / 2.0)
}

/// `Λ̲f = r ∂ᵣf + D/2 f`.
pub fn apply_lambda_underline(f: &RadialField) -> RadialField {
    generator(f, f.grid().dim() as f64 / 2.0)
}

fn generator(f: &RadialField, shift: f64) -> RadialField {
    let df = d_r(f);
    let values = f
        .grid()
        .nodes()
        .iter()
        .zip(f.values().iter().zip(df.values()))
        .map(|(&r, (&v, &dv))| dv * r + v * shift)
        .collect();
    RadialField::from_raw(f.grid().clone(), values)
}
