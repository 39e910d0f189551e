//! Linearized operators around the ground state, their low spectrum, and the
//! test profiles used for modulation.
//!
//! `L± = -Δ + V±` with `V⁺ = -p W^{p-1}`, `V⁻ = -W^{p-1}`, `p = (D+2)/(D-2)`.
//! The discrete operators are `W⁻¹K + V`, self-adjoint in the weighted inner
//! product, so the spectral problems reduce to symmetric tridiagonal ones
//! after the similarity `x = W^{1/2} y`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dynamics::{f_prime_raw, nl_exponent};
use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::ground_state::{lambda_w, lambda_w_zero, multi_bubble, w_profile, BubbleParams};
use crate::linalg::{bisect_eigenvalue, tridiag_solve_pivoting, BandLu};
use crate::radial::{apply_neg_laplacian_raw, laplacian};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LSign {
    Plus,
    Minus,
}

/// `V±_λ(r) = λ⁻² V±(r/λ)`.
pub fn potential(dim: usize, sign: LSign, lambda: f64, r: f64) -> f64 {
    let coef = match sign {
        LSign::Plus => nl_exponent(dim),
        LSign::Minus => 1.0,
    };
    let d = dim as f64;
    let x = r / lambda;
    // W^{p-1} = (1 + x²/(D(D-2)))^{-2}
    let base = 1.0 + x * x / (d * (d - 2.0));
    -coef / (lambda * lambda * base * base)
}

fn potential_nodes(grid: &RadialGrid, sign: LSign, lambda: f64) -> Vec<f64> {
    grid.nodes().iter().map(|&r| potential(grid.dim(), sign, lambda, r)).collect()
}

/// `L±_λ g = -Δg + V±_λ g`, applied componentwise to complex `g`.
pub fn apply_l(sign: LSign, g: &RadialField, lambda: f64) -> RadialField {
    let grid = g.grid();
    let lap = laplacian(g);
    let dim = grid.dim();
    let values = lap
        .values()
        .iter()
        .zip(g.values())
        .zip(grid.nodes())
        .map(|((l, v), &r)| -l + v * potential(dim, sign, lambda, r))
        .collect();
    RadialField::from_raw(grid.clone(), values)
}

/// `𝓛 g = z (Δg + f'(𝒲) g)` around the configuration `params`.
pub fn apply_l_script(g: &RadialField, params: &BubbleParams, z: C64) -> RadialField {
    let grid = g.grid();
    let config = multi_bubble(params, grid);
    let dim = grid.dim();
    let mut out = laplacian(g);
    for ((o, &gv), &wv) in out.values_mut().iter_mut().zip(g.values()).zip(config.values()) {
        *o = z * (*o + f_prime_raw(dim, wv, gv));
    }
    out
}

/// One eigenpair of `L±` in `L²(r^{D-1} dr)`.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub eigenvalue: f64,
    /// Real, unit weighted `L²` norm, positive at the first node.
    pub eigenfunction: RadialField,
    /// `‖L y - μ y‖_{L²}`
    pub residual: f64,
}

/// Symmetric tridiagonal form `W^{-1/2} (K + W V) W^{-1/2}`.
fn symmetric_form(grid: &RadialGrid, sign: LSign) -> (Vec<f64>, Vec<f64>) {
    let (kd, ko) = grid.stiffness();
    let w = grid.weights();
    let v = potential_nodes(grid, sign, 1.0);
    let diag = (0..grid.len()).map(|i| kd[i] / w[i] + v[i]).collect();
    let off = (0..grid.len() - 1).map(|i| ko[i] / (w[i] * w[i + 1]).sqrt()).collect();
    (diag, off)
}

fn apply_l_real(grid: &Arc<RadialGrid>, sign: LSign, y: &[f64]) -> Vec<f64> {
    let (kd, ko) = grid.stiffness();
    let yc: Vec<C64> = y.iter().map(|&v| C64::new(v, 0.0)).collect();
    let mut out = vec![C64::new(0.0, 0.0); y.len()];
    apply_neg_laplacian_raw(grid, &kd, &ko, &yc, &mut out);
    let v = potential_nodes(grid, sign, 1.0);
    out.iter().zip(&v).zip(y).map(|((o, vi), yi)| o.re + vi * yi).collect()
}

fn weighted_norm(w: &[f64], y: &[f64]) -> f64 {
    w.iter().zip(y).map(|(wi, v)| wi * v * v).sum::<f64>().sqrt()
}

/// The lowest `k` eigenpairs of the discrete `L±` at scale 1: Sturm
/// bisection for the eigenvalues, inverse iteration for the vectors.
pub fn eigen_ground(grid: &Arc<RadialGrid>, sign: LSign, k: usize) -> Result<Vec<SpectralResult>> {
    if k == 0 {
        return Err(crate::error::config("k must be >= 1"));
    }
    let n = grid.len();
    let (diag, off) = symmetric_form(grid, sign);
    let w = grid.weights();
    let mut out = Vec::with_capacity(k);
    for idx in 0..k.min(n) {
        let mu = bisect_eigenvalue(&diag, &off, idx);
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64).collect();
        let mut shift = mu;
        for _ in 0..6 {
            let shifted: Vec<f64> = diag.iter().map(|d| d - shift).collect();
            let mut rhs = x.clone();
            if tridiag_solve_pivoting(&off, &shifted, &off, &mut rhs).is_none() {
                shift = mu + 1e-12 * mu.abs().max(1.0);
                continue;
            }
            let norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                break;
            }
            x = rhs.iter().map(|v| v / norm).collect();
        }
        // back to nodal values; the weighted norm of y equals |x|
        let mut y: Vec<f64> = x.iter().zip(w).map(|(v, wi)| v / wi.sqrt()).collect();
        let nrm = weighted_norm(w, &y);
        let sgn = if y[0] < 0.0 { -1.0 } else { 1.0 };
        for v in y.iter_mut() {
            *v *= sgn / nrm;
        }
        let ly = apply_l_real(grid, sign, &y);
        let res: Vec<f64> = ly.iter().zip(&y).map(|(a, b)| a - mu * b).collect();
        let residual = weighted_norm(w, &res);
        let scale = mu.abs().max(1.0);
        if !(residual <= 1e-6 * scale) {
            return Err(Error::Spectral { message: alloc::format!("eigenpair {idx} did not converge"), residual });
        }
        let field = RadialField::from_raw(grid.clone(), y.iter().map(|&v| C64::new(v, 0.0)).collect());
        out.push(SpectralResult { eigenvalue: mu, eigenfunction: field, residual });
    }
    Ok(out)
}

/// Status of the composed eigenproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Y1Y2Status {
    /// `D >= 5`.
    Primary,
    /// `D ∈ {3, 4}`; reported but not part of the contract.
    Exploratory,
}

#[derive(Debug, Clone)]
pub struct Y1Y2Result {
    pub status: Y1Y2Status,
    /// `None` when no negative eigenvalue of `L⁻L⁺` was found.
    pub nu: Option<f64>,
    pub y1: Option<RadialField>,
    pub y2: Option<RadialField>,
    /// `(‖L⁺Y₁ + νY₂‖, ‖L⁻Y₂ - νY₁‖)` in `L²`.
    pub residuals: (f64, f64),
}

/// Most negative eigenvalue `-ν²` of `L⁻L⁺` with `‖Y₁‖ = 1` and
/// `Y₂ = -L⁺Y₁/ν`.
///
/// Shift-invert iteration on the pentadiagonal product; the shift starts far
/// below zero, where the single negative eigenvalue dominates, and is pulled
/// toward the current estimate. The pair is then refined on the first-order
/// block system.
pub fn solve_y1y2(grid: &Arc<RadialGrid>) -> Result<Y1Y2Result> {
    let dim = grid.dim();
    let status = if dim >= 5 { Y1Y2Status::Primary } else { Y1Y2Status::Exploratory };
    let n = grid.len();
    let w = grid.weights();
    let (kd, ko) = grid.stiffness();
    let vp = potential_nodes(grid, LSign::Plus, 1.0);
    let vm = potential_nodes(grid, LSign::Minus, 1.0);
    // nodal tridiagonal L± = W⁻¹K + V as (sub, diag, super)
    let tri = |v: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sub = (0..n - 1).map(|i| ko[i] / w[i + 1]).collect();
        let dia = (0..n).map(|i| kd[i] / w[i] + v[i]).collect();
        let sup = (0..n - 1).map(|i| ko[i] / w[i]).collect();
        (sub, dia, sup)
    };
    let (pl, pd, pu) = tri(&vp);
    let (ml, md, mu_) = tri(&vm);
    let tri_entry = |l: &[f64], d: &[f64], u: &[f64], i: usize, j: usize| -> f64 {
        if i == j {
            d[i]
        } else if j + 1 == i {
            l[j]
        } else if i + 1 == j {
            u[i]
        } else {
            0.0
        }
    };
    let product = |i: usize, j: usize| -> f64 {
        let lo = i.saturating_sub(1).max(j.saturating_sub(1));
        let hi = (i + 1).min(j + 1).min(n - 1);
        (lo..=hi).map(|k| tri_entry(&ml, &md, &mu_, i, k) * tri_entry(&pl, &pd, &pu, k, j)).sum()
    };
    let apply_tri = |l: &[f64], d: &[f64], u: &[f64], y: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut s = d[i] * y[i];
                if i > 0 {
                    s += l[i - 1] * y[i - 1];
                }
                if i + 1 < n {
                    s += u[i] * y[i + 1];
                }
                s
            })
            .collect()
    };

    let (kappa_sq, _) = {
        let (sd, so) = symmetric_form(grid, LSign::Plus);
        (-bisect_eigenvalue(&sd, &so, 0), ())
    };
    let mut shift = -4.0 * kappa_sq.max(1e-3) * kappa_sq.max(1e-3) - 1.0;
    let mut y: Vec<f64> = grid.nodes().iter().map(|&r| (-r).exp()).collect();
    let mut estimate = f64::NAN;
    for _outer in 0..12 {
        let Some(lu) = BandLu::factor(n, 2, 2, |i, j| product(i, j) - if i == j { shift } else { 0.0 }) else {
            shift *= 1.0 + 1e-6;
            continue;
        };
        for _ in 0..40 {
            lu.solve(&mut y);
            let nrm = weighted_norm(w, &y);
            if !(nrm.is_finite() && nrm > 0.0) {
                return Ok(Y1Y2Result { status, nu: None, y1: None, y2: None, residuals: (f64::NAN, f64::NAN) });
            }
            y.iter_mut().for_each(|v| *v /= nrm);
        }
        let ay = apply_tri(&ml, &md, &mu_, &apply_tri(&pl, &pd, &pu, &y));
        estimate = inner_real(w, &y, &ay);
        let res: Vec<f64> = ay.iter().zip(&y).map(|(a, b)| a - estimate * b).collect();
        if weighted_norm(w, &res) < 1e-9 * estimate.abs().max(1e-12) {
            break;
        }
        if estimate < 0.0 {
            shift = estimate * (1.0 + 1e-4);
        } else {
            shift *= 4.0;
        }
    }
    if !(estimate < 0.0) {
        return Ok(Y1Y2Result { status, nu: None, y1: None, y2: None, residuals: (f64::NAN, f64::NAN) });
    }
    let mut nu = (-estimate).sqrt();
    let mut y2: Vec<f64> = apply_tri(&pl, &pd, &pu, &y).iter().map(|v| -v / nu).collect();

    // Polish on the first-order system (L⁻Y₂, -L⁺Y₁) = ν(Y₁, Y₂). The product
    // is conditioned like h⁻⁴, which leaves rounding noise near r_min; the
    // block form, interleaved as (Y₁ᵢ, Y₂ᵢ), is banded with width 3 and only
    // conditioned like h⁻².
    let block = |i: usize, j: usize| -> f64 {
        let (bi, bj) = (i / 2, j / 2);
        match (i % 2, j % 2) {
            (0, 1) => tri_entry(&ml, &md, &mu_, bi, bj),
            (1, 0) => -tri_entry(&pl, &pd, &pu, bi, bj),
            _ => 0.0,
        }
    };
    let sigma = nu * (1.0 + 1e-10);
    if let Some(lu) = BandLu::factor(2 * n, 3, 3, |i, j| block(i, j) - if i == j { sigma } else { 0.0 }) {
        let mut x: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 0 { y[k / 2] } else { y2[k / 2] }).collect();
        for _ in 0..3 {
            lu.solve(&mut x);
            let y1: Vec<f64> = x.iter().step_by(2).copied().collect();
            let nrm = weighted_norm(w, &y1);
            if !(nrm.is_finite() && nrm > 0.0) {
                break;
            }
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        if x.iter().all(|v| v.is_finite()) {
            let new_y: Vec<f64> = x.iter().step_by(2).copied().collect();
            let new_y2: Vec<f64> = x.iter().skip(1).step_by(2).copied().collect();
            let new_nu = inner_real(w, &new_y, &apply_tri(&ml, &md, &mu_, &new_y2));
            if new_nu > 0.0 {
                y = new_y;
                y2 = new_y2;
                nu = new_nu;
            }
        }
    }
    if y[0] < 0.0 {
        y.iter_mut().for_each(|v| *v = -*v);
        y2.iter_mut().for_each(|v| *v = -*v);
    }
    let lpy1 = apply_tri(&pl, &pd, &pu, &y);
    let r1: Vec<f64> = lpy1.iter().zip(&y2).map(|(a, b)| a + nu * b).collect();
    let lmy2 = apply_tri(&ml, &md, &mu_, &y2);
    let r2: Vec<f64> = lmy2.iter().zip(&y).map(|(a, b)| a - nu * b).collect();
    let to_field = |v: &[f64]| RadialField::from_raw(grid.clone(), v.iter().map(|&x| C64::new(x, 0.0)).collect());
    Ok(Y1Y2Result {
        status,
        nu: Some(nu),
        y1: Some(to_field(&y)),
        y2: Some(to_field(&y2)),
        residuals: (weighted_norm(w, &r1), weighted_norm(w, &r2)),
    })
}

fn inner_real(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a.iter().zip(b)).map(|(wi, (x, y))| wi * x * y).sum()
}

/// `(1 - s²)⁴` with `s` the position of `log r` in `[log ρ₁, log ρ₂]`
/// mapped to `[-1, 1]`; zero outside.
pub fn bump(support: (f64, f64), r: f64) -> f64 {
    let (a, b) = support;
    if !(r > a && r < b) {
        return 0.0;
    }
    let s = (2.0 * r.ln() - a.ln() - b.ln()) / (b.ln() - a.ln());
    let q = 1.0 - s * s;
    let q2 = q * q;
    q2 * q2
}

/// `r ∂ᵣ` of [`bump`].
fn bump_r_dr(support: (f64, f64), r: f64) -> f64 {
    let (a, b) = support;
    if !(r > a && r < b) {
        return 0.0;
    }
    let span = b.ln() - a.ln();
    let s = (2.0 * r.ln() - a.ln() - b.ln()) / span;
    let q = 1.0 - s * s;
    // d/ds (1-s²)⁴ = -8 s (1-s²)³; r ds/dr = 2/span
    -8.0 * s * q * q * q * 2.0 / span
}

/// Pairing values recorded when the profiles are built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificates {
    pub z1_lambda_w: f64,
    pub z1_y: f64,
    pub z2_w: f64,
    /// Jacobian entries of the orthogonality conditions at an exact bubble.
    pub z1_w: f64,
    pub z2_lambda_w: f64,
}

/// Compactly supported profiles `Z₁`, `Z₂` at scale 1, with the closed form
/// needed to evaluate their rescalings on any grid.
///
/// `Z₁ = b₁ - c b₃` with `c` chosen so that `⟨Z₁ | 𝒴⟩ = 0`; `Z₂ = b₂`. The
/// inner bumps `b₁`, `b₂` sit where `ΛW > 0`, the correcting bump `b₃` where
/// `ΛW < 0`. Rescaling uses `Z_λ(r) = λ^{-(D+2)/2} Z(r/λ)`, which keeps all
/// pairings with `Ḣ¹`-rescaled bubbles scale-free.
#[derive(Debug, Clone)]
pub struct TestProfiles {
    pub dim: usize,
    pub z1: RadialField,
    pub z2: RadialField,
    pub inner_support: (f64, f64),
    pub outer_support: (f64, f64),
    pub z2_support: (f64, f64),
    pub coef: f64,
    pub kappa_sq: f64,
    pub certs: Certificates,
}

impl TestProfiles {
    /// Smallest interval containing both supports.
    pub fn support(&self) -> (f64, f64) {
        let lo = self.inner_support.0.min(self.z2_support.0);
        let hi = self.outer_support.1.max(self.z2_support.1);
        (lo, hi)
    }

    pub fn z1_at(&self, r: f64) -> f64 {
        bump(self.inner_support, r) - self.coef * bump(self.outer_support, r)
    }

    pub fn z2_at(&self, r: f64) -> f64 {
        bump(self.z2_support, r)
    }

    fn dual_amp(&self, lambda: f64) -> f64 {
        lambda.powf(-(self.dim as f64 + 2.0) / 2.0)
    }

    /// `Z_{1,λ}` at the grid nodes.
    pub fn z1_scaled(&self, grid: &RadialGrid, lambda: f64) -> Vec<f64> {
        let a = self.dual_amp(lambda);
        grid.nodes().iter().map(|&r| a * self.z1_at(r / lambda)).collect()
    }

    pub fn z2_scaled(&self, grid: &RadialGrid, lambda: f64) -> Vec<f64> {
        let a = self.dual_amp(lambda);
        grid.nodes().iter().map(|&r| a * self.z2_at(r / lambda)).collect()
    }

    /// `λ ∂_λ Z_{1,λ}` at the grid nodes, `-(r∂ᵣ + (D+2)/2) Z₁` rescaled.
    pub fn z1_scaled_dlog(&self, grid: &RadialGrid, lambda: f64) -> Vec<f64> {
        let a = self.dual_amp(lambda);
        let c = (self.dim as f64 + 2.0) / 2.0;
        grid.nodes()
            .iter()
            .map(|&r| {
                let x = r / lambda;
                let rd = bump_r_dr(self.inner_support, x) - self.coef * bump_r_dr(self.outer_support, x);
                -a * (rd + c * self.z1_at(x))
            })
            .collect()
    }

    pub fn z2_scaled_dlog(&self, grid: &RadialGrid, lambda: f64) -> Vec<f64> {
        let a = self.dual_amp(lambda);
        let c = (self.dim as f64 + 2.0) / 2.0;
        grid.nodes()
            .iter()
            .map(|&r| {
                let x = r / lambda;
                -a * (bump_r_dr(self.z2_support, x) + c * self.z2_at(x))
            })
            .collect()
    }
}

/// Build `Z₁`, `Z₂` on `grid` and check the certificates, shifting the
/// supports when a certificate fails.
pub fn build_test_profiles(grid: &Arc<RadialGrid>) -> Result<TestProfiles> {
    let dim = grid.dim();
    let ground = eigen_ground(grid, LSign::Plus, 1)?;
    let y = &ground[0];
    if !(y.eigenvalue < 0.0) {
        return Err(Error::Profiles("L+ has no negative eigenvalue on this grid".into()));
    }
    let w = grid.weights();
    let yv: Vec<f64> = y.eigenfunction.values().iter().map(|v| v.re).collect();
    let zero = lambda_w_zero(dim);
    let wv: Vec<f64> = grid.nodes().iter().map(|&r| w_profile(dim, r)).collect();
    let lwv: Vec<f64> = grid.nodes().iter().map(|&r| lambda_w(dim, r)).collect();
    let sample = |f: &dyn Fn(f64) -> f64| -> Vec<f64> { grid.nodes().iter().map(|&r| f(r)).collect() };

    let attempts: [((f64, f64), (f64, f64)); 4] =
        [((0.15, 0.7), (1.5, 4.0)), ((0.2, 0.8), (1.3, 3.0)), ((0.1, 0.6), (2.0, 6.0)), ((0.3, 0.9), (1.2, 2.5))];
    let mut last = None;
    for (inner_f, outer_f) in attempts {
        let inner_s = (inner_f.0 * zero, inner_f.1 * zero);
        let outer_s = (outer_f.0 * zero, outer_f.1 * zero);
        if inner_s.0 <= grid.r_min() || outer_s.1 >= grid.r_max() {
            continue;
        }
        let b1 = sample(&|r| bump(inner_s, r));
        let b3 = sample(&|r| bump(outer_s, r));
        let denom = inner_real(w, &b3, &yv);
        if denom.abs() < 1e-12 {
            continue;
        }
        let coef = inner_real(w, &b1, &yv) / denom;
        let z1: Vec<f64> = b1.iter().zip(&b3).map(|(a, b)| a - coef * b).collect();
        let z2_s = inner_s;
        let z2 = b1.clone();
        let certs = Certificates {
            z1_lambda_w: inner_real(w, &z1, &lwv),
            z1_y: inner_real(w, &z1, &yv),
            z2_w: inner_real(w, &z2, &wv),
            z1_w: inner_real(w, &z1, &wv),
            z2_lambda_w: inner_real(w, &z2, &lwv),
        };
        let z1_norm = weighted_norm(w, &z1);
        let ok = certs.z1_lambda_w > 0.0
            && certs.z1_y.abs() < 1e-8
            && certs.z2_w > 0.0
            && certs.z1_w.abs() > 1e-3 * z1_norm
            && certs.z2_lambda_w > 0.0;
        let to_field = |v: &[f64]| RadialField::from_raw(grid.clone(), v.iter().map(|&x| C64::new(x, 0.0)).collect());
        let profiles = TestProfiles {
            dim,
            z1: to_field(&z1).with_label("Z1"),
            z2: to_field(&z2).with_label("Z2"),
            inner_support: inner_s,
            outer_support: outer_s,
            z2_support: z2_s,
            coef,
            kappa_sq: -y.eigenvalue,
            certs,
        };
        if ok {
            return Ok(profiles);
        }
        last = Some(certs);
    }
    Err(Error::Profiles(alloc::format!("certificates failed on every support: {last:?}")))
}
