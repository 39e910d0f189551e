//! Decomposition `u = bg + 𝒲(θ⃗, λ⃗) + g`, proximity to multi-bubble
//! configurations, and bubble detection.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dynamics::TrajectoryRecord;
use crate::error::{config, Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::ground_state::{h1_amplitude, lambda_w, lambda_w_zero, w_profile, wrap_phase, BubbleParams};
use crate::linalg::dense_solve;
use crate::linearized::{build_test_profiles, TestProfiles};
use crate::radial::EnergyForm;
use crate::C64;

/// One detected bubble: calibrated scale, phase at the indicator peak, and
/// peak height relative to a pure bubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub theta: f64,
    pub lambda: f64,
    pub strength: f64,
}

/// Peaks below this fraction of the pure-bubble indicator height are ignored.
const DETECT_THRESHOLD: f64 = 0.3;
/// Peaks closer than this factor in `r` are merged.
const DETECT_MERGE: f64 = 3.0;

/// Candidates from local maxima of `r^{(D-2)/2} |u(r)|`, sorted by scale.
///
/// For `e^{iθ} W_λ` the indicator peaks at `r = λ √(D(D-2))` with height
/// `(√(D(D-2))/2)^{(D-2)/2}`; both constants calibrate the output.
pub fn detect_bubbles(u: &RadialField, n_max: usize) -> Vec<Candidate> {
    let grid = u.grid();
    let dim = grid.dim();
    let r = grid.nodes();
    let a = (dim as f64 - 2.0) / 2.0;
    let c = lambda_w_zero(dim);
    let pure = (0.5 * c).powf(a);
    let ind: Vec<f64> = r
        .iter()
        .zip(u.values())
        .map(|(&ri, v)| {
            let ra = match dim {
                4 => ri,
                6 => ri * ri,
                _ => ri.powf(a),
            };
            ra * v.norm()
        })
        .collect();
    let thr = DETECT_THRESHOLD * pure;
    let mut peaks: Vec<Candidate> = Vec::new();
    for i in 1..ind.len() - 1 {
        if !(ind[i] > ind[i - 1] && ind[i] >= ind[i + 1] && ind[i] >= thr) {
            continue;
        }
        // parabola through the three points in log r
        let (x0, x1, x2) = (r[i - 1].ln(), r[i].ln(), r[i + 1].ln());
        let (y0, y1, y2) = (ind[i - 1], ind[i], ind[i + 1]);
        let d01 = (y1 - y0) / (x1 - x0);
        let d12 = (y2 - y1) / (x2 - x1);
        let curv = (d12 - d01) / (x2 - x0);
        let xv = if curv < 0.0 { 0.5 * (x0 + x1) - 0.5 * d01 / curv } else { x1 };
        let xv = xv.clamp(x0, x2);
        let peak_r = xv.exp();
        let v = u.values()[i];
        peaks.push(Candidate { theta: wrap_phase(v.im.atan2(v.re)), lambda: peak_r / c, strength: y1 / pure });
    }
    let mut merged: Vec<Candidate> = Vec::new();
    for p in peaks {
        match merged.last_mut() {
            Some(last) if p.lambda / last.lambda < DETECT_MERGE => {
                if p.strength > last.strength {
                    *last = p;
                }
            }
            _ => merged.push(p),
        }
    }
    if merged.len() > n_max {
        merged.sort_by(|a, b| b.strength.partial_cmp(&a.strength).unwrap_or(Ordering::Equal));
        merged.truncate(n_max);
        merged.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap_or(Ordering::Equal));
    }
    merged
}

/// Candidates as a parameter vector.
pub fn candidates_to_params(c: &[Candidate]) -> BubbleParams {
    BubbleParams::new(c.iter().map(|x| x.theta).collect(), c.iter().map(|x| x.lambda).collect())
        .expect("detected scales are positive")
}

/// Top scale convention for proximity functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Global solution at time `t`: `λ_{N+1} = √t`.
    Global { t: f64 },
    /// Blow-up at `t_plus`: `λ_{N+1} = √(t_plus - t)`.
    Blowup { t_plus: f64, t: f64 },
    /// No top scale (static distance).
    Static,
}

impl Regime {
    /// `None` for [`Regime::Static`] and for a degenerate zero top scale.
    pub fn top_scale(&self) -> Option<f64> {
        let s = match *self {
            Regime::Global { t } => t.sqrt(),
            Regime::Blowup { t_plus, t } => (t_plus - t).sqrt(),
            Regime::Static => return None,
        };
        if s > 0.0 && s.is_finite() {
            Some(s)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub params: BubbleParams,
    pub g: RadialField,
    /// `⟨ie^{iθ_j}Z_{1,λ_j} | g⟩, ⟨e^{iθ_j}Z_{2,λ_j} | g⟩` for each bubble.
    pub ortho_residuals: Vec<f64>,
    /// `‖g‖_E`
    pub g_norm: f64,
    /// `Σ_{j<N} (λ_j/λ_{j+1})^{(D-2)/2}`
    pub ratio_sum: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Bubbles outside the resolved scale range.
    pub unresolved: Vec<usize>,
}

impl DecompositionResult {
    pub fn ortho_max(&self) -> f64 {
        self.ortho_residuals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖g‖²_E + ratio_sum`, the middle term of the bound sandwich.
    pub fn bound_value(&self) -> f64 {
        self.g_norm * self.g_norm + self.ratio_sum
    }
}

#[derive(Debug, Clone)]
pub struct ProximityValue {
    pub value: f64,
    pub argmin_params: BubbleParams,
    pub window: (f64, f64),
    pub floor_scale: Option<f64>,
    pub top_scale: Option<f64>,
    pub k: usize,
    /// Number of local minimizations; the value is the best of them and an
    /// upper bound for the infimum.
    pub starts: usize,
    pub norm_sq: f64,
    pub ratio_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationOptions {
    pub ortho_tol: f64,
    pub newton_max_iter: usize,
    pub lm_max_iter: usize,
}

impl Default for ModulationOptions {
    fn default() -> Self {
        ModulationOptions { ortho_tol: 1e-8, newton_max_iter: 60, lm_max_iter: 200 }
    }
}

/// Working parameters `(θ_j, log λ_j)`.
#[derive(Debug, Clone, PartialEq)]
struct Iterate {
    theta: Vec<f64>,
    s: Vec<f64>,
}

impl Iterate {
    fn from_params(p: &BubbleParams) -> Self {
        Iterate { theta: p.theta().to_vec(), s: p.lambda().iter().map(|l| l.ln()).collect() }
    }

    fn to_params(&self) -> BubbleParams {
        BubbleParams::new(self.theta.clone(), self.s.iter().map(|s| s.exp()).collect()).expect("finite iterate")
    }

    fn n(&self) -> usize {
        self.theta.len()
    }
}

/// `e^{iθ} W_λ` and `e^{iθ} (ΛW)_λ` at the nodes.
fn bubble_parts(grid: &RadialGrid, theta: f64, lambda: f64) -> (Vec<C64>, Vec<C64>) {
    let dim = grid.dim();
    let ph = C64::from_polar(h1_amplitude(dim, lambda), theta);
    let mut w = Vec::with_capacity(grid.len());
    let mut lw = Vec::with_capacity(grid.len());
    for &r in grid.nodes() {
        let x = r / lambda;
        w.push(ph * w_profile(dim, x));
        lw.push(ph * lambda_w(dim, x));
    }
    (w, lw)
}

/// Orthogonality-based decomposition and proximity functions on one grid.
#[derive(Debug, Clone)]
pub struct Modulator {
    grid: Arc<RadialGrid>,
    profiles: TestProfiles,
    pub opts: ModulationOptions,
}

impl Modulator {
    pub fn new(grid: &Arc<RadialGrid>) -> Result<Self> {
        let profiles = build_test_profiles(grid)?;
        Ok(Modulator { grid: grid.clone(), profiles, opts: ModulationOptions::default() })
    }

    pub fn with_profiles(grid: &Arc<RadialGrid>, profiles: TestProfiles) -> Self {
        Modulator { grid: grid.clone(), profiles, opts: ModulationOptions::default() }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn profiles(&self) -> &TestProfiles {
        &self.profiles
    }

    fn target(&self, u: &RadialField, bg: Option<&RadialField>) -> Result<Vec<C64>> {
        if !crate::field::same_grid(u.grid(), &self.grid) {
            return Err(Error::Dimension("field and modulator live on different grids".into()));
        }
        match bg {
            Some(b) => Ok(u.sub(b)?.into_values()),
            None => Ok(u.values().to_vec()),
        }
    }

    fn clamp_scale(&self, s: f64) -> f64 {
        s.clamp(self.grid.r_min().ln(), self.grid.r_max().ln())
    }

    fn residual_field(&self, target: &[C64], it: &Iterate) -> Vec<C64> {
        let mut g = target.to_vec();
        for (&th, &s) in it.theta.iter().zip(&it.s) {
            let (w, _) = bubble_parts(&self.grid, th, s.exp());
            for (gi, wi) in g.iter_mut().zip(&w) {
                *gi -= wi;
            }
        }
        g
    }

    fn ortho(&self, g: &[C64], it: &Iterate) -> Vec<f64> {
        let w = self.grid.weights();
        let mut f = Vec::with_capacity(2 * it.n());
        for (&th, &s) in it.theta.iter().zip(&it.s) {
            let lam = s.exp();
            let z1 = self.profiles.z1_scaled(&self.grid, lam);
            let z2 = self.profiles.z2_scaled(&self.grid, lam);
            let ph = C64::from_polar(1.0, -th);
            let (mut a, mut b) = (0.0, 0.0);
            for i in 0..g.len() {
                if z1[i] == 0.0 && z2[i] == 0.0 {
                    continue;
                }
                let q = ph * g[i];
                a += w[i] * z1[i] * q.im;
                b += w[i] * z2[i] * q.re;
            }
            f.push(a);
            f.push(b);
        }
        f
    }

    /// Newton iteration on the `2N` orthogonality conditions over
    /// `(θ_j, log λ_j)`, damped by step halving.
    pub fn fit_decomposition(
        &self,
        u: &RadialField,
        n: usize,
        guess: &BubbleParams,
        bg: Option<&RadialField>,
    ) -> Result<DecompositionResult> {
        if n == 0 || guess.count() != n {
            return Err(config(alloc::format!("need N >= 1 and a guess with N = {n} bubbles")));
        }
        let target = self.target(u, bg)?;
        let grid = &self.grid;
        let w = grid.weights();
        let mut it = Iterate::from_params(guess);
        for s in it.s.iter_mut() {
            *s = self.clamp_scale(*s);
        }
        let mut g = self.residual_field(&target, &it);
        let mut f = self.ortho(&g, &it);
        let fnorm = |f: &[f64]| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut iterations = 0;
        let dim2 = 2 * n;
        while iterations < self.opts.newton_max_iter && fnorm(&f) > 1e-13 {
            iterations += 1;
            let mut jac = vec![0.0; dim2 * dim2];
            // columns: ∂g/∂θ_k = -i e^{iθ_k} W_k, ∂g/∂s_k = e^{iθ_k} ΛW_k
            let parts: Vec<(Vec<C64>, Vec<C64>)> =
                it.theta.iter().zip(&it.s).map(|(&th, &s)| bubble_parts(grid, th, s.exp())).collect();
            for j in 0..n {
                let lam = it.s[j].exp();
                let z1 = self.profiles.z1_scaled(grid, lam);
                let z2 = self.profiles.z2_scaled(grid, lam);
                let dz1 = self.profiles.z1_scaled_dlog(grid, lam);
                let dz2 = self.profiles.z2_scaled_dlog(grid, lam);
                let ph = C64::from_polar(1.0, -it.theta[j]);
                for (k, (wk, lwk)) in parts.iter().enumerate() {
                    let (mut a_t, mut a_s, mut b_t, mut b_s) = (0.0, 0.0, 0.0, 0.0);
                    for i in 0..g.len() {
                        if z1[i] == 0.0 && z2[i] == 0.0 {
                            continue;
                        }
                        let gt = ph * (C64::new(0.0, -1.0) * wk[i]);
                        let gs = ph * lwk[i];
                        a_t += w[i] * z1[i] * gt.im;
                        a_s += w[i] * z1[i] * gs.im;
                        b_t += w[i] * z2[i] * gt.re;
                        b_s += w[i] * z2[i] * gs.re;
                    }
                    jac[(2 * j) * dim2 + 2 * k] = a_t;
                    jac[(2 * j) * dim2 + 2 * k + 1] = a_s;
                    jac[(2 * j + 1) * dim2 + 2 * k] = b_t;
                    jac[(2 * j + 1) * dim2 + 2 * k + 1] = b_s;
                }
                // derivatives of the test functions themselves
                let (mut re1, mut im2, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..g.len() {
                    if z1[i] == 0.0 && z2[i] == 0.0 && dz1[i] == 0.0 && dz2[i] == 0.0 {
                        continue;
                    }
                    let q = ph * g[i];
                    re1 += w[i] * z1[i] * q.re;
                    im2 += w[i] * z2[i] * q.im;
                    d1 += w[i] * dz1[i] * q.im;
                    d2 += w[i] * dz2[i] * q.re;
                }
                jac[(2 * j) * dim2 + 2 * j] -= re1;
                jac[(2 * j) * dim2 + 2 * j + 1] += d1;
                jac[(2 * j + 1) * dim2 + 2 * j] += im2;
                jac[(2 * j + 1) * dim2 + 2 * j + 1] += d2;
            }
            let mut step: Vec<f64> = f.iter().map(|v| -v).collect();
            if dense_solve(&mut jac, &mut step, dim2).is_none() {
                return Err(Error::Fit {
                    message: alloc::format!("singular Jacobian at {:?}", it.to_params()),
                    residual: fnorm(&f),
                });
            }
            let mut alpha = 1.0;
            let current = fnorm(&f);
            let mut accepted = false;
            for _ in 0..30 {
                let mut trial = it.clone();
                for k in 0..n {
                    trial.theta[k] = it.theta[k] + alpha * step[2 * k];
                    trial.s[k] = self.clamp_scale(it.s[k] + alpha * step[2 * k + 1]);
                }
                let g_t = self.residual_field(&target, &trial);
                let f_t = self.ortho(&g_t, &trial);
                if fnorm(&f_t) < current {
                    it = trial;
                    g = g_t;
                    f = f_t;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let converged = fnorm(&f) < self.opts.ortho_tol;
        let params = it.to_params();
        // report residuals in sorted order
        let it_sorted = Iterate::from_params(&params);
        let f_sorted = self.ortho(&g, &it_sorted);
        if !converged {
            return Err(Error::Fit {
                message: alloc::format!("Newton stalled after {iterations} iterations at {params:?}"),
                residual: fnorm(&f),
            });
        }
        let form = EnergyForm::full(grid);
        let g_norm = form.norm_sq(&g).sqrt();
        let ratio_sum = params.ratio_sum(grid.dim(), None, None);
        let unresolved = params.unresolved(grid);
        Ok(DecompositionResult {
            params,
            g: RadialField::from_raw(grid.clone(), g),
            ortho_residuals: f_sorted,
            g_norm,
            ratio_sum,
            converged,
            iterations,
            unresolved,
        })
    }

    /// Objective `‖target - 𝒲‖²_form + Σ ratios²` and its pieces.
    fn objective(&self, target: &[C64], form: &EnergyForm, chain: &Chain, it: &Iterate) -> (f64, f64, f64) {
        let g = self.residual_field(target, it);
        let norm_sq = form.norm_sq(&g);
        let ratio = chain.ratio_sum(&it.s, self.grid.dim());
        (norm_sq + ratio, norm_sq, ratio)
    }

    /// Levenberg-Marquardt from one start.
    fn minimize(&self, target: &[C64], form: &EnergyForm, chain: &Chain, start: Iterate) -> (f64, Iterate) {
        let n = start.n();
        let mut it = start;
        for s in it.s.iter_mut() {
            *s = self.clamp_scale(*s);
        }
        let (mut val, _, _) = self.objective(target, form, chain, &it);
        if n == 0 {
            return (val, it);
        }
        let dim = self.grid.dim();
        let m = 2 * n;
        let mut mu = 1e-3;
        for _ in 0..self.opts.lm_max_iter {
            let g = self.residual_field(target, &it);
            let mut cols: Vec<Vec<C64>> = Vec::with_capacity(m);
            for (&th, &s) in it.theta.iter().zip(&it.s) {
                let (w, lw) = bubble_parts(&self.grid, th, s.exp());
                cols.push(w.iter().map(|v| C64::new(0.0, -1.0) * v).collect());
                cols.push(lw);
            }
            let (rho, drho) = chain.residuals(&it.s, dim);
            let mut a = vec![0.0; m * m];
            let mut grad = vec![0.0; m];
            for p in 0..m {
                for q in p..m {
                    let mut v = form.inner(&cols[p], &cols[q]);
                    for dr in &drho {
                        v += dr[p] * dr[q];
                    }
                    a[p * m + q] = v;
                    a[q * m + p] = v;
                }
                let mut gv = form.inner(&cols[p], &g);
                for (r, dr) in rho.iter().zip(&drho) {
                    gv += r * dr[p];
                }
                grad[p] = gv;
            }
            let mut improved = false;
            for _ in 0..12 {
                let mut sys = a.clone();
                for p in 0..m {
                    sys[p * m + p] += mu * a[p * m + p].max(1e-12);
                }
                let mut step: Vec<f64> = grad.iter().map(|v| -v).collect();
                if dense_solve(&mut sys, &mut step, m).is_none() {
                    mu *= 10.0;
                    continue;
                }
                let mut trial = it.clone();
                for k in 0..n {
                    trial.theta[k] += step[2 * k];
                    trial.s[k] = self.clamp_scale(trial.s[k] + step[2 * k + 1]);
                }
                let (tv, _, _) = self.objective(target, form, chain, &trial);
                if tv < val {
                    let gain = val - tv;
                    it = trial;
                    val = tv;
                    mu = (mu / 3.0).max(1e-12);
                    improved = gain > 1e-15 * val.max(1e-300);
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        for t in it.theta.iter_mut() {
            *t = wrap_phase(*t);
        }
        (val, it)
    }

    /// Starting points: detected candidates (padded or trimmed to `n`), an
    /// orthogonality fit seeded from them, and scale/phase jitters.
    fn starts(&self, target: &RadialField, n: usize, window: (f64, f64), extra: &[BubbleParams]) -> Vec<Iterate> {
        let mut out: Vec<Iterate> = extra.iter().filter(|p| p.count() == n).map(Iterate::from_params).collect();
        if n == 0 {
            out.push(Iterate { theta: vec![], s: vec![] });
            return out;
        }
        let cands: Vec<Candidate> = detect_bubbles(target, n)
            .into_iter()
            .filter(|c| c.lambda * lambda_w_zero(self.grid.dim()) >= window.0)
            .collect();
        let mut theta: Vec<f64> = cands.iter().map(|c| c.theta).collect();
        let mut lam: Vec<f64> = cands.iter().map(|c| c.lambda).collect();
        let mid = (window.0.max(self.grid.r_min()) * window.1).sqrt();
        while lam.len() < n {
            let next = match lam.iter().cloned().fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l)))) {
                Some(smallest) => (smallest / 30.0).max(self.grid.r_min()),
                None => mid,
            };
            lam.push(next);
            theta.push(0.0);
        }
        let base = BubbleParams::new(theta, lam).expect("positive scales");
        out.push(Iterate::from_params(&base));
        if let Ok(fit) = self.fit_decomposition(target, n, &base, None) {
            out.push(Iterate::from_params(&fit.params));
        }
        for (mul, rot) in [(0.5, 0.0), (2.0, 0.0), (1.0, PI), (1.0, 0.5)] {
            let mut j = Iterate::from_params(&base);
            for (t, s) in j.theta.iter_mut().zip(j.s.iter_mut()) {
                *t += rot;
                *s += f64::ln(mul);
            }
            out.push(j);
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn proximity(
        &self,
        u: &RadialField,
        bg: Option<&RadialField>,
        n: usize,
        window_lo: f64,
        floor: Option<f64>,
        top: Option<f64>,
        k: usize,
        extra: &[BubbleParams],
    ) -> Result<ProximityValue> {
        let target = self.target(u, bg)?;
        let form = EnergyForm::new(&self.grid, window_lo, f64::INFINITY)?;
        let chain = Chain { floor, top };
        let target_field = RadialField::from_raw(self.grid.clone(), target.clone());
        let starts = self.starts(&target_field, n, form.window(), extra);
        let count = starts.len();
        let mut best: Option<(f64, Iterate)> = None;
        for s in starts {
            let (v, it) = self.minimize(&target, &form, &chain, s);
            let better = match &best {
                None => true,
                Some((bv, bit)) => v < *bv || (v == *bv && lex_less(&it, bit)),
            };
            if better {
                best = Some((v, it));
            }
        }
        let (_, it) = best.expect("at least one start");
        let (value_sq, norm_sq, ratio_sum) = self.objective(&target, &form, &chain, &it);
        Ok(ProximityValue {
            value: value_sq.max(0.0).sqrt(),
            argmin_params: it.to_params(),
            window: form.window(),
            floor_scale: floor,
            top_scale: top,
            k,
            starts: count,
            norm_sq,
            ratio_sum,
        })
    }

    /// `d` with `N` bubbles on the whole grid, top scale from the regime.
    pub fn proximity_d(
        &self,
        u: &RadialField,
        n: usize,
        regime: Regime,
        bg: Option<&RadialField>,
    ) -> Result<ProximityValue> {
        self.proximity(u, bg, n, 0.0, None, regime.top_scale(), 0, &[])
    }

    /// Like [`Self::proximity_d`] with extra caller-supplied starts (e.g. the
    /// previous time's minimizer).
    pub fn proximity_d_seeded(
        &self,
        u: &RadialField,
        n: usize,
        regime: Regime,
        bg: Option<&RadialField>,
        seeds: &[BubbleParams],
    ) -> Result<ProximityValue> {
        self.proximity(u, bg, n, 0.0, None, regime.top_scale(), 0, seeds)
    }

    /// `d_K(ρ)`: bubbles `K+1..N` fitted on `(ρ, ∞)` with `λ_K = ρ`.
    pub fn proximity_dk(
        &self,
        u: &RadialField,
        n: usize,
        k: usize,
        rho: f64,
        regime: Regime,
        bg: Option<&RadialField>,
    ) -> Result<ProximityValue> {
        if k > n {
            return Err(config("K must not exceed N"));
        }
        if !(rho > 0.0) {
            return Err(config("rho must be > 0"));
        }
        self.proximity(u, bg, n - k, rho, Some(rho), regime.top_scale(), k, &[])
    }

    /// `δ_R`: best over `M ∈ 0..=m_max` with `λ_{M+1} = R`. A larger `M`
    /// must improve the value by more than a relative `1e-6` to be chosen.
    pub fn delta_r(&self, u: &RadialField, radius: f64, m_max: usize) -> Result<(f64, usize, BubbleParams)> {
        if !(radius > 0.0) {
            return Err(config("R must be > 0"));
        }
        let mut best: Option<(f64, usize, BubbleParams)> = None;
        for m in 0..=m_max {
            let p = self.proximity(u, None, m, 0.0, None, Some(radius), 0, &[])?;
            let take = match &best {
                None => true,
                Some((v, _, _)) => p.value < *v * (1.0 - 1e-6),
            };
            if take {
                best = Some((p.value, m, p.argmin_params));
            }
        }
        Ok(best.expect("m_max >= 0"))
    }

    /// `d_M` with no top scale.
    pub fn d_m(&self, v: &RadialField, m: usize) -> Result<ProximityValue> {
        self.proximity(v, None, m, 0.0, None, None, 0, &[])
    }

    /// Fit every stored snapshot, seeding each fit from the previous one.
    /// `t_plus` selects the blow-up top scale; otherwise `√t` is used.
    pub fn track_modulation(&self, traj: &TrajectoryRecord, n: usize, t_plus: Option<f64>) -> ModulationSeries {
        let mut samples: Vec<ModulationSample> = Vec::new();
        let mut failure_index = None;
        let mut prev: Option<BubbleParams> = None;
        for (idx, snap) in traj.snapshots.iter().enumerate() {
            let guess = match &prev {
                Some(p) => p.clone(),
                None => {
                    let c = detect_bubbles(&snap.u, n);
                    if c.len() != n {
                        failure_index = Some(idx);
                        break;
                    }
                    candidates_to_params(&c)
                }
            };
            let fit = match self.fit_decomposition(&snap.u, n, &guess, None) {
                Ok(f) => f,
                Err(_) => {
                    failure_index = Some(idx);
                    break;
                }
            };
            let regime = match t_plus {
                Some(tp) => Regime::Blowup { t_plus: tp, t: snap.t },
                None => Regime::Global { t: snap.t },
            };
            let d = self
                .proximity_d_seeded(&snap.u, n, regime, None, core::slice::from_ref(&fit.params))
                .map(|p| p.value)
                .unwrap_or(f64::NAN);
            prev = Some(fit.params.clone());
            samples.push(ModulationSample { t: snap.t, d, fit, lambda_rate_ratio: vec![] });
        }
        // |λ_j'| λ_j / d with one-sided differences at the ends
        let len = samples.len();
        for i in 0..len {
            if len < 2 {
                break;
            }
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == len - 1 {
                (len - 2, len - 1)
            } else {
                (i - 1, i + 1)
            };
            let dt = samples[b].t - samples[a].t;
            let ratios = (0..n)
                .map(|j| {
                    let la = samples[a].fit.params.lambda()[j];
                    let lb = samples[b].fit.params.lambda()[j];
                    let lj = samples[i].fit.params.lambda()[j];
                    ((lb - la) / dt).abs() * lj / samples[i].d
                })
                .collect();
            samples[i].lambda_rate_ratio = ratios;
        }
        ModulationSeries { n, samples, failure_index }
    }
}

fn lex_less(a: &Iterate, b: &Iterate) -> bool {
    for (x, y) in a.s.iter().zip(&b.s).chain(a.theta.iter().zip(&b.theta)) {
        match x.partial_cmp(y) {
            Some(Ordering::Less) => return true,
            Some(Ordering::Greater) => return false,
            _ => {}
        }
    }
    false
}

/// Ratio chain `[floor, λ sorted, top]`.
struct Chain {
    floor: Option<f64>,
    top: Option<f64>,
}

impl Chain {
    /// Residuals `(λ_a/λ_b)^{(D-2)/4}` and their gradients in the
    /// interleaved `(θ_0, s_0, θ_1, s_1, ...)` layout.
    fn residuals(&self, s: &[f64], dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let e = (dim as f64 - 2.0) / 4.0;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(Ordering::Equal));
        // (log scale, parameter index if free)
        let mut chain: Vec<(f64, Option<usize>)> = Vec::new();
        if let Some(f) = self.floor {
            chain.push((f.ln(), None));
        }
        chain.extend(order.iter().map(|&k| (s[k], Some(k))));
        if let Some(t) = self.top {
            chain.push((t.ln(), None));
        }
        let m = 2 * s.len();
        let mut rho = Vec::new();
        let mut grad = Vec::new();
        for pair in chain.windows(2) {
            let r = (e * (pair[0].0 - pair[1].0)).exp();
            let mut g = vec![0.0; m];
            if let Some(a) = pair[0].1 {
                g[2 * a + 1] += e * r;
            }
            if let Some(b) = pair[1].1 {
                g[2 * b + 1] -= e * r;
            }
            rho.push(r);
            grad.push(g);
        }
        (rho, grad)
    }

    fn ratio_sum(&self, s: &[f64], dim: usize) -> f64 {
        self.residuals(s, dim).0.iter().map(|r| r * r).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ModulationSample {
    pub t: f64,
    /// Proximity `d(t)` (upper bound from multi-start).
    pub d: f64,
    pub fit: DecompositionResult,
    /// `|λ_j'| λ_j / d(t)` per bubble.
    pub lambda_rate_ratio: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModulationSeries {
    pub n: usize,
    pub samples: Vec<ModulationSample>,
    /// Snapshot index where fitting first failed, if it did.
    pub failure_index: Option<usize>,
}
