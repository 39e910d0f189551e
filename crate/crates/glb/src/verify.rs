//! The invariant suite behind `glb verify`.

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::io;
use crate::run::{base_manifest, finish, RunOutcome};
use glb_core::dynamics::evolve;
use glb_core::ground_state::wrap_phase;
use glb_core::radial::l2_norm;
use glb_core::*;
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

/// Worker pool capped by `GLB_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GLB_THREADS") {
        let n: usize =
            v.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
                HarnessError::Validation(format!("GLB_THREADS must be a positive integer, got `{v}`"))
            })?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| HarnessError::Internal(e.to_string()))
}

/// Independent stream `trial` of the generator seeded by `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// A smooth random field: one to four Gaussians in `log r` with random
/// complex amplitudes, centred well inside the grid.
pub fn random_field(rng: &mut impl Rng, grid: &Arc<RadialGrid>) -> RadialField {
    let (lo, hi) = (grid.r_min().ln() + 2.0, grid.r_max().ln() - 2.0);
    let k = rng.random_range(1..=4);
    let blobs: Vec<(C64, f64, f64)> = (0..k)
        .map(|_| {
            let a = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (a, rng.random_range(lo..hi), rng.random_range(0.2..1.0))
        })
        .collect();
    RadialField::from_fn(grid, |r| {
        let s = r.ln();
        blobs.iter().map(|(a, c, w)| a * (-((s - c) / w).powi(2)).exp()).sum()
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    fn from_values(name: &str, values: &[f64], tolerance: f64) -> Check {
        // values are "badness" measures; a case fails above the tolerance
        let failures = values.iter().filter(|v| !(**v <= tolerance)).count();
        let worst =
            values.iter().copied().fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
        Check { name: name.into(), passed: failures == 0, cases: values.len(), failures, worst, tolerance }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub seed: u64,
    pub checks: Vec<Check>,
}

/// Sobolev slack `|v(R)| / bound`; the check passes while this stays `<= 1`.
pub fn sobolev_ratio(v: &RadialField, radius: f64) -> f64 {
    match radial_sobolev_check(v, radius) {
        Ok((lhs, rhs)) if rhs > 0.0 => lhs / rhs,
        Ok((lhs, _)) => {
            if lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

pub fn suite(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let grid = cfg.grid.build()?;
    let dim = grid.dim();
    let seed = cfg.seed;
    let trials = cfg.verify.trials as u64;
    let pool = thread_pool()?;
    let mut checks = Vec::new();

    pool.install(|| -> Result<()> {
        // radial Sobolev on random fields and on W
        let mut sob: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(seed, k);
                let v = random_field(&mut rng, &grid);
                let radius = (rng.random_range((2.0 * grid.r_min()).ln()..(0.5 * grid.r_max()).ln())).exp();
                sobolev_ratio(&v, radius)
            })
            .collect();
        let w = bubble(0.0, 1.0, &grid);
        sob.extend([0.5, 1.0, 2.0].iter().map(|&r| sobolev_ratio(&w, r)));
        checks.push(Check::from_values("radial_sobolev", &sob, 1.0));

        // ⟨g, L⁻g⟩ >= 0
        let pos: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let g = random_field(&mut trial_rng(seed ^ 0x5151, k), &grid);
                let q = inner(&g, &apply_l(LSign::Minus, &g, 1.0)).unwrap_or(f64::NAN);
                let n = l2_norm(&g);
                -q / (n * n)
            })
            .collect();
        checks.push(Check::from_values("l_minus_nonnegative", &pos, 1e-6));

        // symmetry and phase covariance of the pairing
        let sym: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(seed ^ 0xa11a, k);
                let f = random_field(&mut rng, &grid);
                let g = random_field(&mut rng, &grid);
                let rot = C64::from_polar(1.0, rng.random_range(-3.0..3.0));
                let ab = inner(&f, &g).unwrap_or(f64::NAN);
                let ba = inner(&g, &f).unwrap_or(f64::NAN);
                let rr = inner(&f.scale(rot), &g.scale(rot)).unwrap_or(f64::NAN);
                ((ab - ba).abs().max((ab - rr).abs())) / (1.0 + ab.abs())
            })
            .collect();
        checks.push(Check::from_values("inner_symmetry_phase", &sym, 1e-12));

        // energy invariance under the critical rescaling
        let scale: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(seed ^ 0x5ca1e, k);
                let lambda = rng.random_range(-1.0f64..1.0).exp();
                let amp = lambda.powf(-(dim as f64 - 2.0) / 2.0);
                let (c, wdt) = (rng.random_range(-2.0..1.0), rng.random_range(0.3..1.0));
                let a = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let prof = |r: f64| a * (-((r.ln() - c) / wdt).powi(2)).exp();
                let u = RadialField::from_fn(&grid, prof);
                let v = RadialField::from_fn(&grid, |r| prof(r / lambda) * amp);
                match (energy(&u, 0.0, f64::INFINITY), energy(&v, 0.0, f64::INFINITY)) {
                    (Ok(e0), Ok(e1)) => (e0.total - e1.total).abs() / (e0.kinetic + e0.potential),
                    _ => f64::NAN,
                }
            })
            .collect();
        checks.push(Check::from_values("energy_scale_invariance", &scale, 1e-3));
        Ok(())
    })?;

    // W is a fixed point of the flow
    let w = bubble(0.0, 1.0, &grid);
    let flow = Flow::new(&grid, FlowConfig { z_phase: cfg.flow.z_phase, dt: 1e-4, t_end: 0.01, ..Default::default() })?;
    let ev = evolve(&flow, FlowState::new(w.clone()), &EvolveOptions::default(), &mut |_, _| {});
    let drift = norm_e(&ev.state.u.sub(&w)?, 0.0, f64::INFINITY)?.sqrt();
    checks.push(Check::from_values("w_stationary", &[drift], 1e-4));

    // energy decreases along a smooth run
    let u0 = random_field(&mut trial_rng(seed ^ 0xe4e4, 0), &grid).scale(C64::new(0.3, 0.0));
    let flow = Flow::new(&grid, FlowConfig { z_phase: cfg.flow.z_phase, dt: 1e-4, t_end: 0.02, ..Default::default() })?;
    let ev =
        evolve(&flow, FlowState::new(u0), &EvolveOptions { observe_every: 1, ..Default::default() }, &mut |_, _| {});
    let rises: Vec<f64> = ev.record.ticks.windows(2).map(|p| p[1].energy - p[0].energy).collect();
    checks.push(Check::from_values("energy_nonincreasing", &rises, 1e-12));

    // spectrum of L± and the test-profile certificates
    let plus = eigen_ground(&grid, LSign::Plus, 2)?;
    let minus = eigen_ground(&grid, LSign::Minus, 1)?;
    let negatives = plus.iter().filter(|e| e.eigenvalue < -1e-4).count() as f64;
    checks.push(Check::from_values("l_plus_single_negative", &[(negatives - 1.0).abs()], 0.0));
    checks.push(Check::from_values("l_minus_no_negative", &[-minus[0].eigenvalue], 1e-4));
    let profile_badness = match build_test_profiles(&grid) {
        Ok(p) => {
            let c = p.certs;
            let mut bad: f64 = 0.0;
            if !(c.z1_lambda_w > 0.0) {
                bad = bad.max(1.0);
            }
            if !(c.z2_w > 0.0) {
                bad = bad.max(1.0);
            }
            bad.max(c.z1_y.abs() / 1e-8 - 1.0).max(0.0)
        }
        Err(_) => f64::INFINITY,
    };
    checks.push(Check::from_values("test_profile_certificates", &[profile_badness], 0.0));

    // planted recovery
    let modulator = Modulator::new(&grid)?;
    let planted = cfg.verify.planted as u64;
    let recov: Vec<f64> = pool.install(|| {
        (0..planted)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(seed ^ 0xb0b, k);
                planted_recovery_error(&modulator, &mut rng)
            })
            .collect()
    });
    checks.push(Check::from_values("planted_recovery", &recov, 1.0));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { passed, seed, checks })
}

/// Fit one planted bubble `e^{iθ}W_λ + 10⁻³ noise` and return the worst of
/// `|Δθ|/10⁻²`, `|Δλ/λ|/10⁻²` and `ortho_max/10⁻⁸`; `<= 1` is a pass.
pub fn planted_recovery_error(modulator: &Modulator, rng: &mut impl Rng) -> f64 {
    let grid = modulator.grid();
    let dim = grid.dim() as f64;
    // resolved scales, a decade inside each end of the grid
    let (lo, hi) = ((10.0 * grid.r_min()).ln().max(-4.0), (0.1 * grid.r_max()).ln().min(2.0));
    let lambda = rng.random_range(lo..hi).exp();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    let (k, ph) = (rng.random_range(1.0..5.0), rng.random_range(0.0..std::f64::consts::TAU));
    let noise = RadialField::from_fn(grid, |r| {
        C64::from_polar(1e-3, ph + k * (r / lambda).ln())
            * (1.0 + r / lambda).powf(-(dim - 2.0) / 2.0)
            * lambda.powf(-(dim - 2.0) / 2.0)
    });
    let u = match bubble(theta, lambda, grid).add(&noise) {
        Ok(u) => u,
        Err(_) => return f64::INFINITY,
    };
    let Some(guess) = modulation::detect_bubbles(&u, 1).first().map(|c| BubbleParams::single(c.theta, c.lambda)) else {
        return f64::INFINITY;
    };
    let Ok(guess) = guess else { return f64::INFINITY };
    match modulator.fit_decomposition(&u, 1, &guess, None) {
        Ok(f) if f.converged => {
            let d = wrap_phase(f.params.theta()[0] - theta);
            let dth = d.min(std::f64::consts::TAU - d);
            let dl = (f.params.lambda()[0] / lambda - 1.0).abs();
            (dth / 1e-2).max(dl / 1e-2).max(f.ortho_max() / 1e-8)
        }
        _ => f64::INFINITY,
    }
}

pub(crate) fn run_verify(cfg: ExperimentConfig, dir: &Path, started: Instant) -> Result<RunOutcome> {
    let report = suite(&cfg)?;
    for c in &report.checks {
        info!(
            "{:<28} {} (worst {:.3e}, tol {:.1e})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.worst,
            c.tolerance
        );
    }
    io::write_json(&dir.join("verify.json"), &report)?;
    let code = if report.passed { 0 } else { 1 };
    finish(dir, base_manifest(&cfg, started), &["verify.json".to_string()], started, code)
}
