//! Time evolution of `∂ₜu = z (Δu + |u|^{4/(D-2)} u)`.
//!
//! The linear part is treated implicitly (Crank-Nicolson, or backward Euler
//! for the bootstrap scheme) and the nonlinearity explicitly (variable-step
//! Adams-Bashforth 2, or forward Euler). Each step is one complex tridiagonal
//! solve. With `|z| = 1` the implicit midpoint rule satisfies the discrete
//! energy identity exactly for the linear part; the explicit nonlinearity
//! leaves an `O(dt²)` defect.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::energy::flow_energy;
use crate::error::{config, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::linalg::thomas_complex;
use crate::modulation::detect_bubbles;
use crate::radial::{apply_neg_laplacian_raw, laplacian, EnergyForm};
use crate::C64;

/// `(|u|²)^{2/(D-2)} = |u|^{4/(D-2)}` with the integer cases done exactly.
#[inline]
pub(crate) fn abs_pow_nl(dim: usize, abs_sq: f64) -> f64 {
    match dim {
        3 => abs_sq * abs_sq,
        4 => abs_sq,
        6 => abs_sq.sqrt(),
        _ => abs_sq.powf(2.0 / (dim as f64 - 2.0)),
    }
}

/// Exponent `p = (D+2)/(D-2)`.
pub fn nl_exponent(dim: usize) -> f64 {
    let d = dim as f64;
    (d + 2.0) / (d - 2.0)
}

pub(crate) fn f_nl_raw(dim: usize, u: &[C64], out: &mut [C64]) {
    for (o, &v) in out.iter_mut().zip(u) {
        *o = v * abs_pow_nl(dim, v.norm_sqr());
    }
}

/// `f(u) = |u|^{4/(D-2)} u`, pointwise.
pub fn f_nl(u: &RadialField) -> RadialField {
    let mut out = vec![C64::new(0.0, 0.0); u.len()];
    f_nl_raw(u.grid().dim(), u.values(), &mut out);
    RadialField::from_raw(u.grid().clone(), out)
}

pub(crate) fn f_prime_raw(dim: usize, u: C64, g: C64) -> C64 {
    let a2 = u.norm_sqr();
    if a2 == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let q = 4.0 / (dim as f64 - 2.0);
    // Re(u⁻¹ g) = Re(conj(u) g) / |u|²
    let re_ratio = (u.re * g.re + u.im * g.im) / a2;
    (g + u * (q * re_ratio)) * abs_pow_nl(dim, a2)
}

/// The real-linear map `f'(u) g = |u|^{4/(D-2)} (g + 4/(D-2) u Re(u⁻¹ g))`,
/// zero where `u = 0`.
pub fn f_prime(u: &RadialField, g: &RadialField) -> Result<RadialField> {
    u.check_same_grid(g)?;
    let dim = u.grid().dim();
    let values = u.values().iter().zip(g.values()).map(|(&a, &b)| f_prime_raw(dim, a, b)).collect();
    Ok(RadialField::from_raw(u.grid().clone(), values))
}

/// Tension `T(u) = Δu + |u|^{4/(D-2)} u`; along the flow `∂ₜu = z T(u)`.
pub fn tension(u: &RadialField) -> RadialField {
    let mut lap = laplacian(u);
    let dim = u.grid().dim();
    for (l, &v) in lap.values_mut().iter_mut().zip(u.values()) {
        *l += v * abs_pow_nl(dim, v.norm_sqr());
    }
    lap
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Crank-Nicolson on `zΔ`, Adams-Bashforth 2 on `zf(u)`; first step
    /// bootstrapped with [`Scheme::ImexBeFe`].
    ImexCnAb2,
    /// Backward Euler on `zΔ`, forward Euler on `zf(u)`.
    ImexBeFe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// `arg z` in `(-π/2, π/2)`; `z = e^{i z_phase}`.
    pub z_phase: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Shrink `dt` to `dt_safety · λ_min²` with `λ_min` the smallest detected scale.
    pub adapt: bool,
    pub dt_safety: f64,
    /// Switch off `f(u)` (linear flow).
    pub nonlinear: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            z_phase: 0.0,
            dt: 1e-4,
            t_end: 1.0,
            scheme: Scheme::ImexCnAb2,
            adapt: false,
            dt_safety: 0.05,
            nonlinear: true,
        }
    }
}

impl FlowConfig {
    pub fn z(&self) -> C64 {
        C64::from_polar(1.0, self.z_phase)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z_phase.abs() < FRAC_PI_2) {
            return Err(config("z phase must lie in (-π/2, π/2) so that Re z > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config("dt must be positive"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(config("t_end must be finite and >= 0"));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(config("dt_safety must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// The previous step, needed by the two-step scheme.
#[derive(Debug, Clone)]
pub struct PrevStep {
    pub u: Vec<C64>,
    pub f: Vec<C64>,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub u: RadialField,
    pub step_count: u64,
    /// `∫₀ᵗ ‖∂ₜu‖²_{L²} ds` accumulated from difference quotients.
    pub dissipation_accum: f64,
    /// `‖(u_{n+1} - u_n)/dt‖_{L²}` of the last step.
    pub last_dtu_l2: f64,
    pub prev: Option<PrevStep>,
}

impl FlowState {
    pub fn new(u: RadialField) -> Self {
        FlowState { t: 0.0, u, step_count: 0, dissipation_accum: 0.0, last_dtu_l2: 0.0, prev: None }
    }

    /// Restore a state from persisted pieces; `prev_u` rebuilds the
    /// Adams-Bashforth history.
    pub fn restore(
        t: f64,
        u: RadialField,
        step_count: u64,
        dissipation_accum: f64,
        last_dtu_l2: f64,
        prev: Option<(RadialField, f64)>,
        nonlinear: bool,
    ) -> Result<Self> {
        let prev = match prev {
            Some((pu, dt)) => {
                u.check_same_grid(&pu)?;
                let mut f = vec![C64::new(0.0, 0.0); pu.len()];
                if nonlinear {
                    f_nl_raw(pu.grid().dim(), pu.values(), &mut f);
                }
                Some(PrevStep { u: pu.into_values(), f, dt })
            }
            None => None,
        };
        Ok(FlowState { t, u, step_count, dissipation_accum, last_dtu_l2, prev })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowUpReason {
    NonFinite,
    LinfCeiling,
    ScaleBelowResolution,
}

/// Blow-up signal: the last finite state and why the run stopped.
#[derive(Debug, Clone)]
pub struct BlowUp {
    pub reason: BlowUpReason,
    pub t: f64,
    pub last_good: FlowState,
}

/// Precomputed operator for one grid and configuration.
#[derive(Debug, Clone)]
pub struct Flow {
    grid: Arc<RadialGrid>,
    cfg: FlowConfig,
    z: C64,
    stiff_diag: Vec<f64>,
    stiff_off: Vec<f64>,
}

impl Flow {
    pub fn new(grid: &Arc<RadialGrid>, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let (stiff_diag, stiff_off) = grid.stiffness();
        Ok(Flow { grid: grid.clone(), z: cfg.z(), cfg, stiff_diag, stiff_off })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn z(&self) -> C64 {
        self.z
    }

    fn nonlinearity(&self, u: &[C64]) -> Vec<C64> {
        let mut f = vec![C64::new(0.0, 0.0); u.len()];
        if self.cfg.nonlinear {
            f_nl_raw(self.grid.dim(), u, &mut f);
        }
        f
    }

    /// Advance by `dt`. Non-finite output yields the blow-up signal.
    #[allow(clippy::result_large_err)]
    pub fn step(&self, state: &FlowState, dt: f64) -> core::result::Result<FlowState, BlowUp> {
        let n = self.grid.len();
        let w = self.grid.weights();
        let u = state.u.values();
        let f_now = self.nonlinearity(u);

        let two_step = self.cfg.scheme == Scheme::ImexCnAb2 && state.prev.is_some();
        // implicit weight on the linear term: 1/2 for CN, 1 for BE
        let theta = if two_step { 0.5 } else { 1.0 };
        let a = self.z * (theta * dt);

        let mut ku = vec![C64::new(0.0, 0.0); n];
        let mut rhs = vec![C64::new(0.0, 0.0); n];
        if two_step {
            apply_neg_laplacian_raw(&self.grid, &self.stiff_diag, &self.stiff_off, u, &mut ku);
            let prev = state.prev.as_ref().expect("two-step scheme has history");
            let omega = dt / prev.dt;
            let (c_now, c_prev) = (1.0 + 0.5 * omega, -0.5 * omega);
            for i in 0..n {
                let extrap = f_now[i] * c_now + prev.f[i] * c_prev;
                // ku holds W⁻¹Ku; multiply back by w_i
                rhs[i] = (u[i] - a * ku[i] + self.z * dt * extrap) * w[i];
            }
        } else {
            for i in 0..n {
                rhs[i] = (u[i] + self.z * dt * f_now[i]) * w[i];
            }
        }
        let diag: Vec<C64> = (0..n).map(|i| C64::new(w[i], 0.0) + a * self.stiff_diag[i]).collect();
        let off: Vec<C64> = self.stiff_off.iter().map(|&o| a * o).collect();
        thomas_complex(&off, &diag, &off, &mut rhs);

        if rhs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(BlowUp { reason: BlowUpReason::NonFinite, t: state.t, last_good: state.clone() });
        }
        let incr: f64 = rhs.iter().zip(u).zip(w).map(|((x, y), wi)| wi * (x - y).norm_sqr()).sum();
        let next = FlowState {
            t: state.t + dt,
            u: RadialField::from_raw(self.grid.clone(), rhs),
            step_count: state.step_count + 1,
            dissipation_accum: state.dissipation_accum + incr / dt,
            last_dtu_l2: incr.sqrt() / dt,
            prev: Some(PrevStep { u: u.to_vec(), f: f_now, dt }),
        };
        Ok(next)
    }
}

/// Scalar diagnostics at one observer tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub t: f64,
    pub step: u64,
    pub energy: f64,
    pub norm_e: f64,
    pub tension_l2: f64,
    pub dtu_l2: f64,
    pub linf: f64,
    pub dissipation_accum: f64,
}

impl Tick {
    pub fn of(state: &FlowState) -> Tick {
        let u = &state.u;
        let form = EnergyForm::full(u.grid());
        let t_u = tension(u);
        Tick {
            t: state.t,
            step: state.step_count,
            energy: flow_energy(u),
            norm_e: form.norm_sq(u.values()).sqrt(),
            tension_l2: crate::radial::l2_norm(&t_u),
            dtu_l2: state.last_dtu_l2,
            linf: u.linf(),
            dissipation_accum: state.dissipation_accum,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    pub u: RadialField,
}

/// Time series of diagnostics and stored snapshots of one run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub z_phase: f64,
    pub ticks: Vec<Tick>,
    pub snapshots: Vec<Snapshot>,
}

impl TrajectoryRecord {
    pub fn new(dim: usize, z_phase: f64) -> Self {
        TrajectoryRecord { dim, z_phase, ticks: Vec::new(), snapshots: Vec::new() }
    }

    pub fn z(&self) -> C64 {
        C64::from_polar(1.0, self.z_phase)
    }

    pub fn times(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.t).collect()
    }

    /// Largest `|E(t) - E(0) + Re z ∫₀ᵗ ‖∂ₜu‖²|` over the recorded ticks.
    pub fn ledger_residual(&self) -> f64 {
        let Some(first) = self.ticks.first() else { return 0.0 };
        let re_z = self.z().re;
        self.ticks
            .iter()
            .map(|t| (t.energy - first.energy + re_z * (t.dissipation_accum - first.dissipation_accum)).abs())
            .fold(0.0, f64::max)
    }
}

/// Observer cadence, snapshotting, and stop conditions for [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    /// Record a tick every `observe_every` steps (and at the end).
    pub observe_every: u64,
    /// Store a snapshot every this many steps; `None` stores none.
    pub snapshot_every: Option<u64>,
    /// Stop with a blow-up signal when `‖u‖_∞` exceeds this.
    pub linf_ceiling: f64,
    /// Stop when the smallest detected scale drops below `factor · r_min`.
    pub min_scale_factor: f64,
    /// Include the initial state as the first tick / snapshot.
    pub record_initial: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            observe_every: 100,
            snapshot_every: None,
            linf_ceiling: 1e6,
            min_scale_factor: 4.0,
            record_initial: true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Completed,
    BlowUp(BlowUp),
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub record: TrajectoryRecord,
    pub state: FlowState,
    pub outcome: Outcome,
}

impl Evolution {
    pub fn blew_up(&self) -> bool {
        matches!(self.outcome, Outcome::BlowUp(_))
    }
}

/// Smallest calibrated bubble scale detected in `u`, if any.
pub fn smallest_scale(u: &RadialField) -> Option<f64> {
    detect_bubbles(u, 8).iter().map(|c| c.lambda).fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))))
}

/// Step until `t_end` or a blow-up signal, calling `observer` at each tick.
pub fn evolve(
    flow: &Flow,
    state0: FlowState,
    opts: &EvolveOptions,
    observer: &mut dyn FnMut(&FlowState, &Tick),
) -> Evolution {
    let cfg = flow.config();
    let grid = flow.grid().clone();
    let mut record = TrajectoryRecord::new(grid.dim(), cfg.z_phase);
    let mut state = state0;
    let every = opts.observe_every.max(1);

    let mut emit = |state: &FlowState, record: &mut TrajectoryRecord| {
        let tick = Tick::of(state);
        observer(state, &tick);
        record.ticks.push(tick);
    };
    if opts.record_initial {
        emit(&state, &mut record);
        if opts.snapshot_every.is_some() {
            record.snapshots.push(Snapshot { t: state.t, step: state.step_count, u: state.u.clone() });
        }
    }

    let tol = 1e-6 * cfg.dt;
    let outcome = loop {
        if cfg.t_end - state.t <= tol {
            break Outcome::Completed;
        }
        let scale = smallest_scale(&state.u);
        if let Some(l) = scale {
            if l < opts.min_scale_factor * grid.r_min() {
                break Outcome::BlowUp(BlowUp {
                    reason: BlowUpReason::ScaleBelowResolution,
                    t: state.t,
                    last_good: state.clone(),
                });
            }
        }
        let mut dt = cfg.dt;
        if cfg.adapt {
            if let Some(l) = scale {
                dt = dt.min(cfg.dt_safety * l * l);
            }
        }
        if state.t + dt > cfg.t_end + tol {
            dt = cfg.t_end - state.t;
        }
        match flow.step(&state, dt) {
            Ok(next) => {
                let ceiling_hit = next.u.linf() > opts.linf_ceiling;
                let done = cfg.t_end - next.t <= tol;
                state = next;
                let on_cadence = state.step_count.is_multiple_of(every);
                if on_cadence || done || ceiling_hit {
                    emit(&state, &mut record);
                }
                if let Some(s) = opts.snapshot_every {
                    if state.step_count.is_multiple_of(s.max(1)) || done || ceiling_hit {
                        record.snapshots.push(Snapshot { t: state.t, step: state.step_count, u: state.u.clone() });
                    }
                }
                if ceiling_hit {
                    break Outcome::BlowUp(BlowUp {
                        reason: BlowUpReason::LinfCeiling,
                        t: state.t,
                        last_good: state.clone(),
                    });
                }
            }
            Err(b) => break Outcome::BlowUp(b),
        }
    };
    Evolution { record, state, outcome }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, RadialGrid, Stretch};
    use crate::ground_state::bubble;
    use crate::radial::norm_e;

    #[test]
    fn nonlinearity_values() {
        let g = make_grid(4, 0.1, 1.0, 16, Stretch::Uniform).unwrap();
        let mut u = RadialField::zeros(&g);
        u.values_mut()[1] = C64::new(2.0, 0.0);
        u.values_mut()[2] = C64::new(0.0, 1.0);
        let f = f_nl(&u);
        assert_eq!(f.values()[0], C64::new(0.0, 0.0));
        assert_eq!(f.values()[1], C64::new(8.0, 0.0));
        assert_eq!(f.values()[2], C64::new(0.0, 1.0));
    }

    #[test]
    fn f_prime_cases() {
        let g = make_grid(4, 0.1, 1.0, 16, Stretch::Uniform).unwrap();
        let one = RadialField::from_real_fn(&g, |_| 1.0);
        let zero = RadialField::zeros(&g);
        let gi = RadialField::from_fn(&g, |_| C64::new(0.0, 1.0));
        assert_eq!(f_prime(&one, &one).unwrap().values()[0], C64::new(3.0, 0.0));
        assert_eq!(f_prime(&one, &gi).unwrap().values()[0], C64::new(0.0, 1.0));
        assert_eq!(f_prime(&zero, &one).unwrap().linf(), 0.0);
    }

    #[test]
    fn f_prime_is_derivative() {
        for dim in [3usize, 4, 5, 7] {
            let u = C64::new(0.7, -0.4);
            let g = C64::new(-0.3, 1.1);
            let eps = 1e-7;
            let f = |v: C64| v * abs_pow_nl(dim, v.norm_sqr());
            let fd = (f(u + g * eps) - f(u - g * eps)) / (2.0 * eps);
            assert!((f_prime_raw(dim, u, g) - fd).norm() < 1e-7, "dim {dim}");
        }
    }

    #[test]
    fn tension_of_bubbles_is_small() {
        let g = RadialGrid::default_for(4).unwrap();
        let t0 = tension(&RadialField::zeros(&g));
        assert_eq!(t0.linf(), 0.0);
        let w = bubble(0.0, 1.0, &g);
        let tw = crate::radial::l2_norm(&tension(&w));
        let rot = bubble(1.2, 1.0, &g);
        let trot = crate::radial::l2_norm(&tension(&rot));
        assert!(tw < 1e-3, "{tw}");
        assert!((tw - trot).abs() < 1e-12);
    }

    #[test]
    fn zero_is_fixed_point() {
        let g = make_grid(3, 1e-3, 10.0, 128, Stretch::Geometric).unwrap();
        let flow = Flow::new(&g, FlowConfig { t_end: 0.01, dt: 1e-3, ..Default::default() }).unwrap();
        let ev = evolve(&flow, FlowState::new(RadialField::zeros(&g)), &EvolveOptions::default(), &mut |_, _| {});
        assert!(matches!(ev.outcome, Outcome::Completed));
        assert_eq!(ev.state.u.linf(), 0.0);
        assert_eq!(ev.state.step_count, 10);
    }

    #[test]
    fn t_end_zero_records_only_initial() {
        let g = make_grid(3, 1e-3, 10.0, 128, Stretch::Geometric).unwrap();
        let flow = Flow::new(&g, FlowConfig { t_end: 0.0, ..Default::default() }).unwrap();
        let ev = evolve(&flow, FlowState::new(bubble(0.0, 1.0, &g)), &EvolveOptions::default(), &mut |_, _| {});
        assert_eq!(ev.record.ticks.len(), 1);
        assert_eq!(ev.state.step_count, 0);
    }

    #[test]
    fn config_validation() {
        let bad = FlowConfig { z_phase: 1.6, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FlowConfig { dt: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FlowConfig { dt_safety: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let ok = FlowConfig { z_phase: -1.2, ..Default::default() };
        assert!(ok.validate().is_ok());
        assert!((ok.z().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dissipation_nondecreasing_and_w_stays_put() {
        let g = RadialGrid::default_for(4).unwrap();
        let w = bubble(0.0, 1.0, &g);
        let flow = Flow::new(&g, FlowConfig { t_end: 0.05, dt: 1e-3, z_phase: 0.4, ..Default::default() }).unwrap();
        let mut last = 0.0;
        let ev = evolve(
            &flow,
            FlowState::new(w.clone()),
            &EvolveOptions { observe_every: 1, ..Default::default() },
            &mut |s, _| {
                assert!(s.dissipation_accum >= last);
                last = s.dissipation_accum;
            },
        );
        let err = norm_e(&ev.state.u.sub(&w).unwrap(), 0.0, f64::INFINITY).unwrap().sqrt();
        assert!(err < 1e-4, "{err}");
    }
}
