//! Energy functionals, the localized energy balance, and inequality probes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dynamics::{abs_pow_nl, tension, TrajectoryRecord};
use crate::error::{config, Error, Result};
use crate::field::RadialField;
use crate::radial::{d_r, exterior_tail_norm_e, norm_e, EnergyForm};
use crate::C64;

/// Kinetic and potential parts of `E(u; r1, r2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    /// `½ ∫ |∂ᵣu|² r^{D-1} dr`
    pub kinetic: f64,
    /// `(D-2)/(2D) ∫ |u|^{2D/(D-2)} r^{D-1} dr`
    pub potential: f64,
    pub total: f64,
    pub window: (f64, f64),
}

/// `|u|^{2*}` with `2* = 2D/(D-2)`.
#[inline]
pub(crate) fn abs_pow_crit(dim: usize, abs_sq: f64) -> f64 {
    abs_sq * abs_pow_nl(dim, abs_sq)
}

fn potential_factor(dim: usize) -> f64 {
    let d = dim as f64;
    (d - 2.0) / (2.0 * d)
}

/// `E(u; r1, r2)`; `r2 = ∞` stands for `r_max`.
pub fn energy(u: &RadialField, r1: f64, r2: f64) -> Result<EnergyReport> {
    let grid = u.grid();
    let form = EnergyForm::new(grid, r1, r2)?;
    let (lo, hi) = form.window();
    let dim = grid.dim();
    let dens: Vec<f64> = u.values().iter().map(|v| abs_pow_crit(dim, v.norm_sqr())).collect();
    let kinetic = 0.5 * form.gradient_sq(u.values());
    let potential = potential_factor(dim) * grid.integrate(&dens, lo, hi)?;
    Ok(EnergyReport { kinetic, potential, total: kinetic - potential, window: (lo, hi) })
}

/// Energy over the whole grid plus the harmonic exterior tail
/// `½ (D-2) r_max^{D-2} |u(r_max)|²`. This is the quantity the stepper
/// dissipates.
pub fn flow_energy(u: &RadialField) -> f64 {
    let grid = u.grid();
    let form = EnergyForm::full(grid);
    let dim = grid.dim();
    let um = u.values()[u.len() - 1].norm_sqr();
    let pot: f64 = grid.weights().iter().zip(u.values()).map(|(w, v)| w * abs_pow_crit(dim, v.norm_sqr())).sum();
    0.5 * (form.gradient_sq(u.values()) + grid.robin_coefficient() * um) - potential_factor(dim) * pot
}

/// Smooth cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`, `C^∞` in between.
pub fn chi(s: f64) -> f64 {
    if s <= 1.0 {
        return 1.0;
    }
    if s >= 2.0 {
        return 0.0;
    }
    let psi = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = psi(2.0 - s);
    a / (a + psi(s - 1.0))
}

/// Derivative of [`chi`].
pub fn chi_prime(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        return 0.0;
    }
    let (x, y) = (2.0 - s, s - 1.0);
    let (a, b) = ((-1.0 / x).exp(), (-1.0 / y).exp());
    // d/ds [a/(a+b)] with a' = -a/x², b' = b/y²
    let (da, db) = (-a / (x * x), b / (y * y));
    (da * b - a * db) / ((a + b) * (a + b))
}

/// Space-time weight `φ(t, r)` for the localized balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiSpec {
    Constant(f64),
    /// `χ(r/R)`
    Interior {
        radius: f64,
    },
    /// `1 - χ(r/R)`
    Exterior {
        radius: f64,
    },
    /// `1 - χ(r/R(t))` with `R(t) = radius · (1 + rate · t)`.
    MovingExterior {
        radius: f64,
        rate: f64,
    },
}

impl PhiSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            PhiSpec::Constant(c) => c.is_finite() && c >= 0.0,
            PhiSpec::Interior { radius } | PhiSpec::Exterior { radius } => radius > 0.0 && radius.is_finite(),
            PhiSpec::MovingExterior { radius, rate } => radius > 0.0 && radius.is_finite() && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(config("cutoff parameters must be finite, radius > 0, constant >= 0"))
        }
    }

    /// `(φ, ∂ᵣφ, ∂ₜφ)` at `(t, r)`.
    pub fn eval(&self, t: f64, r: f64) -> (f64, f64, f64) {
        match *self {
            PhiSpec::Constant(c) => (c, 0.0, 0.0),
            PhiSpec::Interior { radius } => (chi(r / radius), chi_prime(r / radius) / radius, 0.0),
            PhiSpec::Exterior { radius } => (1.0 - chi(r / radius), -chi_prime(r / radius) / radius, 0.0),
            PhiSpec::MovingExterior { radius, rate } => {
                let big_r = radius * (1.0 + rate * t);
                let s = r / big_r;
                let dc = chi_prime(s);
                // ∂ₜ(r/R(t)) = -s R'/R
                let dr_dt = radius * rate;
                (1.0 - chi(s), -dc / big_r, dc * s * dr_dt / big_r)
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            PhiSpec::Constant(c) => alloc::format!("constant({c})"),
            PhiSpec::Interior { radius } => alloc::format!("chi(r/{radius})"),
            PhiSpec::Exterior { radius } => alloc::format!("1-chi(r/{radius})"),
            PhiSpec::MovingExterior { radius, rate } => alloc::format!("1-chi(r/({radius}*(1+{rate}t)))"),
        }
    }
}

/// Both sides of the localized energy balance on `[t1, t2]`.
///
/// `lhs = ∫ ẽ(u(t2)) φ² - ∫ ẽ(u(t1)) φ²` (with the exterior gradient tail)
/// and `rhs = term1 + ... + term5`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub term4: f64,
    pub term5: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`
    pub residual: f64,
    /// `|residual| / max(|lhs|, |term_k|)`, zero when every entry vanishes.
    pub relative_residual: f64,
    pub phi_spec: String,
    pub t1: f64,
    pub t2: f64,
}

/// Per-snapshot integrands of the five balance terms.
struct Integrands {
    weighted_e: f64,
    terms: [f64; 5],
}

fn integrands(u: &RadialField, t: f64, z: C64, phi: &PhiSpec) -> Integrands {
    let grid = u.grid();
    let dim = grid.dim();
    let r = grid.nodes();
    let w = grid.weights();
    let w_hardy = grid.weights_inv_sq();
    let mass = grid.interval_mass();
    let h = grid.spacing();
    let vals = u.values();

    let ut: Vec<C64> = tension(u).values().iter().map(|v| v * z).collect();
    let ur = d_r(u);
    let ph: Vec<(f64, f64, f64)> = r.iter().map(|&ri| phi.eval(t, ri)).collect();

    // ∫ ẽ ψ r^{D-1} with the energy-form discretization and an arbitrary
    // weight ψ sampled at interval midpoints and nodes
    let weighted_density = |psi: &dyn Fn(f64) -> f64, psi_nodes: &[f64]| -> f64 {
        let mut acc = 0.0;
        for k in 0..vals.len() - 1 {
            let mid = 0.5 * (r[k] + r[k + 1]);
            acc += mass[k] / (h[k] * h[k]) * psi(mid) * (vals[k + 1] - vals[k]).norm_sqr();
        }
        for i in 0..vals.len() {
            acc += w_hardy[i] * psi_nodes[i] * vals[i].norm_sqr();
        }
        acc
    };

    let phi_sq_nodes: Vec<f64> = ph.iter().map(|p| p.0 * p.0).collect();
    // the Robin node carries the flux through r_max as the gradient energy of
    // the harmonic extension
    let last = vals.len() - 1;
    let weighted_e = weighted_density(&|x| phi.eval(t, x).0.powi(2), &phi_sq_nodes)
        + grid.robin_coefficient() * phi_sq_nodes[last] * vals[last].norm_sqr();
    let phi_dt_nodes: Vec<f64> = ph.iter().map(|p| p.0 * p.2).collect();
    let has_dt = phi_dt_nodes.iter().any(|v| *v != 0.0);
    let t5 = if has_dt {
        2.0 * weighted_density(
            &|x| {
                let (a, _, c) = phi.eval(t, x);
                a * c
            },
            &phi_dt_nodes,
        )
    } else {
        0.0
    };

    let (mut t1, mut t2, mut t3, mut t4) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..vals.len() {
        let (p, pr, _) = ph[i];
        let p2 = p * p;
        let v = vals[i];
        let dt_conj = ut[i].conj();
        t1 += w[i] * ut[i].norm_sqr() * p2;
        t2 += w[i] * (v * abs_pow_nl(dim, v.norm_sqr()) * dt_conj).re * p2;
        if pr != 0.0 {
            t3 += w[i] * (ur.values()[i] * dt_conj).re * p * pr;
        }
        t4 += w_hardy[i] * (v * dt_conj).re * p2;
    }
    Integrands { weighted_e, terms: [-2.0 * z.re * t1, 2.0 * t2, -4.0 * t3, 2.0 * t4, t5] }
}

/// Evaluate the localized energy balance over the stored snapshots, with
/// `∂ₜu = z T(u)` at each snapshot and trapezoid quadrature in time.
pub fn localized_energy_balance(traj: &TrajectoryRecord, phi: &PhiSpec) -> Result<BalanceReport> {
    phi.validate()?;
    let snaps = &traj.snapshots;
    if snaps.len() < 2 {
        return Err(Error::Diagnostic("balance needs at least two snapshots".into()));
    }
    if snaps.windows(2).any(|p| !(p[1].t > p[0].t)) {
        return Err(Error::Diagnostic("snapshot times must be strictly increasing".into()));
    }
    let z = traj.z();
    let per: Vec<Integrands> = snaps.iter().map(|s| integrands(&s.u, s.t, z, phi)).collect();
    let mut terms = [0.0; 5];
    for k in 0..snaps.len() - 1 {
        let dt = snaps[k + 1].t - snaps[k].t;
        for (j, term) in terms.iter_mut().enumerate() {
            *term += 0.5 * dt * (per[k].terms[j] + per[k + 1].terms[j]);
        }
    }
    let lhs = per[per.len() - 1].weighted_e - per[0].weighted_e;
    let rhs: f64 = terms.iter().sum();
    let residual = lhs - rhs;
    let scale = terms.iter().fold(lhs.abs(), |m, v| m.max(v.abs()));
    let relative_residual = if scale > 0.0 { residual.abs() / scale } else { 0.0 };
    Ok(BalanceReport {
        term1: terms[0],
        term2: terms[1],
        term3: terms[2],
        term4: terms[3],
        term5: terms[4],
        lhs,
        rhs,
        residual,
        relative_residual,
        phi_spec: phi.describe(),
        t1: snaps[0].t,
        t2: snaps[snaps.len() - 1].t,
    })
}

/// Monotone (Fritsch-Carlson) cubic interpolation of `y(x)` at `xq`.
pub(crate) fn monotone_cubic(x: &[f64], y: &[f64], xq: f64) -> f64 {
    let n = x.len();
    let k = match x.partition_point(|&v| v <= xq) {
        0 => 0,
        i => (i - 1).min(n - 2),
    };
    let secant = |j: usize| (y[j + 1] - y[j]) / (x[j + 1] - x[j]);
    let slope_at = |j: usize| -> f64 {
        if j == 0 {
            return secant(0);
        }
        if j == n - 1 {
            return secant(n - 2);
        }
        let (a, b) = (secant(j - 1), secant(j));
        if a * b <= 0.0 {
            return 0.0;
        }
        // weighted harmonic mean keeps the interpolant monotone
        let (h0, h1) = (x[j] - x[j - 1], x[j + 1] - x[j]);
        let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
        (w1 + w2) / (w1 / a + w2 / b)
    };
    let h = x[k + 1] - x[k];
    let s = ((xq - x[k]) / h).clamp(0.0, 1.0);
    let (m0, m1) = (slope_at(k) * h, slope_at(k + 1) * h);
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * y[k] + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y[k + 1] + (s3 - s2) * m1
}

/// `(|v(R)|, √2 R^{-(D-2)/2} Ẽ(v; R, ∞)^{1/2})`. The tail norm includes the
/// harmonic extension beyond `r_max`.
pub fn radial_sobolev_check(v: &RadialField, radius: f64) -> Result<(f64, f64)> {
    let grid = v.grid();
    if !(radius >= grid.r_min() && radius < grid.r_max()) {
        return Err(config(alloc::format!("R = {radius} outside the grid [{}, {})", grid.r_min(), grid.r_max())));
    }
    let abs: Vec<f64> = v.values().iter().map(|c| c.norm()).collect();
    let lhs = monotone_cubic(grid.nodes(), &abs, radius);
    // both sides are 1-homogeneous; rescale so tiny tails do not underflow when squared
    let first = grid.locate(radius);
    let peak = abs[first..].iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok((lhs, 0.0));
    }
    let cut = grid.nodes()[first];
    let unit = v.map(|r, x| if r < cut { C64::new(0.0, 0.0) } else { x / peak });
    let tail = norm_e(&unit, radius, f64::INFINITY)? + exterior_tail_norm_e(&unit);
    let rhs = 2f64.sqrt() * radius.powf(-(grid.dim() as f64 - 2.0) / 2.0) * tail.sqrt() * peak;
    Ok((lhs, rhs))
}

/// `(E(v; R, ∞), Ẽ(v; R, ∞))` for empirical coercivity studies.
pub fn coercivity_probe(v: &RadialField, radius: f64) -> Result<(f64, f64)> {
    let e = energy(v, radius, f64::INFINITY)?;
    Ok((e.total, norm_e(v, radius, f64::INFINITY)?))
}

/// Pointwise `|u|^{2D/(D-2)}`.
pub fn potential_density(u: &RadialField) -> Vec<f64> {
    let dim = u.grid().dim();
    let mut out = vec![0.0; u.len()];
    for (o, v) in out.iter_mut().zip(u.values()) {
        *o = abs_pow_crit(dim, v.norm_sqr());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolveOptions, Flow, FlowConfig, FlowState};
    use crate::grid::{make_grid, RadialGrid, Stretch};
    use crate::ground_state::bubble;

    #[test]
    fn zero_field_energy() {
        let g = RadialGrid::default_for(4).unwrap();
        let e = energy(&RadialField::zeros(&g), 0.0, f64::INFINITY).unwrap();
        assert_eq!((e.kinetic, e.potential, e.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn energy_phase_invariant_and_additive() {
        let g = RadialGrid::default_for(5).unwrap();
        let u = RadialField::from_fn(&g, |r| C64::new((-r * r).exp(), 0.3 * r * (-r).exp()));
        let e0 = energy(&u, 0.0, f64::INFINITY).unwrap();
        let e1 = energy(&u.scale(C64::from_polar(1.0, 1.1)), 0.0, f64::INFINITY).unwrap();
        assert!((e0.total - e1.total).abs() <= 1e-14 * e0.kinetic);
        let a = energy(&u, 0.0, 0.7).unwrap();
        let b = energy(&u, 0.7, f64::INFINITY).unwrap();
        assert!((a.total + b.total - e0.total).abs() < 1e-12);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(2.5), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-15);
        for k in 1..100 {
            let s = 1.0 + k as f64 / 100.0;
            let fd = (chi(s + 1e-6) - chi(s - 1e-6)) / 2e-6;
            assert!((chi_prime(s) - fd).abs() < 1e-5);
            assert!(chi_prime(s) <= 0.0);
        }
    }

    #[test]
    fn moving_cutoff_time_derivative() {
        let phi = PhiSpec::MovingExterior { radius: 1.0, rate: 0.5 };
        for &(t, r) in &[(0.1, 1.3), (0.4, 1.9), (1.0, 2.2)] {
            let h = 1e-6;
            let fd = (phi.eval(t + h, r).0 - phi.eval(t - h, r).0) / (2.0 * h);
            assert!((phi.eval(t, r).2 - fd).abs() < 1e-6);
            let fr = (phi.eval(t, r + h).0 - phi.eval(t, r - h).0) / (2.0 * h);
            assert!((phi.eval(t, r).1 - fr).abs() < 1e-6);
        }
    }

    #[test]
    fn monotone_cubic_reproduces_nodes_and_linear() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((monotone_cubic(&x, &y, *xi) - yi).abs() < 1e-12);
        }
        assert!((monotone_cubic(&x, &y, 3.3) - 7.6).abs() < 1e-12);
        // no overshoot on a step
        let ys: Vec<f64> = x.iter().map(|v| if *v < 5.0 { 0.0 } else { 1.0 }).collect();
        for k in 0..200 {
            let q = 0.1 * k as f64;
            let v = monotone_cubic(&x, &ys, q);
            assert!((-1e-15..=1.0 + 1e-15).contains(&v));
        }
    }

    #[test]
    fn sobolev_on_w_and_zero() {
        let g = RadialGrid::default_for(4).unwrap();
        assert_eq!(radial_sobolev_check(&RadialField::zeros(&g), 1.0).unwrap(), (0.0, 0.0));
        let w = bubble(0.0, 1.0, &g);
        let (lhs, rhs) = radial_sobolev_check(&w, 1.0).unwrap();
        assert!((lhs - 1.0 / 1.125).abs() < 1e-6);
        assert!(lhs <= rhs);
        assert!(radial_sobolev_check(&w, 1e3).is_err());
    }

    #[test]
    fn coercivity_probe_on_tail() {
        let g = RadialGrid::default_for(4).unwrap();
        assert_eq!(coercivity_probe(&RadialField::zeros(&g), 1.0).unwrap(), (0.0, 0.0));
        let w = bubble(0.0, 1.0, &g);
        let (e, n) = coercivity_probe(&w, 10.0).unwrap();
        assert!(e > 0.0 && n > 0.0);
    }

    #[test]
    fn balance_zero_phi_and_stationary() {
        let g = make_grid(4, 1e-3, 1e2, 1024, Stretch::Geometric).unwrap();
        let flow = Flow::new(&g, FlowConfig { t_end: 0.02, dt: 1e-3, ..Default::default() }).unwrap();
        let opts = EvolveOptions { snapshot_every: Some(5), ..Default::default() };
        let ev = evolve(&flow, FlowState::new(bubble(0.0, 1.0, &g)), &opts, &mut |_, _| {});
        let zero = localized_energy_balance(&ev.record, &PhiSpec::Constant(0.0)).unwrap();
        assert_eq!((zero.lhs, zero.rhs), (0.0, 0.0));
        let ext = localized_energy_balance(&ev.record, &PhiSpec::Exterior { radius: 1.0 }).unwrap();
        assert!(ext.residual.abs() < 1e-6, "{ext:?}");
        let mut short = ev.record.clone();
        short.snapshots.truncate(1);
        assert!(localized_energy_balance(&short, &PhiSpec::Constant(1.0)).is_err());
    }
}
