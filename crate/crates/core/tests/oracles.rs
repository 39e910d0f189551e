//! Independent numerical oracles for the discrete operators and the flow.

use glb_core::dynamics::{evolve, smallest_scale};
use glb_core::grid::make_grid;
use glb_core::ground_state::{apply_lambda, lambda_w};
use glb_core::linearized::Y1Y2Status;
use glb_core::radial::l2_norm;
use glb_core::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn w_closed(dim: usize, r: f64) -> f64 {
    let k = (dim * (dim - 2)) as f64;
    (1.0 + r * r / k).powf(-(dim as f64 - 2.0) / 2.0)
}

fn w_closed_dr(dim: usize, r: f64) -> f64 {
    let k = (dim * (dim - 2)) as f64;
    -(dim as f64 - 2.0) * r / k * (1.0 + r * r / k).powf(-(dim as f64) / 2.0)
}

/// Composite Simpson in `s = ln r` of `f(r) r^D ds = f(r) r^{D-1} dr`.
fn simpson_log(dim: usize, a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n + n % 2;
    let (sa, sb) = (a.ln(), b.ln());
    let h = (sb - sa) / n as f64;
    let g = |s: f64| {
        let r = s.exp();
        f(r) * r.powi(dim as i32)
    };
    let mut acc = g(sa) + g(sb);
    for i in 1..n {
        acc += g(sa + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// L² norm over `[10 r_min, cut]`, away from both truncation boundaries.
fn masked_l2(f: &RadialField, cut: f64) -> f64 {
    let g = f.grid();
    let lo = 10.0 * g.r_min();
    g.weights()
        .iter()
        .zip(g.nodes())
        .zip(f.values())
        .filter(|((_, r), _)| **r >= lo && **r <= cut)
        .map(|((w, _), v)| w * v.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

#[test]
fn energy_of_w_matches_quadrature_oracle() {
    for dim in [3usize, 4, 5, 6] {
        let g = RadialGrid::default_for(dim).unwrap();
        let (a, b) = (g.r_min(), g.r_max());
        let p = 2.0 * dim as f64 / (dim as f64 - 2.0);
        let kin = simpson_log(dim, a, b, 1_000_000, |r| w_closed_dr(dim, r).powi(2));
        let pot = simpson_log(dim, a, b, 1_000_000, |r| w_closed(dim, r).powf(p));
        let oracle = 0.5 * kin - (dim as f64 - 2.0) / (2.0 * dim as f64) * pot;
        let e = energy(&bubble(0.0, 1.0, &g), 0.0, f64::INFINITY).unwrap();
        assert!(((e.total - oracle) / oracle).abs() < 1e-4, "D={dim}: {} vs {oracle}", e.total);
        let got = e.potential * 2.0 * dim as f64 / (dim as f64 - 2.0);
        assert!((got / pot - 1.0).abs() < 5e-4, "D={dim}: {got} vs {pot}");
    }
}

#[test]
fn energy_norm_of_w_matches_quadrature_oracle() {
    let dim = 4;
    let g = RadialGrid::default_for(dim).unwrap();
    let oracle = simpson_log(dim, 0.5, 20.0, 400_000, |r| w_closed_dr(dim, r).powi(2) + (w_closed(dim, r) / r).powi(2));
    let got = norm_e(&bubble(0.0, 1.0, &g), 0.5, 20.0).unwrap();
    assert!((got / oracle - 1.0).abs() < 1e-4, "{got} vs {oracle}");
}

#[test]
fn inner_product_of_bubbles_matches_oracle() {
    let dim = 5;
    let g = RadialGrid::default_for(dim).unwrap();
    let (la, lb) = (0.5, 2.0);
    let amp = |l: f64| l.powf(-(dim as f64 - 2.0) / 2.0);
    let oracle = simpson_log(dim, g.r_min(), g.r_max(), 400_000, |r| {
        amp(la) * w_closed(dim, r / la) * amp(lb) * w_closed(dim, r / lb)
    });
    // phases π/3 apart: Re(e^{-iπ/3}) = 1/2
    let got = inner(&bubble(0.0, la, &g), &bubble(PI / 3.0, lb, &g)).unwrap();
    assert!((got / (0.5 * oracle) - 1.0).abs() < 1e-4, "{got} vs {}", 0.5 * oracle);
}

#[test]
fn bubble_tension_converges_at_second_order() {
    for (theta, lambda) in [(0.0, 1.0), (1.0, 0.3), (-2.0, 3.0)] {
        let mut res = vec![];
        for m in [256usize, 512, 1024] {
            let g = make_grid(4, 1e-3, 1e2, m, Stretch::Geometric).unwrap();
            res.push(masked_l2(&tension(&bubble(theta, lambda, &g)), 30.0));
        }
        assert!(order(res[0], res[1]) >= 1.9 && order(res[1], res[2]) >= 1.9, "{res:?}");
    }
}

#[test]
fn kernel_residuals_converge_at_second_order() {
    for dim in [3usize, 4, 5] {
        let (mut plus, mut minus) = (vec![], vec![]);
        for m in [256usize, 512, 1024] {
            let g = make_grid(dim, 1e-3, 1e2, m, Stretch::Geometric).unwrap();
            let lw = RadialField::from_real_fn(&g, |r| lambda_w(dim, r));
            plus.push(masked_l2(&apply_l(LSign::Plus, &lw, 1.0), 30.0));
            minus.push(masked_l2(&apply_l(LSign::Minus, &bubble(0.0, 1.0, &g), 1.0), 30.0));
        }
        assert!(order(plus[1], plus[2]) >= 1.9, "D={dim} {plus:?}");
        assert!(order(minus[1], minus[2]) >= 1.9, "D={dim} {minus:?}");
    }
}

#[test]
fn numerical_scaling_generator_matches_closed_form() {
    let g = RadialGrid::default_for(4).unwrap();
    let num = apply_lambda(&bubble(0.0, 1.0, &g));
    let exact = RadialField::from_real_fn(&g, |r| lambda_w(4, r));
    assert!(masked_l2(&num.sub(&exact).unwrap(), 50.0) < 1e-3 * l2_norm(&exact));
}

#[test]
fn grid_quadrature_of_one() {
    for dim in [3usize, 4, 5, 7] {
        let g = RadialGrid::default_for(dim).unwrap();
        let exact = (g.r_max().powi(dim as i32) - g.r_min().powi(dim as i32)) / dim as f64;
        let got: f64 = g.weights().iter().sum();
        assert!((got / exact - 1.0).abs() < 1e-3);
        assert!(g.weights().iter().all(|w| *w > 0.0));
    }
}

#[test]
fn spectral_facts_in_four_dimensions() {
    let g = RadialGrid::default_for(4).unwrap();
    let plus = eigen_ground(&g, LSign::Plus, 2).unwrap();
    assert!(plus[0].eigenvalue < -0.1);
    assert!(plus[1].eigenvalue.abs() < 1e-4);
    let minus = eigen_ground(&g, LSign::Minus, 1).unwrap();
    assert!(minus[0].eigenvalue.abs() < 1e-4);
    for e in plus.iter().chain(&minus) {
        assert!((l2_norm(&e.eigenfunction) - 1.0).abs() < 1e-10);
    }
    // ground state of L⁻ is W up to normalization
    let w = bubble(0.0, 1.0, &g);
    let c = inner(&minus[0].eigenfunction, &w).unwrap() / l2_norm(&w);
    assert!((c.abs() - 1.0).abs() < 1e-3, "{c}");
}

#[test]
fn y1y2_in_five_dimensions() {
    let mut nus = vec![];
    for m in [1024usize, 2048] {
        let g = make_grid(5, 1e-3, 1e2, m, Stretch::Geometric).unwrap();
        let y = solve_y1y2(&g).unwrap();
        assert_eq!(y.status, Y1Y2Status::Primary);
        let nu = y.nu.expect("negative eigenvalue of L-L+");
        assert!(nu > 0.0);
        let y1 = y.y1.unwrap();
        let y2 = y.y2.unwrap();
        let consistency = l2_norm(&apply_l(LSign::Minus, &y2, 1.0).axpy(C64::new(-nu, 0.0), &y1).unwrap());
        assert!(consistency < 1e-8, "{consistency}");
        assert!(y.residuals.0 < 1e-8 && y.residuals.1 < 1e-8);
        nus.push(nu);
    }
    assert!((nus[0] / nus[1] - 1.0).abs() < 1e-3, "{nus:?}");
}

fn run(u0: RadialField, cfg: FlowConfig, opts: EvolveOptions) -> Evolution {
    let flow = Flow::new(u0.grid(), cfg).unwrap();
    evolve(&flow, FlowState::new(u0), &opts, &mut |_, _| {})
}

fn smooth_data(g: &Arc<RadialGrid>) -> RadialField {
    let dim = g.dim();
    RadialField::from_fn(g, |r| {
        C64::new(0.6 * w_closed(dim, r), 0.0) + C64::new(0.2, 0.3) * (-(r - 2.0) * (r - 2.0)).exp()
    })
}

#[test]
fn stationary_state_stays_put() {
    let g = RadialGrid::default_for(4).unwrap();
    let w = bubble(0.7, 1.0, &g);
    let cfg = FlowConfig { z_phase: PI / 5.0, dt: 1e-3, t_end: 0.5, ..Default::default() };
    let ev = run(w.clone(), cfg, EvolveOptions::default());
    assert!(!ev.blew_up());
    assert!(norm_e(&ev.state.u.sub(&w).unwrap(), 0.0, f64::INFINITY).unwrap().sqrt() < 1e-3);
}

#[test]
fn energy_is_nonincreasing_and_ledger_converges() {
    let g = RadialGrid::default_for(4).unwrap();
    let u0 = smooth_data(&g);
    let mut ledger = vec![];
    for dt in [4e-4, 2e-4, 1e-4] {
        let cfg = FlowConfig { z_phase: 0.5, dt, t_end: 0.2, ..Default::default() };
        let ev = run(u0.clone(), cfg, EvolveOptions { observe_every: 5, ..Default::default() });
        let e: Vec<f64> = ev.record.ticks.iter().map(|t| t.energy).collect();
        assert!(e.windows(2).all(|p| p[1] <= p[0] + 1e-12));
        ledger.push(ev.record.ledger_residual());
    }
    assert!(order(ledger[0], ledger[1]) > 1.8 && order(ledger[1], ledger[2]) > 1.8, "{ledger:?}");
}

#[test]
fn scaling_covariance_of_the_flow() {
    let dim = 4;
    let g = make_grid(dim, 1e-3, 1e2, 2048, Stretch::Geometric).unwrap();
    // a power of the node ratio maps nodes onto nodes
    let q = g.ratio().unwrap();
    let shift = (2f64.ln() / q.ln()).round() as i32;
    let lambda = q.powi(shift);
    let base = |r: f64| C64::new(0.5, 0.2) * (-(r - 1.0) * (r - 1.0)).exp();
    let amp = lambda.powf(-(dim as f64 - 2.0) / 2.0);
    let t = 0.1;
    let cfg = |t_end: f64, dt: f64| FlowConfig { z_phase: 0.3, dt, t_end, ..Default::default() };
    let a = run(RadialField::from_fn(&g, base), cfg(t, 1e-4), EvolveOptions::default()).state.u;
    let b = run(
        RadialField::from_fn(&g, |r| base(r / lambda) * amp),
        cfg(lambda * lambda * t, 4e-4),
        EvolveOptions::default(),
    )
    .state
    .u;
    // compare b(r) with amp · a(r/λ) at nodes where r/λ stays inside the grid
    let probe = [0.5, 1.0, 2.0, 3.0, 5.0];
    for &x in &probe {
        let ia = g.locate(x);
        let ib = g.locate(x * lambda);
        let (ra, rb) = (g.nodes()[ia], g.nodes()[ib]);
        assert!((rb / ra / lambda - 1.0).abs() < 1e-9, "geometric grid should map nodes");
        let diff = (b.values()[ib] - a.values()[ia] * amp).norm();
        assert!(diff < 1e-4, "x={x}: {diff}");
    }
}

#[test]
fn smoothing_monitor_stays_bounded() {
    let g = RadialGrid::default_for(3).unwrap();
    let u0 = RadialField::from_fn(&g, |r| C64::new(if r < 1.0 { 0.3 } else { 0.0 }, 0.0));
    let cfg = FlowConfig { z_phase: 0.0, dt: 1e-4, t_end: 1.0, ..Default::default() };
    let mut worst: f64 = 0.0;
    let flow = Flow::new(&g, cfg).unwrap();
    evolve(&flow, FlowState::new(u0), &EvolveOptions { observe_every: 10, ..Default::default() }, &mut |s, tick| {
        if s.t > 0.0 {
            worst = worst.max(s.t.powf(0.25) * tick.linf);
        }
    });
    assert!(worst.is_finite() && worst < 1.0, "{worst}");
}

#[test]
fn localized_balance_vanishes_on_stationary_state() {
    let g = RadialGrid::default_for(4).unwrap();
    let cfg = FlowConfig { z_phase: PI / 6.0, dt: 1e-3, t_end: 0.05, ..Default::default() };
    let ev = run(bubble(0.0, 1.0, &g), cfg, EvolveOptions { snapshot_every: Some(5), ..Default::default() });
    for radius in [1.0, 10.0] {
        let b = localized_energy_balance(&ev.record, &PhiSpec::Exterior { radius }).unwrap();
        assert!(b.residual.abs() < 1e-6, "R={radius}: {b:?}");
    }
}

#[test]
fn localized_balance_with_moving_cutoff() {
    let g = RadialGrid::default_for(4).unwrap();
    let cfg = FlowConfig { z_phase: 0.4, dt: 1e-4, t_end: 0.1, ..Default::default() };
    let ev = run(smooth_data(&g), cfg, EvolveOptions { snapshot_every: Some(2), ..Default::default() });
    let b = localized_energy_balance(&ev.record, &PhiSpec::MovingExterior { radius: 1.0, rate: 2.0 }).unwrap();
    assert!(b.term5 != 0.0);
    assert!(b.relative_residual < 1e-3, "{b:?}");
}

#[test]
fn supercritical_bubble_hits_a_stop_condition() {
    let g = RadialGrid::default_for(4).unwrap();
    let u0 = bubble(0.0, 1.0, &g).scale(C64::new(1.1, 0.0));
    let cfg = FlowConfig { z_phase: 0.0, dt: 1e-3, t_end: 20.0, adapt: true, ..Default::default() };
    let ev = run(u0, cfg, EvolveOptions::default());
    let Outcome::BlowUp(b) = &ev.outcome else { panic!("expected blow-up") };
    assert!(b.last_good.u.is_finite());
    assert!(smallest_scale(&b.last_good.u).unwrap() < 1.0);
}

#[test]
fn subcritical_bubble_decays() {
    let g = RadialGrid::default_for(4).unwrap();
    let u0 = bubble(0.0, 1.0, &g).scale(C64::new(0.9, 0.0));
    let cfg = FlowConfig { z_phase: 0.0, dt: 1e-2, t_end: 10.0, ..Default::default() };
    let ev = run(u0, cfg, EvolveOptions::default());
    assert!(!ev.blew_up());
    assert!(ev.state.u.linf() < 0.5, "{}", ev.state.u.linf());
}
