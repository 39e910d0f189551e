//! Experiment orchestration: `simulate`, `decompose`, `spectrum` and resume.

use crate::config::{ExperimentConfig, InitialData, Kind, StretchSpec};
use crate::error::{HarnessError, Result};
use crate::io::{self, num, CsvSink, TRAJECTORY_HEADER};
use crate::manifest::{output_entry, GridRecord, Manifest, ResumeState, MANIFEST_FILE};
use crate::verify;
use glb_core::dynamics::{evolve, Tick};
use glb_core::linearized::Y1Y2Status;
use glb_core::modulation::ModulationSeries;
use glb_core::*;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SNAPSHOT_INDEX: &str = "snapshots.csv";
pub const MODULATION_FILE: &str = "modulation.csv";
pub const BALANCE_FILE: &str = "balance.json";
pub const REPORT_FILE: &str = "report.json";
const SNAPSHOT_DIR: &str = "snapshots";
const STATE_DIR: &str = "state";

/// What a finished command leaves behind.
#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub exit_code: i32,
}

impl RunOutcome {
    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join(MANIFEST_FILE)
    }
}

/// Run `kind` with `cfg`, writing into `out` (or the configured directory).
pub fn run(cfg: ExperimentConfig, kind: Kind, out: Option<PathBuf>) -> Result<RunOutcome> {
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(HarnessError::Validation(format!(
                "config is for `{}` but `{}` was requested",
                k.name(),
                kind.name()
            )));
        }
    }
    cfg.validate()?;
    let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("glb-out"));
    std::fs::create_dir_all(&dir)?;
    let started = Instant::now();
    let mut cfg = cfg;
    cfg.kind = Some(kind);
    info!("{} -> {}", kind.name(), dir.display());
    match kind {
        Kind::Simulate => simulate(cfg, &dir, started),
        Kind::Decompose => decompose(cfg, &dir, started),
        Kind::Spectrum => spectrum(cfg, &dir, started),
        Kind::Verify => verify::run_verify(cfg, &dir, started),
    }
}

pub fn grid_record(cfg: &ExperimentConfig) -> GridRecord {
    GridRecord {
        dim: cfg.grid.dim,
        r_min: cfg.grid.r_min,
        r_max: cfg.grid.r_max,
        nodes: cfg.grid.nodes,
        stretch: match cfg.grid.stretch {
            StretchSpec::Geometric => "geometric".into(),
            StretchSpec::Uniform => "uniform".into(),
        },
    }
}

pub fn initial_field(cfg: &ExperimentConfig, grid: &Arc<RadialGrid>) -> Result<RadialField> {
    Ok(match &cfg.initial {
        InitialData::Bubbles { theta, lambda } => {
            let p = BubbleParams::new(theta.clone(), lambda.clone())?;
            multi_bubble(&p, grid)
        }
        InitialData::ScaledGroundState { delta, theta, lambda } => {
            bubble(*theta, *lambda, grid).scale(C64::new(1.0 + delta, 0.0))
        }
        InitialData::Gaussian { sigma, amplitude } => {
            RadialField::from_real_fn(grid, |r| amplitude * (-(r * r) / (sigma * sigma)).exp())
        }
        InitialData::File { path } => io::read_snapshot(path, grid)?,
    })
}

pub(crate) fn base_manifest(cfg: &ExperimentConfig, started: Instant) -> Manifest {
    Manifest {
        kind: cfg.kind.map(Kind::name).unwrap_or("").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: glb_core_version().to_string(),
        config: cfg.clone(),
        grid: grid_record(cfg),
        wall_time_s: started.elapsed().as_secs_f64(),
        blowup: false,
        blowup_reason: None,
        blowup_time: None,
        resume: None,
        outputs: Vec::new(),
    }
}

fn glb_core_version() -> &'static str {
    // the two crates are versioned together
    env!("CARGO_PKG_VERSION")
}

pub(crate) fn finish(
    dir: &Path,
    mut manifest: Manifest,
    files: &[String],
    started: Instant,
    exit_code: i32,
) -> Result<RunOutcome> {
    let mut files: Vec<String> = files.to_vec();
    files.sort();
    files.dedup();
    manifest.outputs = files.iter().map(|f| output_entry(dir, f)).collect::<Result<_>>()?;
    manifest.wall_time_s += started.elapsed().as_secs_f64();
    manifest.save(&dir.join(MANIFEST_FILE))?;
    Ok(RunOutcome { out_dir: dir.to_path_buf(), manifest, exit_code })
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

fn evolve_options(cfg: &ExperimentConfig, record_initial: bool) -> EvolveOptions {
    EvolveOptions {
        observe_every: cfg.cadence,
        snapshot_every: Some(cfg.snapshot_every()),
        linf_ceiling: cfg.flow.linf_ceiling,
        min_scale_factor: cfg.flow.min_scale_factor,
        record_initial,
    }
}

/// Evolve from `state0`, streaming ticks into `sink` and snapshots into the
/// snapshot directory starting at number `first_snapshot`.
#[allow(clippy::too_many_arguments)]
fn drive(
    cfg: &ExperimentConfig,
    dir: &Path,
    grid: &Arc<RadialGrid>,
    state0: FlowState,
    sink: &mut CsvSink,
    index: &mut CsvSink,
    first_snapshot: usize,
    record_initial: bool,
) -> Result<(Evolution, usize)> {
    let flow = Flow::new(grid, cfg.flow.flow_config())?;
    let mut failure: Option<HarnessError> = None;
    let mut observer = |_: &FlowState, tick: &Tick| {
        if failure.is_none() {
            if let Err(e) = sink.row(&io::tick_row(tick)) {
                failure = Some(e);
            }
        }
    };
    let mut ev = evolve(&flow, state0, &evolve_options(cfg, record_initial), &mut observer);
    if let Some(e) = failure {
        return Err(e);
    }
    // keep the last good state when the run stopped between snapshots
    if ev.blew_up() && ev.record.snapshots.last().map(|s| s.step) != Some(ev.state.step_count) {
        ev.record.snapshots.push(Snapshot { t: ev.state.t, step: ev.state.step_count, u: ev.state.u.clone() });
    }
    std::fs::create_dir_all(dir.join(SNAPSHOT_DIR))?;
    let mut count = first_snapshot;
    for s in &ev.record.snapshots {
        let name = rel(&[SNAPSHOT_DIR, &format!("snap_{count:06}.csv")]);
        io::write_snapshot(&dir.join(&name), &s.u)?;
        index.row(&[num(s.t), s.step.to_string(), name])?;
        count += 1;
    }
    Ok((ev, count))
}

fn persist_state(
    dir: &Path,
    state: &FlowState,
    snapshots: usize,
    completed: bool,
) -> Result<(ResumeState, Vec<String>)> {
    std::fs::create_dir_all(dir.join(STATE_DIR))?;
    let current = rel(&[STATE_DIR, "current.csv"]);
    io::write_snapshot(&dir.join(&current), &state.u)?;
    let mut files = vec![current.clone()];
    let (previous, dt_prev) = match &state.prev {
        Some(p) => {
            let name = rel(&[STATE_DIR, "previous.csv"]);
            let u = RadialField::new(state.u.grid().clone(), p.u.clone())?;
            io::write_snapshot(&dir.join(&name), &u)?;
            files.push(name.clone());
            (Some(name), Some(p.dt))
        }
        None => {
            let stale = dir.join(STATE_DIR).join("previous.csv");
            if stale.exists() {
                std::fs::remove_file(stale)?;
            }
            (None, None)
        }
    };
    let rs = ResumeState {
        t: state.t,
        step: state.step_count,
        dissipation_accum: state.dissipation_accum,
        last_dtu_l2: state.last_dtu_l2,
        current,
        previous,
        dt_prev,
        snapshots,
        completed,
    };
    Ok((rs, files))
}

fn done(cfg: &ExperimentConfig, t: f64) -> bool {
    cfg.flow.t_end - t <= 1e-6 * cfg.flow.dt
}

fn simulate(cfg: ExperimentConfig, dir: &Path, started: Instant) -> Result<RunOutcome> {
    let grid = cfg.grid.build()?;
    let u0 = initial_field(&cfg, &grid)?;
    let mut sink = CsvSink::create(&dir.join(TRAJECTORY_FILE), TRAJECTORY_HEADER)?;
    let mut index = CsvSink::create(&dir.join(SNAPSHOT_INDEX), "t,step,path")?;
    let (ev, count) = drive(&cfg, dir, &grid, FlowState::new(u0), &mut sink, &mut index, 0, true)?;
    sink.finish()?;
    index.finish()?;
    let manifest = base_manifest(&cfg, started);
    conclude(cfg, dir, manifest, ev, count, started)
}

/// Shared tail of `simulate` and `resume`: state, post-processing, manifest.
fn conclude(
    cfg: ExperimentConfig,
    dir: &Path,
    mut manifest: Manifest,
    ev: Evolution,
    count: usize,
    started: Instant,
) -> Result<RunOutcome> {
    let mut files = vec![TRAJECTORY_FILE.to_string(), SNAPSHOT_INDEX.to_string()];
    files.extend((0..count).map(|k| rel(&[SNAPSHOT_DIR, &format!("snap_{k:06}.csv")])));
    if let Outcome::BlowUp(b) = &ev.outcome {
        warn!("blow-up stop at t = {} ({:?})", b.t, b.reason);
        manifest.blowup = true;
        manifest.blowup_reason = Some(format!("{:?}", b.reason));
        manifest.blowup_time = Some(b.t);
    }
    let completed = manifest.blowup || done(&cfg, ev.state.t);
    let (rs, state_files) = persist_state(dir, &ev.state, count, completed)?;
    files.extend(state_files);
    manifest.resume = Some(rs);
    manifest.config = cfg.clone();
    files.extend(postprocess(&cfg, dir, &manifest)?);
    finish(dir, manifest, &files, started, 0)
}

/// Continue the simulation recorded in `manifest_path`. A config, when
/// given, may change `t_end` but must describe the same grid and flow.
pub fn resume(manifest_path: &Path, cfg_override: Option<ExperimentConfig>) -> Result<RunOutcome> {
    let started = Instant::now();
    let old = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    if old.kind != Kind::Simulate.name() {
        return Err(HarnessError::Validation(format!("cannot resume a `{}` run", old.kind)));
    }
    let mut cfg = match cfg_override {
        Some(c) => {
            if let Some(k) = c.kind {
                if k != Kind::Simulate {
                    return Err(HarnessError::Validation("resume needs a simulate config".into()));
                }
            }
            c
        }
        None => old.config.clone(),
    };
    cfg.kind = Some(Kind::Simulate);
    cfg.validate()?;
    if cfg.grid != old.config.grid || grid_record(&cfg) != old.grid {
        return Err(HarnessError::Validation("grid differs from the one recorded in the manifest".into()));
    }
    let (a, b) = (&cfg.flow, &old.config.flow);
    if a.z_phase != b.z_phase || a.scheme != b.scheme || a.nonlinear != b.nonlinear {
        return Err(HarnessError::Validation("z phase, scheme and nonlinearity must match the original run".into()));
    }
    let rs = old.resume.clone().ok_or_else(|| HarnessError::Input {
        path: manifest_path.to_path_buf(),
        msg: "manifest has no resume state".into(),
    })?;
    let grid = cfg.grid.build()?;
    let current = io::read_snapshot(&dir.join(&rs.current), &grid)?;
    let prev = match (&rs.previous, rs.dt_prev) {
        (Some(p), Some(dt)) => Some((io::read_snapshot(&dir.join(p), &grid)?, dt)),
        (None, _) => None,
        (Some(_), None) => {
            return Err(HarnessError::Input {
                path: manifest_path.to_path_buf(),
                msg: "previous field without its step".into(),
            })
        }
    };
    if old.blowup || done(&cfg, rs.t) {
        info!("nothing to do: run already at t = {}", rs.t);
        return Ok(RunOutcome { out_dir: dir, manifest: old, exit_code: 0 });
    }
    let mismatched = old.verify_outputs(&dir);
    if !mismatched.is_empty() {
        warn!("outputs changed since the manifest was written: {mismatched:?}");
    }
    let state =
        FlowState::restore(rs.t, current, rs.step, rs.dissipation_accum, rs.last_dtu_l2, prev, cfg.flow.nonlinear)?;
    let mut sink = CsvSink::append(&dir.join(TRAJECTORY_FILE))?;
    let mut index = CsvSink::append(&dir.join(SNAPSHOT_INDEX))?;
    let (ev, count) = drive(&cfg, &dir, &grid, state, &mut sink, &mut index, rs.snapshots, false)?;
    sink.finish()?;
    index.finish()?;
    let mut manifest = old;
    manifest.blowup = false;
    manifest.blowup_reason = None;
    manifest.blowup_time = None;
    conclude(cfg, &dir, manifest, ev, count, started)
}

/// Read back a numeric CSV (header skipped).
pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Input { path: path.to_path_buf(), msg: e.to_string() })
        })
        .collect()
}

fn load_snapshots(dir: &Path, grid: &Arc<RadialGrid>) -> Result<Vec<Snapshot>> {
    let text = std::fs::read_to_string(dir.join(SNAPSHOT_INDEX))?;
    let mut out: Vec<Snapshot> = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = |m: &str| HarnessError::Input { path: dir.join(SNAPSHOT_INDEX), msg: m.to_string() };
        if cols.len() != 3 {
            return Err(bad("expected t,step,path"));
        }
        let t: f64 = cols[0].parse().map_err(|_| bad("bad time"))?;
        let step: u64 = cols[1].parse().map_err(|_| bad("bad step"))?;
        // a split run repeats the state at the split point
        if out.last().is_some_and(|s| s.step == step) {
            continue;
        }
        let u = io::read_snapshot(&dir.join(cols[2]), grid)?;
        out.push(Snapshot { t, step, u });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Trend {
    pub first: f64,
    pub last: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of consecutive pairs that increase.
    pub increasing_fraction: f64,
    pub samples: usize,
}

impl Trend {
    pub fn of(v: &[f64]) -> Option<Trend> {
        if v.is_empty() {
            return None;
        }
        let pairs = v.len().saturating_sub(1).max(1);
        let up = v.windows(2).filter(|p| p[1] > p[0]).count();
        Some(Trend {
            first: v[0],
            last: v[v.len() - 1],
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            increasing_fraction: up as f64 / pairs as f64,
            samples: v.len(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulationReport {
    pub blowup: bool,
    pub t_stop: f64,
    /// `max |E(t) - E(0) + Re z · dissipation(t)| / |E(0)|` over the ticks.
    pub energy_ledger_relative: f64,
    pub linf: Option<Trend>,
    /// Smallest fitted scale per snapshot, up to fit loss.
    pub lambda_min: Option<Trend>,
    pub d: Option<Trend>,
    /// Time of the last successful fit.
    pub tracked_until: Option<f64>,
    pub fit_lost_at: Option<f64>,
    /// Largest `|λ'| λ / d` seen, per bubble.
    pub lambda_rate_ratio_max: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct BalanceJson {
    term1: f64,
    term2: f64,
    term3: f64,
    term4: f64,
    term5: f64,
    lhs: f64,
    rhs: f64,
    residual: f64,
    relative_residual: f64,
    phi_spec: String,
    t1: f64,
    t2: f64,
}

impl From<&BalanceReport> for BalanceJson {
    fn from(b: &BalanceReport) -> Self {
        BalanceJson {
            term1: b.term1,
            term2: b.term2,
            term3: b.term3,
            term4: b.term4,
            term5: b.term5,
            lhs: b.lhs,
            rhs: b.rhs,
            residual: b.residual,
            relative_residual: b.relative_residual,
            phi_spec: b.phi_spec.clone(),
            t1: b.t1,
            t2: b.t2,
        }
    }
}

/// Modulation CSV, balance JSON and the trend report, recomputed from the
/// files on disk so a resumed run reports on the whole trajectory.
fn postprocess(cfg: &ExperimentConfig, dir: &Path, manifest: &Manifest) -> Result<Vec<String>> {
    let grid = cfg.grid.build()?;
    let mut files = Vec::new();
    let rows = read_table(&dir.join(TRAJECTORY_FILE))?;
    let mut traj = TrajectoryRecord::new(grid.dim(), cfg.flow.z_phase);
    traj.snapshots = load_snapshots(dir, &grid)?;

    let series: Option<ModulationSeries> = if cfg.modulation.bubbles > 0 && !traj.snapshots.is_empty() {
        let t_plus = cfg.modulation.t_plus.or(manifest.blowup_time);
        let modulator = Modulator::new(&grid)?;
        let s = modulator.track_modulation(&traj, cfg.modulation.bubbles, t_plus);
        let mut sink = CsvSink::create(&dir.join(MODULATION_FILE), &io::modulation_header(cfg.modulation.bubbles))?;
        for sample in &s.samples {
            sink.row(&io::modulation_row(sample))?;
        }
        sink.finish()?;
        files.push(MODULATION_FILE.to_string());
        Some(s)
    } else {
        None
    };

    if !cfg.balance.is_empty() && traj.snapshots.len() >= 2 {
        let reports: Vec<BalanceJson> = cfg
            .balance
            .iter()
            .map(|c| localized_energy_balance(&traj, &c.phi()).map(|b| BalanceJson::from(&b)))
            .collect::<std::result::Result<_, _>>()?;
        io::write_json(&dir.join(BALANCE_FILE), &reports)?;
        files.push(BALANCE_FILE.to_string());
    }

    let re_z = cfg.flow.z_phase.cos();
    let ledger = match rows.first() {
        Some(r0) => {
            let worst = rows.iter().map(|r| (r[1] - r0[1] + re_z * (r[6] - r0[6])).abs()).fold(0.0, f64::max);
            if r0[1] != 0.0 {
                worst / r0[1].abs()
            } else {
                worst
            }
        }
        None => 0.0,
    };
    let linf: Vec<f64> = rows.iter().map(|r| r[5]).collect();
    let (lambda_min, d, tracked_until, fit_lost_at, ratio_max) = match &series {
        Some(s) => {
            let ok = &s.samples;
            let lam: Vec<f64> =
                ok.iter().map(|x| x.fit.params.lambda().iter().copied().fold(f64::INFINITY, f64::min)).collect();
            let dv: Vec<f64> = ok.iter().map(|x| x.d).collect();
            let lost = s.failure_index.and_then(|i| traj.snapshots.get(i)).map(|x| x.t);
            let mut ratio = vec![0.0f64; s.n];
            for x in ok {
                for (m, v) in ratio.iter_mut().zip(&x.lambda_rate_ratio) {
                    if v.is_finite() {
                        *m = m.max(*v);
                    }
                }
            }
            (Trend::of(&lam), Trend::of(&dv), ok.last().map(|x| x.t), lost, ratio)
        }
        None => (None, None, None, None, Vec::new()),
    };
    let report = SimulationReport {
        blowup: manifest.blowup,
        t_stop: manifest.resume.as_ref().map(|r| r.t).unwrap_or(0.0),
        energy_ledger_relative: ledger,
        linf: Trend::of(&linf),
        lambda_min,
        d,
        tracked_until,
        fit_lost_at,
        lambda_rate_ratio_max: ratio_max,
    };
    io::write_json(&dir.join(REPORT_FILE), &report)?;
    files.push(REPORT_FILE.to_string());
    Ok(files)
}

#[derive(Debug, Serialize)]
struct ParamsJson {
    theta: Vec<f64>,
    lambda: Vec<f64>,
}

impl From<&BubbleParams> for ParamsJson {
    fn from(p: &BubbleParams) -> Self {
        ParamsJson { theta: p.theta().to_vec(), lambda: p.lambda().to_vec() }
    }
}

#[derive(Debug, Serialize)]
struct DecompositionJson {
    bubbles: usize,
    d: f64,
    d_starts: usize,
    d_argmin: ParamsJson,
    top_scale: Option<f64>,
    fit: Option<FitJson>,
    fit_error: Option<String>,
}

#[derive(Debug, Serialize)]
struct FitJson {
    params: ParamsJson,
    g_norm: f64,
    ratio_sum: f64,
    ortho_residuals: Vec<f64>,
    ortho_max_resid: f64,
    converged: bool,
    iterations: usize,
    unresolved: Vec<usize>,
}

fn decompose(cfg: ExperimentConfig, dir: &Path, started: Instant) -> Result<RunOutcome> {
    let n = cfg.modulation.bubbles;
    if n == 0 {
        return Err(HarnessError::Validation("decompose needs modulation.bubbles >= 1".into()));
    }
    let grid = cfg.grid.build()?;
    let u = initial_field(&cfg, &grid)?;
    let modulator = Modulator::new(&grid)?;
    let regime = match (cfg.modulation.t_plus, cfg.modulation.t) {
        (Some(t_plus), Some(t)) => Regime::Blowup { t_plus, t },
        (None, Some(t)) => Regime::Global { t },
        _ => Regime::Static,
    };
    let pv = modulator.proximity_d(&u, n, regime, None)?;
    let mut files = vec!["decomposition.json".to_string()];
    let (fit, fit_error) = match modulator.fit_decomposition(&u, n, &pv.argmin_params, None) {
        Ok(f) => {
            io::write_snapshot(&dir.join("residual.csv"), &f.g)?;
            files.push("residual.csv".into());
            let fj = FitJson {
                params: (&f.params).into(),
                g_norm: f.g_norm,
                ratio_sum: f.ratio_sum,
                ortho_residuals: f.ortho_residuals.clone(),
                ortho_max_resid: f.ortho_max(),
                converged: f.converged,
                iterations: f.iterations,
                unresolved: f.unresolved.clone(),
            };
            (Some(fj), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let out = DecompositionJson {
        bubbles: n,
        d: pv.value,
        d_starts: pv.starts,
        d_argmin: (&pv.argmin_params).into(),
        top_scale: pv.top_scale,
        fit,
        fit_error,
    };
    io::write_json(&dir.join("decomposition.json"), &out)?;
    finish(dir, base_manifest(&cfg, started), &files, started, 0)
}

#[derive(Debug, Serialize)]
pub struct SpectrumJson {
    pub operator: String,
    #[serde(rename = "D")]
    pub dim: usize,
    pub grid: GridRecord,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Y1Y2Json {
    status: &'static str,
    nu: Option<f64>,
    residuals: [f64; 2],
}

#[derive(Debug, Serialize)]
struct ProfilesJson {
    inner_support: (f64, f64),
    outer_support: (f64, f64),
    z2_support: (f64, f64),
    coef: f64,
    z1_lambda_w: f64,
    z1_y: f64,
    z2_w: f64,
    z1_w: f64,
    z2_lambda_w: f64,
}

fn spectrum(cfg: ExperimentConfig, dir: &Path, started: Instant) -> Result<RunOutcome> {
    let grid = cfg.grid.build()?;
    let count = cfg.spectrum.count;
    let pool = verify::thread_pool()?;
    let (plus, minus) = pool.install(|| {
        rayon::join(|| eigen_ground(&grid, LSign::Plus, count), || eigen_ground(&grid, LSign::Minus, count))
    });
    let mut files = Vec::new();
    for (name, tag, res) in [("L+", "plus", plus?), ("L-", "minus", minus?)] {
        let js = SpectrumJson {
            operator: name.into(),
            dim: grid.dim(),
            grid: grid_record(&cfg),
            eigenvalues: res.iter().map(|e| e.eigenvalue).collect(),
            residuals: res.iter().map(|e| e.residual).collect(),
        };
        let f = format!("spectrum_{tag}.json");
        io::write_json(&dir.join(&f), &js)?;
        files.push(f);
        for (k, e) in res.iter().enumerate() {
            let f = format!("eigen_{tag}_{k}.csv");
            io::write_snapshot(&dir.join(&f), &e.eigenfunction)?;
            files.push(f);
        }
    }
    if cfg.spectrum.y1y2 {
        let y = solve_y1y2(&grid)?;
        let js = Y1Y2Json {
            status: match y.status {
                Y1Y2Status::Primary => "primary",
                Y1Y2Status::Exploratory => "exploratory",
            },
            nu: y.nu,
            residuals: [y.residuals.0, y.residuals.1],
        };
        io::write_json(&dir.join("y1y2.json"), &js)?;
        files.push("y1y2.json".into());
        for (name, f) in [("y1.csv", &y.y1), ("y2.csv", &y.y2)] {
            if let Some(f) = f {
                io::write_snapshot(&dir.join(name), f)?;
                files.push(name.into());
            }
        }
    }
    match build_test_profiles(&grid) {
        Ok(p) => {
            let js = ProfilesJson {
                inner_support: p.inner_support,
                outer_support: p.outer_support,
                z2_support: p.z2_support,
                coef: p.coef,
                z1_lambda_w: p.certs.z1_lambda_w,
                z1_y: p.certs.z1_y,
                z2_w: p.certs.z2_w,
                z1_w: p.certs.z1_w,
                z2_lambda_w: p.certs.z2_lambda_w,
            };
            io::write_json(&dir.join("profiles.json"), &js)?;
            files.push("profiles.json".into());
        }
        Err(e) => warn!("test profiles unavailable: {e}"),
    }
    finish(dir, base_manifest(&cfg, started), &files, started, 0)
}
