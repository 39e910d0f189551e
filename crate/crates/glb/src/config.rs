//! Experiment configuration (TOML, or JSON for `.json` files).

use crate::error::{HarnessError, Result};
use glb_core::grid::{make_grid, DEFAULT_NODES, DEFAULT_R_MAX, DEFAULT_R_MIN};
use glb_core::{FlowConfig, RadialGrid, Scheme, Stretch};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Simulate,
    Decompose,
    Spectrum,
    Verify,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Decompose => "decompose",
            Kind::Spectrum => "spectrum",
            Kind::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StretchSpec {
    Geometric,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dim: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
    pub stretch: StretchSpec,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dim: 4,
            r_min: DEFAULT_R_MIN,
            r_max: DEFAULT_R_MAX,
            nodes: DEFAULT_NODES,
            stretch: StretchSpec::Geometric,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<RadialGrid>> {
        let stretch = match self.stretch {
            StretchSpec::Geometric => Stretch::Geometric,
            StretchSpec::Uniform => Stretch::Uniform,
        };
        Ok(make_grid(self.dim, self.r_min, self.r_max, self.nodes, stretch)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeSpec {
    CnAb2,
    BeFe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSpec {
    /// Phase angle of `z`, in `(-π/2, π/2)`.
    pub z_phase: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: SchemeSpec,
    pub adapt: bool,
    pub dt_safety: f64,
    pub nonlinear: bool,
    pub linf_ceiling: f64,
    pub min_scale_factor: f64,
}

impl Default for FlowSpec {
    fn default() -> Self {
        let f = FlowConfig::default();
        FlowSpec {
            z_phase: f.z_phase,
            dt: f.dt,
            t_end: f.t_end,
            scheme: SchemeSpec::CnAb2,
            adapt: f.adapt,
            dt_safety: f.dt_safety,
            nonlinear: f.nonlinear,
            linf_ceiling: 1e6,
            min_scale_factor: 4.0,
        }
    }
}

impl FlowSpec {
    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            z_phase: self.z_phase,
            dt: self.dt,
            t_end: self.t_end,
            scheme: match self.scheme {
                SchemeSpec::CnAb2 => Scheme::ImexCnAb2,
                SchemeSpec::BeFe => Scheme::ImexBeFe,
            },
            adapt: self.adapt,
            dt_safety: self.dt_safety,
            nonlinear: self.nonlinear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Sum of bubbles `e^{iθ_j} W_{λ_j}`.
    Bubbles { theta: Vec<f64>, lambda: Vec<f64> },
    /// `(1 + delta) e^{iθ} W_λ`.
    ScaledGroundState {
        delta: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default = "one")]
        lambda: f64,
    },
    /// `amplitude · exp(-r²/σ²)`.
    Gaussian { sigma: f64, amplitude: f64 },
    /// A snapshot CSV on the same grid.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::ScaledGroundState { delta: 0.0, theta: 0.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModulationSpec {
    /// Number of bubbles to fit; `0` disables tracking in `simulate`.
    pub bubbles: usize,
    /// Top scale `√t` (global) unless a blow-up time is given.
    pub t_plus: Option<f64>,
    /// Time used for the top scale in `decompose`; `None` means no top scale.
    pub t: Option<f64>,
}

impl Default for ModulationSpec {
    fn default() -> Self {
        ModulationSpec { bubbles: 1, t_plus: None, t: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffSpec {
    Constant { value: f64 },
    Interior { radius: f64 },
    Exterior { radius: f64 },
    MovingExterior { radius: f64, rate: f64 },
}

impl CutoffSpec {
    pub fn phi(self) -> glb_core::PhiSpec {
        use glb_core::PhiSpec;
        match self {
            CutoffSpec::Constant { value } => PhiSpec::Constant(value),
            CutoffSpec::Interior { radius } => PhiSpec::Interior { radius },
            CutoffSpec::Exterior { radius } => PhiSpec::Exterior { radius },
            CutoffSpec::MovingExterior { radius, rate } => PhiSpec::MovingExterior { radius, rate },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSpec {
    /// Lowest eigenpairs per operator.
    pub count: usize,
    pub y1y2: bool,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        SpectrumSpec { count: 3, y1y2: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Random fields per randomized check.
    pub trials: usize,
    /// Planted fields for the modulation recovery check.
    pub planted: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { trials: 100, planted: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Taken from the subcommand when omitted.
    #[serde(default)]
    pub kind: Option<Kind>,
    #[serde(default)]
    pub seed: u64,
    /// Observer cadence in steps.
    #[serde(default = "default_cadence")]
    pub cadence: u64,
    /// Snapshot cadence in steps; defaults to `10 · cadence`.
    #[serde(default)]
    pub snapshot_cadence: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub modulation: ModulationSpec,
    #[serde(default)]
    pub balance: Vec<CutoffSpec>,
    #[serde(default)]
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub verify: VerifySpec,
}

fn default_cadence() -> u64 {
    100
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            seed: 0,
            cadence: default_cadence(),
            snapshot_cadence: None,
            out: None,
            grid: GridSpec::default(),
            flow: FlowSpec::default(),
            initial: InitialData::default(),
            modulation: ModulationSpec::default(),
            balance: Vec::new(),
            spectrum: SpectrumSpec::default(),
            verify: VerifySpec::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse by extension; relative `file` paths resolve against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Input { path: path.to_path_buf(), msg: e.to_string() })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json { Self::from_json(&text)? } else { Self::from_toml(&text)? };
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Validation(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Validation(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let InitialData::File { path } = &mut self.initial {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn snapshot_every(&self) -> u64 {
        self.snapshot_cadence.unwrap_or(self.cadence.saturating_mul(10))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Validation(m.to_string()));
        if self.cadence < 1 {
            return bad("cadence must be >= 1");
        }
        if self.snapshot_cadence == Some(0) {
            return bad("snapshot_cadence must be >= 1");
        }
        self.grid.build()?;
        self.flow.flow_config().validate()?;
        if !(self.flow.linf_ceiling > 0.0) || !(self.flow.min_scale_factor >= 0.0) {
            return bad("linf_ceiling must be > 0 and min_scale_factor >= 0");
        }
        match &self.initial {
            InitialData::Bubbles { theta, lambda } => {
                if theta.len() != lambda.len() {
                    return bad("bubbles: theta and lambda lengths differ");
                }
                if lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) || theta.iter().any(|t| !t.is_finite()) {
                    return bad("bubbles: scales must be positive and phases finite");
                }
            }
            InitialData::ScaledGroundState { delta, theta, lambda } => {
                if !(delta.is_finite() && theta.is_finite() && *lambda > 0.0 && lambda.is_finite()) {
                    return bad("scaled_ground_state: delta, theta finite and lambda > 0");
                }
            }
            InitialData::Gaussian { sigma, amplitude } => {
                if !(*sigma > 0.0 && sigma.is_finite() && amplitude.is_finite()) {
                    return bad("gaussian: sigma > 0 and finite amplitude");
                }
            }
            InitialData::File { path } => {
                if !path.is_file() {
                    return Err(HarnessError::Input { path: path.clone(), msg: "initial-data file not found".into() });
                }
            }
        }
        if let Some(tp) = self.modulation.t_plus {
            if !(tp > 0.0 && tp.is_finite()) {
                return bad("modulation.t_plus must be > 0");
            }
        }
        for c in &self.balance {
            let ok = match *c {
                CutoffSpec::Constant { value } => value.is_finite() && value >= 0.0,
                CutoffSpec::Interior { radius } | CutoffSpec::Exterior { radius } => radius > 0.0 && radius.is_finite(),
                CutoffSpec::MovingExterior { radius, rate } => radius > 0.0 && radius.is_finite() && rate.is_finite(),
            };
            if !ok {
                return bad("balance cutoffs need a finite radius > 0");
            }
        }
        if self.spectrum.count == 0 {
            return bad("spectrum.count must be >= 1");
        }
        if self.verify.trials == 0 {
            return bad("verify.trials must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_uses_defaults() {
        let c = ExperimentConfig::from_toml("kind = \"simulate\"\n").unwrap();
        assert_eq!(c.kind, Some(Kind::Simulate));
        assert_eq!(c.grid, GridSpec::default());
        assert_eq!(c.cadence, 100);
        assert_eq!(c.snapshot_every(), 1000);
        c.validate().unwrap();
    }

    #[test]
    fn json_and_toml_agree() {
        let t = r#"
            seed = 3
            [grid]
            dim = 5
            nodes = 512
            [flow]
            z_phase = 0.5
            t_end = 0.1
            [initial]
            type = "bubbles"
            theta = [0.0, 1.0]
            lambda = [0.1, 1.0]
        "#;
        let j = r#"{"seed": 3, "grid": {"dim": 5, "nodes": 512}, "flow": {"z_phase": 0.5, "t_end": 0.1},
                    "initial": {"type": "bubbles", "theta": [0.0, 1.0], "lambda": [0.1, 1.0]}}"#;
        assert_eq!(ExperimentConfig::from_toml(t).unwrap(), ExperimentConfig::from_json(j).unwrap());
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "cadence = 0",
            "[flow]\nz_phase = 2.0",
            "[flow]\ndt = -1.0",
            "[grid]\nr_min = 2.0\nr_max = 1.0",
            "[initial]\ntype = \"gaussian\"\nsigma = 0.0\namplitude = 1.0",
            "[initial]\ntype = \"file\"\npath = \"/definitely/not/here.csv\"",
        ] {
            let c = ExperimentConfig::from_toml(text).unwrap();
            let e = c.validate().unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[grid]\nnodez = 3").is_err());
    }
}
