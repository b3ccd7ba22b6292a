//! Strict TOML configuration.
//!
//! Unknown keys are rejected everywhere. Intensity expressions keep their
//! source span so that parse errors point at a file and line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::experiments::{Scenario, TransitionRef};
use crate::intensity::{IntensityExpr, IntensityModel, ModelError, ModelKind};
use crate::oe::{GridSpec, IntervalScale, Method, OeError, TimeDurationGrid, TimeGrid};
use crate::regularized::TreeParams;
use crate::sim::{CensoringSpec, SimConfig, DEFAULT_WINDOW};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Syntax { path: PathBuf, line: usize, message: String },
    #[error("{path}:{line}: in expression {text:?}: {message}")]
    Expression { path: PathBuf, line: usize, text: String, message: String },
    #[error("{path}: missing section [{section}]")]
    MissingSection { path: PathBuf, section: &'static str },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSection {
    pub from: String,
    pub to: String,
    pub rate: Spanned<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub states: Vec<String>,
    #[serde(default)]
    pub absorbing: Vec<String>,
    #[serde(default)]
    pub transition: Vec<TransitionSection>,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n: usize,
    pub horizon: f64,
    pub initial_state: String,
    pub master_seed: u64,
    #[serde(default = "default_window")]
    pub window: f64,
    pub censoring: CensoringSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DurationSection {
    pub u_max: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub t0: f64,
    pub t_max: f64,
    pub bins: usize,
    pub duration: Option<DurationSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    #[serde(default = "TreeSection::default_depth")]
    pub max_depth: usize,
    #[serde(default = "TreeSection::default_min_exposure")]
    pub min_exposure: f64,
    #[serde(default)]
    pub min_gain: f64,
}

impl TreeSection {
    fn default_depth() -> usize {
        TreeParams::default().max_depth
    }

    fn default_min_exposure() -> f64 {
        TreeParams::default().min_exposure
    }
}

impl Default for TreeSection {
    fn default() -> Self {
        let p = TreeParams::default();
        TreeSection { max_depth: p.max_depth, min_exposure: p.min_exposure, min_gain: p.min_gain }
    }
}

impl From<&TreeSection> for TreeParams {
    fn from(t: &TreeSection) -> Self {
        TreeParams { max_depth: t.max_depth, min_exposure: t.min_exposure, min_gain: t.min_gain }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSection {
    pub transition: String,
    pub d: f64,
}

fn default_level() -> f64 {
    0.95
}

fn default_method() -> Method {
    Method::Oe
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub interval_scale: IntervalScale,
    /// Transition for the regularised fits, as `from->to`.
    pub transition: Option<String>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub tree: Option<TreeSection>,
    pub slices: Option<Vec<SliceSection>>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            method: Method::Oe,
            level: default_level(),
            interval_scale: IntervalScale::Raw,
            transition: None,
            lambda: None,
            lambdas: None,
            tol: None,
            tree: None,
            slices: None,
        }
    }
}

/// Overrides for the Monte-Carlo studies; unset keys take the study's
/// defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: Option<String>,
    pub transition: Option<String>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub meshes: Option<Vec<usize>>,
    pub t0: Option<f64>,
    pub t_max: Option<f64>,
    pub s: Option<f64>,
    pub t: Option<f64>,
    pub u: Option<f64>,
    pub m: Option<usize>,
    pub delta: Option<f64>,
    pub delta_u: Option<f64>,
    pub mesh: Option<f64>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub model: Option<ModelSection>,
    pub simulation: Option<SimulationSection>,
    pub grid: Option<GridSection>,
    pub estimation: Option<EstimationSection>,
    pub experiment: Option<ExperimentSection>,
    #[serde(skip)]
    pub path: PathBuf,
    #[serde(skip)]
    pub source: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Splits `from->to`.
pub fn parse_transition(text: &str) -> Option<TransitionRef> {
    let (a, b) = text.split_once("->")?;
    let (a, b) = (a.trim(), b.trim());
    (!a.is_empty() && !b.is_empty()).then(|| TransitionRef::new(a, b))
}

fn label_ok(s: &str) -> bool {
    !s.is_empty() && s != "CENS" && !s.contains(['"', ',', '\n', '\r']) && !s.contains("->")
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<AppConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Parses and validates `text`; `path` is used for messages only.
    pub fn parse(text: &str, path: &Path) -> Result<AppConfig, ConfigError> {
        let mut cfg: AppConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.path = path.to_path_buf();
        cfg.source = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    fn invalid(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid { path: self.path.clone(), message: message.into() }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(m) = &self.model {
            for s in &m.states {
                if !label_ok(s) {
                    return Err(self.invalid(format!("state label {s:?} is not allowed")));
                }
            }
            let model = self.model()?;
            if let Some(sim) = &self.simulation {
                self.sim_config_for(&model, sim)?.validate().map_err(|e| self.invalid(e.to_string()))?;
            }
        }
        if self.grid.is_some() {
            self.grid_spec()?;
        }
        let est = self.estimation();
        if !(est.level > 0.0 && est.level < 1.0) {
            return Err(self.invalid(format!("estimation.level must lie in (0, 1), got {}", est.level)));
        }
        if let Some(tr) = &est.transition {
            parse_transition(tr).ok_or_else(|| self.invalid(format!("bad transition {tr:?}, expected from->to")))?;
        }
        for l in est.lambda.iter().chain(est.lambdas.iter().flatten()) {
            if !(l.is_finite() && *l >= 0.0) {
                return Err(self.invalid(format!("penalty weights must be finite and >= 0, got {l}")));
            }
        }
        if let Some(tr) = &self.experiment.as_ref().and_then(|e| e.transition.clone()) {
            parse_transition(tr).ok_or_else(|| self.invalid(format!("bad transition {tr:?}, expected from->to")))?;
        }
        Ok(())
    }

    /// Builds the intensity model, mapping expression errors to lines.
    pub fn model(&self) -> Result<IntensityModel, ConfigError> {
        let m = self
            .model
            .as_ref()
            .ok_or(ConfigError::MissingSection { path: self.path.clone(), section: "model" })?;
        let mut transitions = Vec::with_capacity(m.transition.len());
        for t in &m.transition {
            let line = line_of(&self.source, t.rate.span().start);
            let expr = IntensityExpr::parse(t.rate.get_ref()).map_err(|e| ConfigError::Expression {
                path: self.path.clone(),
                line,
                text: t.rate.get_ref().clone(),
                message: e.to_string(),
            })?;
            transitions.push((t.from.clone(), t.to.clone(), expr));
        }
        let model = IntensityModel::new(m.kind, &m.states, &m.absorbing, transitions).map_err(|e: ModelError| self.invalid(e.to_string()))?;
        if let Some(sim) = &self.simulation {
            model.validate(sim.horizon).map_err(|e| self.invalid(e.to_string()))?;
        }
        Ok(model)
    }

    fn sim_config_for(&self, model: &IntensityModel, sim: &SimulationSection) -> Result<SimConfig, ConfigError> {
        let initial = model
            .state(&sim.initial_state)
            .ok_or_else(|| self.invalid(format!("initial_state {:?} is not a declared state", sim.initial_state)))?;
        Ok(SimConfig {
            model: model.clone(),
            initial_state: initial,
            n: sim.n,
            horizon: sim.horizon,
            censoring: sim.censoring,
            master_seed: sim.master_seed,
            window: sim.window,
        })
    }

    pub fn simulation(&self) -> Result<&SimulationSection, ConfigError> {
        self.simulation
            .as_ref()
            .ok_or(ConfigError::MissingSection { path: self.path.clone(), section: "simulation" })
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let model = self.model()?;
        self.sim_config_for(&model, self.simulation()?)
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let c = self.sim_config()?;
        Ok(Scenario {
            model: c.model,
            initial_state: c.initial_state,
            horizon: c.horizon,
            censoring: c.censoring,
            window: c.window,
        })
    }

    pub fn master_seed(&self) -> Option<u64> {
        self.simulation.as_ref().map(|s| s.master_seed)
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let g = self.grid.as_ref().ok_or(ConfigError::MissingSection { path: self.path.clone(), section: "grid" })?;
        let map = |e: OeError| self.invalid(e.to_string());
        let time = TimeGrid::new(g.t0, g.t_max, g.bins).map_err(map)?;
        Ok(match &g.duration {
            None => GridSpec::Time(time),
            Some(d) => GridSpec::TimeDuration(TimeDurationGrid::new(time, TimeGrid::new(0.0, d.u_max, d.bins).map_err(map)?)),
        })
    }

    pub fn estimation(&self) -> EstimationSection {
        self.estimation.clone().unwrap_or_default()
    }

    pub fn experiment(&self) -> ExperimentSection {
        self.experiment.clone().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[model]
kind = "markov"
states = ["1", "2", "3"]
absorbing = ["3"]

[[model.transition]]
from = "1"
to = "2"
rate = "0.09 + 0.0018*t + 0.045*sin(t/2)"

[[model.transition]]
from = "2"
to = "3"
rate = "0.1"

[simulation]
n = 100
horizon = 40.0
initial_state = "1"
master_seed = 7

[simulation.censoring]
law = "uniform"
lo = 10.0
hi = 40.0

[grid]
t_max = 40.0
bins = 40
"#;

    fn parse(text: &str) -> Result<AppConfig, ConfigError> {
        AppConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn good_config_loads() {
        let cfg = parse(GOOD).unwrap();
        let sim = cfg.sim_config().unwrap();
        assert_eq!(sim.n, 100);
        assert_eq!(sim.window, DEFAULT_WINDOW);
        assert!(matches!(cfg.grid_spec().unwrap(), GridSpec::Time(_)));
        assert_eq!(cfg.estimation().level, 0.95);
    }

    #[test]
    fn missing_seed_names_the_key() {
        let text = GOOD.replace("master_seed = 7\n", "");
        let err = parse(&text).unwrap_err().to_string();
        assert!(err.contains("master_seed"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = GOOD.replace("bins = 40", "bins = 40\nbinz = 3");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { .. }));
        assert!(err.to_string().contains("binz"));
    }

    #[test]
    fn expression_errors_carry_the_line() {
        let text = GOOD.replace("rate = \"0.1\"", "rate = \"0.1 +\"");
        let err = parse(&text).unwrap_err();
        let ConfigError::Expression { line, .. } = err else { panic!("{err}") };
        assert_eq!(line, 15);
    }

    #[test]
    fn duration_in_markov_model_is_rejected() {
        let text = GOOD.replace("rate = \"0.1\"", "rate = \"0.1 + 0.01*u\"");
        assert!(matches!(parse(&text), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn transition_strings() {
        assert_eq!(parse_transition("a -> b"), Some(TransitionRef::new("a", "b")));
        assert_eq!(parse_transition("ab"), None);
        assert_eq!(parse_transition("->b"), None);
    }
}
