//! Experiment configuration: a TOML file with one section per sweep
//! dimension, overridable from the command line.
//!
//! ```toml
//! experiment = "complete-sweep"
//! seed = 1
//! trials = 50
//! output = "results/complete.csv"
//!
//! [instance]
//! row_mode = "gaussian"       # gaussian | sign | coherent-basis
//! column_norms = "constant"   # constant | uniform | log-normal
//! noise_sigma = 0.0
//! square = true               # d follows n
//!
//! [grid]
//! n = [200, 500, 1000]
//! r = [10]
//! mu0 = [1.0]
//! m = [20, 30, 40, 50, 60]
//!
//! [algorithm]
//! tau_rel = 1e-8
//! ```
//!
//! See `docs/config.md` for every key.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use amc_core::instances::{ColumnNorms, RowMode};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad override `{0}`: expected section.key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CompleteSweep,
    ApproxSweep,
    BoundsValidate,
    LowerboundDemo,
    SingleRun,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::CompleteSweep => "complete-sweep",
            Self::ApproxSweep => "approx-sweep",
            Self::BoundsValidate => "bounds-validate",
            Self::LowerboundDemo => "lowerbound-demo",
            Self::SingleRun => "single-run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowModeName {
    Gaussian,
    Sign,
    CoherentBasis,
}

impl From<RowModeName> for RowMode {
    fn from(v: RowModeName) -> Self {
        match v {
            RowModeName::Gaussian => RowMode::Gaussian,
            RowModeName::Sign => RowMode::Sign,
            RowModeName::CoherentBasis => RowMode::CoherentBasis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnNormName {
    Constant,
    Uniform,
    LogNormal,
}

impl From<ColumnNormName> for ColumnNorms {
    fn from(v: ColumnNormName) -> Self {
        match v {
            ColumnNormName::Constant => ColumnNorms::Constant,
            ColumnNormName::Uniform => ColumnNorms::Uniform,
            ColumnNormName::LogNormal => ColumnNorms::LogNormal,
        }
    }
}

/// Which algorithm a `single-run` experiment exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleAlgorithm {
    Complete,
    Approx,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceSection {
    pub row_mode: RowModeName,
    pub column_norms: ColumnNormName,
    pub noise_sigma: f64,
    /// When true every grid point uses `d = n` and `grid.d` is ignored.
    pub square: bool,
}

impl Default for InstanceSection {
    fn default() -> Self {
        Self { row_mode: RowModeName::Gaussian, column_norms: ColumnNormName::Constant, noise_sigma: 0.0, square: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub d: Vec<usize>,
    pub n: Vec<usize>,
    pub r: Vec<usize>,
    pub mu0: Vec<f64>,
    /// Probes per column (completion, bounds, lower bound).
    pub m: Vec<usize>,
    /// Fractions of `d` sampled per column (approximation). For completion
    /// sweeps a `p` grid is converted to `m = round(p d)` when `m` is empty.
    pub p: Vec<f64>,
    pub delta: Vec<f64>,
    /// Hidden-block length of the lower-bound family (`μ₀ = d / (r l)`).
    pub l: Vec<usize>,
    /// Fractions of all entries revealed to the passive lower-bound baseline.
    pub passive_fraction: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            d: vec![500],
            n: vec![500],
            r: vec![10],
            mu0: vec![1.0],
            m: Vec::new(),
            p: Vec::new(),
            delta: vec![0.05],
            l: Vec::new(),
            passive_fraction: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub tau_rel: f64,
    /// Relative Frobenius error counted as exact recovery.
    pub success_tol: f64,
    /// Fixed pass-1 count. When absent, `m1 = max(1, round(m1_fraction · p d))`.
    pub m1: Option<usize>,
    pub m1_fraction: f64,
    /// Also run the passive baseline in approximation sweeps.
    pub passive: bool,
    pub single: SingleAlgorithm,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            tau_rel: amc_core::subspace::DEFAULT_TAU_REL,
            success_tol: amc_core::metrics::DEFAULT_SUCCESS_TOL,
            m1: None,
            m1_fraction: 0.1,
            passive: true,
            single: SingleAlgorithm::Complete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub instance: InstanceSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
}

fn default_seed() -> u64 {
    1
}

fn default_trials() -> usize {
    20
}

fn default_output() -> PathBuf {
    PathBuf::from("results.csv")
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            seed: default_seed(),
            trials: default_trials(),
            output: default_output(),
            instance: InstanceSection::default(),
            grid: GridSection::default(),
            algorithm: AlgorithmSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `section.key=value` overrides. Values are parsed as TOML, so
    /// lists are written `grid.m=[10,20]` and strings may be left bare.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut doc = toml::Value::try_from(&*self).expect("config serializes");
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw.split_once('=').ok_or_else(|| ConfigError::Override(raw.into()))?;
            let value = parse_value(value.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let table = doc.as_table_mut().expect("config is a table");
            match path.as_slice() {
                [top] => {
                    table.insert((*top).into(), value);
                }
                [section, field] => {
                    let sec = table
                        .entry(section.to_string())
                        .or_insert_with(|| toml::Value::Table(Default::default()));
                    sec.as_table_mut().ok_or_else(|| ConfigError::Override(raw.into()))?.insert((*field).into(), value);
                }
                _ => return Err(ConfigError::Override(raw.into())),
            }
        }
        *self = doc.try_into()?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        let g = &self.grid;
        if g.n.is_empty() || g.r.is_empty() {
            return Err(invalid("grid.n and grid.r must be nonempty"));
        }
        if !self.instance.square && g.d.is_empty() {
            return Err(invalid("grid.d must be nonempty unless instance.square is set"));
        }
        if g.r.contains(&0) {
            return Err(invalid("grid.r must be positive"));
        }
        if g.p.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(invalid("every grid.p value must lie in (0, 1]"));
        }
        if g.mu0.iter().any(|&mu| !(mu >= 1.0 && mu.is_finite())) {
            return Err(invalid("every grid.mu0 value must be at least 1"));
        }
        if g.delta.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return Err(invalid("every grid.delta value must lie in (0, 1)"));
        }
        if g.passive_fraction.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(invalid("every grid.passive_fraction value must lie in (0, 1]"));
        }
        if !(self.algorithm.m1_fraction > 0.0 && self.algorithm.m1_fraction < 1.0) {
            return Err(invalid("algorithm.m1_fraction must lie in (0, 1)"));
        }
        match self.experiment {
            ExperimentKind::CompleteSweep | ExperimentKind::SingleRun => {
                if g.mu0.is_empty() || (g.m.is_empty() && g.p.is_empty()) {
                    return Err(invalid("completion needs nonempty grid.mu0 and grid.m (or grid.p)"));
                }
            }
            ExperimentKind::ApproxSweep => {
                if g.mu0.is_empty() || g.p.is_empty() {
                    return Err(invalid("approximation sweeps need nonempty grid.mu0 and grid.p"));
                }
            }
            ExperimentKind::BoundsValidate => {
                if g.mu0.is_empty() || g.m.is_empty() || g.delta.is_empty() {
                    return Err(invalid("bounds validation needs nonempty grid.mu0, grid.m and grid.delta"));
                }
            }
            ExperimentKind::LowerboundDemo => {
                if g.l.is_empty() || (g.m.is_empty() && g.passive_fraction.is_empty()) {
                    return Err(invalid("the lower-bound demo needs grid.l and grid.m or grid.passive_fraction"));
                }
            }
        }
        Ok(())
    }

    /// Ambient dimensions to pair with a given `n`.
    pub fn dims_for(&self, n: usize) -> Vec<usize> {
        if self.instance.square {
            vec![n]
        } else {
            self.grid.d.iter().copied().filter(|&d| d <= n).collect()
        }
    }
}

fn parse_value(text: &str) -> toml::Value {
    // Parse through a one-key document so scalars, arrays and inline tables
    // all work; anything unparseable is taken as a bare string.
    toml::Table::from_str(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.into()))
}
