//! JSON run configuration. Every field has a default, unknown keys are
//! rejected, and errors name the offending key path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::NetConfig;
use crate::diffusion::{NoiseSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::finetune::FinetuneConfig;
use crate::hull::{Environment, Quadrature, DEFAULT_LOA};
use crate::pretrain::TrainConfig;
use crate::rewards::RewardSpec;
use crate::surrogate::TreeConfig;
use crate::svdd::SvddConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub kind: ScheduleKind,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { steps: 100, beta_start: 1e-4, beta_end: 0.02, kind: ScheduleKind::Linear }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.steps, self.beta_start, self.beta_end, self.kind)
            .map_err(|e| Error::Config(format!("schedule: {e}")))
    }
}

/// Two-dimensional Gaussian mixture used when no training file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub rows: usize,
    pub modes: Vec<Vec<f64>>,
    pub std: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { rows: 5000, modes: vec![vec![-1.0, 0.0], vec![1.0, 0.0]], std: 0.3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Training CSV; the synthetic mixture is used when absent.
    pub train: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub trees: TreeConfig,
    /// Share of rows held out for the reported R^2.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { trees: TreeConfig::default(), test_fraction: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HullConfig {
    pub loa: f64,
    pub environment: Environment,
    pub quadrature: Quadrature,
}

impl Default for HullConfig {
    fn default() -> Self {
        Self { loa: DEFAULT_LOA, environment: Environment::default(), quadrature: Quadrature::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub grid_points: usize,
    /// Grid padding beyond the data range, in bandwidths.
    pub grid_pad: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { grid_points: 512, grid_pad: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schedule: ScheduleConfig,
    pub net: NetConfig,
    pub pretrain: TrainConfig,
    pub finetune: FinetuneConfig,
    pub svdd: SvddConfig,
    pub reward: RewardSpec,
    pub data: DataConfig,
    pub surrogate: SurrogateConfig,
    pub hull: HullConfig,
    pub eval: EvalConfig,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleConfig::default(),
            net: NetConfig::default(),
            pretrain: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
            svdd: SvddConfig::default(),
            reward: RewardSpec::default(),
            data: DataConfig::default(),
            surrogate: SurrogateConfig::default(),
            hull: HullConfig::default(),
            eval: EvalConfig::default(),
            output: PathBuf::from("rdd-out"),
        }
    }
}

fn at(key: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) if msg.starts_with(key) => Error::Config(msg),
        Error::Config(msg) => Error::Config(format!("{key}: {msg}")),
        other => Error::Config(format!("{key}: {other}")),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.build()?;
        self.net.validate().map_err(|e| at("net", e))?;
        self.pretrain.validate().map_err(|e| at("pretrain", e))?;
        self.finetune.validate().map_err(|e| at("finetune", e))?;
        self.svdd.validate().map_err(|e| at("svdd", e))?;
        self.surrogate.trees.validate().map_err(|e| at("surrogate.trees", e))?;
        if !(self.surrogate.test_fraction > 0.0 && self.surrogate.test_fraction < 1.0) {
            return Err(Error::Config("surrogate.test_fraction must be in (0, 1)".into()));
        }
        self.hull.quadrature.validate().map_err(|e| at("hull.quadrature", e))?;
        if !(self.hull.loa > 0.0) {
            return Err(Error::Config("hull.loa must be positive".into()));
        }
        let s = &self.data.synthetic;
        if s.modes.is_empty() || s.modes.iter().any(|m| m.is_empty() || m.len() != s.modes[0].len()) {
            return Err(Error::Config("data.synthetic.modes must be non-empty rows of equal width".into()));
        }
        if !(s.std > 0.0) || s.rows < 2 {
            return Err(Error::Config("data.synthetic needs std > 0 and at least 2 rows".into()));
        }
        if self.eval.grid_points < 2 || !(self.eval.grid_pad >= 0.0) {
            return Err(Error::Config("eval.grid_points must be at least 2 and eval.grid_pad non-negative".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates a JSON config string.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}
