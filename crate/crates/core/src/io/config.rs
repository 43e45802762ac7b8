//! TOML run configuration. Unknown keys are rejected at every level.
//!
//! ```toml
//! output = "runs/demo"          # required
//!
//! [data]
//! train = "data/train"          # required
//! test = "data/test"            # required
//! units = "voxel"               # "voxel" (1D samples) or "image"; default "image"
//!
//! [ensemble]                    # all optional
//! w_dsc = 0.0
//! offsets = [-3, -2, -1, 0, 1, 2, 3]
//! folds = 5
//! seed = 0
//! model = { type = "logistic" } # or "threshold1d", or { type = "mlp", hidden = 16 }
//!
//! [ensemble.trainer]
//! epochs = 500
//! learning_rate = 0.1
//! momentum = 0.9
//! smoothing = 1.0
//!
//! [baselines]
//! seeds = [0, 1, 2, 3, 4, 5, 6]
//! model = { type = "logistic" }
//! dropout_model = { type = "mlp", hidden = 16 }
//! dropout_seed = 0
//! [baselines.dropout]
//! drop_probability = 0.1
//! passes = 7
//!
//! [evaluation]
//! bandwidth = 0.05
//! bins = 10
//! ```
//!
//! Baseline training reuses `ensemble.w_dsc` and `ensemble.trainer`; the
//! dropout network additionally trains with `drop_probability`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{DEFAULT_BANDWIDTH, DEFAULT_BINS};
use crate::models::{DropoutSpec, EnsembleSpec, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnitMode {
    /// Every voxel is an independent sample.
    Voxel,
    #[default]
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default)]
    pub units: UnitMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub seeds: Vec<u64>,
    pub model: ModelKind,
    pub dropout_model: ModelKind,
    pub dropout_seed: u64,
    pub dropout: DropoutSpec,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            seeds: (0..7).collect(),
            model: ModelKind::Logistic,
            dropout_model: ModelKind::DEFAULT_MLP,
            dropout_seed: 0,
            dropout: DropoutSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub bandwidth: f64,
    pub bins: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            bandwidth: DEFAULT_BANDWIDTH,
            bins: DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.output, &mut cfg.data.train, &mut cfg.data.test] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if self.baselines.seeds.is_empty() {
            return Err(Error::Config("baselines.seeds must not be empty".into()));
        }
        if !matches!(self.baselines.dropout_model, ModelKind::Mlp { hidden } if hidden > 0) {
            return Err(Error::Config(
                "baselines.dropout_model must be an mlp".into(),
            ));
        }
        if let ModelKind::Mlp { hidden: 0 } = self.ensemble.model {
            return Err(Error::Config("mlp width must be positive".into()));
        }
        self.baselines.dropout.validate()?;
        if !(self.evaluation.bandwidth > 0.0 && self.evaluation.bandwidth <= 0.5) {
            return Err(Error::InvalidBandwidth(self.evaluation.bandwidth));
        }
        if self.evaluation.bins < 2 {
            return Err(Error::Config("evaluation.bins must be at least 2".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
