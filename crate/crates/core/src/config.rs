//! Experiment configuration, loaded from a JSON document.
//!
//! Unknown keys are rejected everywhere so typos fail loudly.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::BlobSpec;
use crate::error::{Error, Result};
use crate::nn::LrSchedule;
use crate::noise::NoiseKind;
use crate::weighting::FociConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Default,
    Foci,
    VarianceEmphasis,
    SmallLoss,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Default,
        Method::Foci,
        Method::VarianceEmphasis,
        Method::SmallLoss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Default => "default",
            Method::Foci => "foci",
            Method::VarianceEmphasis => "variance_emphasis",
            Method::SmallLoss => "small_loss",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown method {s:?}; expected default, foci, variance_emphasis or small_loss"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs(BlobSpec),
    /// Pre-built train and test CSVs. The test set is used with its true labels.
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        num_classes: Option<usize>,
    },
}

/// Settings for the classifier whose confusion matrix drives nearest noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSpec {
    /// Probe samples for blob datasets (half to fit, half to score).
    pub n_samples: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            hidden: 16,
            epochs: 20,
            batch_size: 64,
            lr: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub tau: f64,
    /// Symmetric share of `tau` for mixed noise.
    #[serde(default)]
    pub tau_sym: f64,
    #[serde(default)]
    pub probe: ProbeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub noise: NoiseSpec,
    pub method: Method,
    pub layer_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub foci: FociConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Epoch for the loss/uncertainty quadrant report; defaults to mid-training.
    #[serde(default)]
    pub analysis_epoch: Option<usize>,
    /// Record every per-epoch prediction for offline analysis.
    #[serde(default)]
    pub dump_history: bool,
    /// Epochs at which per-sample weights are written out.
    #[serde(default)]
    pub dump_weights_epochs: Vec<usize>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. A missing file is a configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.foci.validate()?;
        self.schedule.validate()?;
        if self.epochs < self.foci.gamma {
            return Err(Error::config(format!(
                "epochs ({}) must be at least gamma ({})",
                self.epochs, self.foci.gamma
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::config("layer_dims needs at least two positive entries"));
        }
        if !(0.0..1.0).contains(&self.noise.tau) {
            return Err(Error::config("noise.tau must lie in [0, 1)"));
        }
        if !(0.0..=self.noise.tau).contains(&self.noise.tau_sym) {
            return Err(Error::config("noise.tau_sym must lie in [0, noise.tau]"));
        }
        if let DatasetSpec::Blobs(spec) = &self.dataset {
            spec.validate()?;
            if self.layer_dims[0] != spec.dim {
                return Err(Error::config(format!(
                    "layer_dims starts with {} but blobs have dim {}",
                    self.layer_dims[0], spec.dim
                )));
            }
            if *self.layer_dims.last().unwrap() != spec.k {
                return Err(Error::config(format!(
                    "layer_dims ends with {} but blobs have k = {}",
                    self.layer_dims.last().unwrap(),
                    spec.k
                )));
            }
        }
        if let Some(e) = self.analysis_epoch {
            if e == 0 || e > self.epochs {
                return Err(Error::config("analysis_epoch must lie in 1..=epochs"));
            }
        }
        Ok(())
    }

    /// Epoch at which the quadrant report is taken.
    pub fn analysis_epoch(&self) -> usize {
        self.analysis_epoch.unwrap_or((self.epochs / 2).max(1))
    }

    pub fn with_method(&self, method: Method) -> Self {
        Self {
            method,
            ..self.clone()
        }
    }
}
