//! Label-noise laboratory.
//!
//! Injects synthetic label corruption into small datasets, trains a
//! feed-forward classifier with FOCI sample reweighting or a baseline
//! strategy, and measures test accuracy, label precision and the
//! loss/uncertainty structure of clean versus noisy samples.
//!
//! Module map:
//!
//! - [`nn`]: MLP, softmax cross-entropy, weighted momentum SGD, LR schedule
//! - [`noise`]: transition matrices and seeded label corruption
//! - [`history`]: per-sample prediction ring buffers and uncertainty signals
//! - [`weighting`]: the FOCI weighting pipeline
//! - [`baselines`] / [`metrics`]: comparison strategies and evaluation
//! - [`data`], [`config`], [`runner`], [`report`]: datasets, experiment
//!   configuration, the training loop and its outputs

pub mod baselines;
pub mod config;
pub mod data;
pub mod error;
pub mod history;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod report;
pub mod runner;
pub mod weighting;

pub use config::{ExperimentConfig, Method};
pub use data::{BlobSpec, Dataset, Split};
pub use error::{Error, Result};
pub use history::PredictionHistory;
pub use metrics::{EpochRecord, MetricsSeries, QuadrantReport};
pub use nn::{LrSchedule, Matrix, Model};
pub use noise::{NoiseKind, TransitionMatrix};
pub use runner::{run_experiment, run_methods, RunResult, Trainer};
pub use weighting::{FociConfig, SampleWeights};
