//! FOCI sample weighting.
//!
//! After `gamma` warm-up epochs every minibatch gets per-sample loss weights:
//!
//! 1. raw weight `sqrt(p * var)`, where `p` is the current probability of the
//!    given label and `var` the variance of that probability over the history;
//! 2. screening: zero out samples that are inconsistent (history entropy
//!    above `epsilon`) and in the top `tau` fraction of batch losses, or
//!    consistent but whose history mode disagrees with the given label;
//! 3. over the survivors, standardize, squash with a sigmoid and rescale to
//!    unit mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::PredictionHistory;
use crate::nn::{Batch, Matrix};

/// Below this, survivor raw weights are treated as identical.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FociConfig {
    /// History length.
    pub q: usize,
    /// Warm-up epochs trained without weighting.
    pub gamma: usize,
    /// Inconsistency threshold.
    pub epsilon: f64,
    /// Assumed noise rate, used for the high-loss screen.
    pub tau: f64,
}

impl Default for FociConfig {
    fn default() -> Self {
        Self {
            q: 15,
            gamma: 25,
            epsilon: 0.1,
            tau: 0.4,
        }
    }
}

impl FociConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q == 0 {
            return Err(Error::config("q must be positive"));
        }
        if self.gamma == 0 {
            return Err(Error::config("gamma must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("epsilon must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::config("tau must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-sample loss weights for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    pub values: Vec<f64>,
    /// `true` = screened out (weight forced to zero).
    pub zero_mask: Vec<bool>,
    pub survivor_count: usize,
}

impl SampleWeights {
    pub fn ones(n: usize) -> Self {
        Self {
            values: vec![1.0; n],
            zero_mask: vec![false; n],
            survivor_count: n,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indicator of samples that take part in the update.
    pub fn nonzero_mask(&self) -> Vec<bool> {
        self.values.iter().map(|&w| w > 0.0).collect()
    }
}

/// Number of items making up a `fraction` of `n`, rounded up (or down), with a
/// small tolerance so products like `0.7 * 10` do not round the wrong way.
pub(crate) fn fraction_count_ceil(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

pub(crate) fn fraction_count_floor(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor().max(0.0) as usize).min(n)
}

/// `sqrt(prob * variance)`.
pub fn raw_weight(prob_given_label: f64, variance: f64) -> Result<f64> {
    if variance < 0.0 || !variance.is_finite() {
        return Err(Error::numeric(format!("variance must be non-negative, got {variance}")));
    }
    if !(0.0..=1.0).contains(&prob_given_label) {
        return Err(Error::numeric(format!(
            "probability {prob_given_label} outside [0, 1]"
        )));
    }
    Ok((prob_given_label * variance).sqrt())
}

/// Marks the `ceil(tau * n)` largest losses. Equal losses rank the lower index first.
pub fn high_loss_mask(losses: &[f64], tau: f64) -> Vec<bool> {
    let n = losses.len();
    let h = fraction_count_ceil(tau, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    let mut mask = vec![false; n];
    for &i in &order[..h] {
        mask[i] = true;
    }
    mask
}

/// Screening rule: `(inconsistent && high loss) || (consistent && mode != given)`.
pub fn screen(
    batch_losses: &[f64],
    inconsistencies: &[f64],
    mode_labels: &[usize],
    given_labels: &[usize],
    tau: f64,
    epsilon: f64,
) -> Result<Vec<bool>> {
    let n = batch_losses.len();
    if inconsistencies.len() != n || mode_labels.len() != n || given_labels.len() != n {
        return Err(Error::shape(format!(
            "screen inputs disagree in length: {n} losses, {} inconsistencies, {} modes, {} labels",
            inconsistencies.len(),
            mode_labels.len(),
            given_labels.len()
        )));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::config(format!("tau must lie in [0, 1), got {tau}")));
    }
    let high = high_loss_mask(batch_losses, tau);
    Ok((0..n)
        .map(|i| {
            if inconsistencies[i] > epsilon {
                high[i]
            } else {
                mode_labels[i] != given_labels[i]
            }
        })
        .collect())
}

/// Standardize -> sigmoid -> unit mean over unscreened samples; screened samples get 0.
pub fn normalize_weights(raw_values: &[f64], zero_mask: &[bool]) -> Result<SampleWeights> {
    if raw_values.len() != zero_mask.len() {
        return Err(Error::shape(format!(
            "{} raw weights for a mask of {}",
            raw_values.len(),
            zero_mask.len()
        )));
    }
    if let Some(bad) = raw_values.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite raw weight {bad}")));
    }
    let survivors: Vec<usize> = (0..raw_values.len()).filter(|&i| !zero_mask[i]).collect();
    let mut values = vec![0.0; raw_values.len()];
    if survivors.is_empty() {
        return Ok(SampleWeights {
            values,
            zero_mask: zero_mask.to_vec(),
            survivor_count: 0,
        });
    }
    let m = survivors.len() as f64;
    let mean = survivors.iter().map(|&i| raw_values[i]).sum::<f64>() / m;
    let var = survivors
        .iter()
        .map(|&i| (raw_values[i] - mean).powi(2))
        .sum::<f64>()
        / m;
    let std = var.sqrt();
    for &i in &survivors {
        let z = if std < DEGENERATE_STD {
            0.0
        } else {
            (raw_values[i] - mean) / std
        };
        values[i] = 1.0 / (1.0 + (-z).exp());
    }
    let squashed_mean = survivors.iter().map(|&i| values[i]).sum::<f64>() / m;
    for &i in &survivors {
        values[i] /= squashed_mean;
    }
    Ok(SampleWeights {
        values,
        zero_mask: zero_mask.to_vec(),
        survivor_count: survivors.len(),
    })
}

/// Weights for one minibatch at `epoch`.
///
/// The history must already hold this step's record for every sample in the
/// batch. During warm-up (`epoch <= gamma`) every weight is 1.
pub fn compute_batch_weights(
    batch: &Batch,
    probs: &Matrix,
    losses: &[f64],
    history: &PredictionHistory,
    config: &FociConfig,
    epoch: usize,
) -> Result<SampleWeights> {
    let n = batch.len();
    if probs.rows() != n || losses.len() != n {
        return Err(Error::shape(format!(
            "batch of {n} with {} probability rows and {} losses",
            probs.rows(),
            losses.len()
        )));
    }
    if epoch <= config.gamma {
        return Ok(SampleWeights::ones(n));
    }
    let mut raw = Vec::with_capacity(n);
    let mut inconsistencies = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for (row, &id) in batch.sample_ids.iter().enumerate() {
        let p = probs.get(row, batch.labels[row]);
        raw.push(raw_weight(p, history.variance_given_label(id)?)?);
        inconsistencies.push(history.inconsistency(id)?);
        modes.push(history.mode_label(id)?);
    }
    let mask = screen(losses, &inconsistencies, &modes, &batch.labels, config.tau, config.epsilon)?;
    normalize_weights(&raw, &mask)
}
