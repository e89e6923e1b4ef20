//! Single-network comparison strategies.
//!
//! These are deliberately simple surrogates: `default` trains on everything,
//! `variance_emphasis` upweights samples whose prediction history varies,
//! and `small_loss` keeps only the lowest-loss part of each batch.

use crate::weighting::{fraction_count_floor, SampleWeights};

/// Offset added to every variance so zero-variance samples keep some weight.
pub const VARIANCE_OFFSET: f64 = 1e-3;

pub fn strategy_default(batch_len: usize) -> SampleWeights {
    SampleWeights::ones(batch_len)
}

/// `w_i = (v_i + c) / mean(v + c)`.
pub fn strategy_variance_emphasis(variances: &[f64]) -> SampleWeights {
    let n = variances.len();
    if n == 0 {
        return SampleWeights::ones(0);
    }
    let shifted: Vec<f64> = variances.iter().map(|v| v.max(0.0) + VARIANCE_OFFSET).collect();
    let mean = shifted.iter().sum::<f64>() / n as f64;
    SampleWeights {
        values: shifted.iter().map(|s| s / mean).collect(),
        zero_mask: vec![false; n],
        survivor_count: n,
    }
}

/// Weight 1 for the `floor((1 - tau) n)` smallest losses, 0 for the rest.
/// Equal losses keep the lower index first.
pub fn strategy_small_loss(batch_losses: &[f64], tau: f64) -> SampleWeights {
    let n = batch_losses.len();
    let keep = fraction_count_floor(1.0 - tau, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| batch_losses[a].total_cmp(&batch_losses[b]).then(a.cmp(&b)));
    let mut values = vec![0.0; n];
    let mut zero_mask = vec![true; n];
    for &i in &order[..keep] {
        values[i] = 1.0;
        zero_mask[i] = false;
    }
    SampleWeights {
        values,
        zero_mask,
        survivor_count: keep,
    }
}
