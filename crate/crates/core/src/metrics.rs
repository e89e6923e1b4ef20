//! Evaluation metrics: accuracy, label precision, loss/uncertainty quadrants
//! and clean-vs-noisy histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weighting::fraction_count_floor;

/// One row of a metrics series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_train_loss: f64,
    pub test_accuracy: f64,
    pub label_precision: f64,
    pub zeroed_fraction: f64,
    /// Mean weight over clean training samples, zeros included.
    pub mean_weight_clean: f64,
    pub mean_weight_noisy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub method: String,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
}

impl MetricsSeries {
    pub fn new(method: impl Into<String>, seed: u64) -> Self {
        Self {
            method: method.into(),
            seed,
            records: Vec::new(),
        }
    }

    /// Appends the next epoch; epochs must run 1, 2, 3, ...
    pub fn push(&mut self, record: EpochRecord) -> Result<()> {
        let expected = self.records.len() + 1;
        if record.epoch != expected {
            return Err(Error::State(format!(
                "expected epoch {expected}, got {}",
                record.epoch
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.test_accuracy)
    }

    pub fn best_accuracy(&self) -> Option<f64> {
        self.records.iter().map(|r| r.test_accuracy).reduce(f64::max)
    }
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelPrecision {
    pub value: f64,
    /// Nothing was selected; `value` is reported as 1.0.
    pub degenerate: bool,
}

/// Fraction of selected samples that are clean.
pub fn label_precision(selected: &[bool], clean: &[bool]) -> Result<LabelPrecision> {
    if selected.len() != clean.len() {
        return Err(Error::shape(format!(
            "selection of {} vs clean mask of {}",
            selected.len(),
            clean.len()
        )));
    }
    let chosen = selected.iter().filter(|&&s| s).count();
    if chosen == 0 {
        return Ok(LabelPrecision {
            value: 1.0,
            degenerate: true,
        });
    }
    let good = selected.iter().zip(clean).filter(|&(&s, &c)| s && c).count();
    Ok(LabelPrecision {
        value: good as f64 / chosen as f64,
        degenerate: false,
    })
}

/// Share of the training set in each clean/noisy x loss x uncertainty cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantReport {
    pub epoch: usize,
    pub loss_cut: f64,
    pub uncertainty_cut: f64,
    pub clean_low_loss_low_unc: f64,
    pub clean_low_loss_high_unc: f64,
    pub clean_high_loss_low_unc: f64,
    pub clean_high_loss_high_unc: f64,
    pub noisy_low_loss_low_unc: f64,
    pub noisy_low_loss_high_unc: f64,
    pub noisy_high_loss_low_unc: f64,
    pub noisy_high_loss_high_unc: f64,
}

impl QuadrantReport {
    pub fn clean_total(&self) -> f64 {
        self.clean_low_loss_low_unc
            + self.clean_low_loss_high_unc
            + self.clean_high_loss_low_unc
            + self.clean_high_loss_high_unc
    }

    pub fn noisy_total(&self) -> f64 {
        self.noisy_low_loss_low_unc
            + self.noisy_low_loss_high_unc
            + self.noisy_high_loss_low_unc
            + self.noisy_high_loss_high_unc
    }

    /// Proportions in a fixed order matching [`QuadrantReport::NAMES`].
    pub fn proportions(&self) -> [f64; 8] {
        [
            self.clean_low_loss_low_unc,
            self.clean_low_loss_high_unc,
            self.clean_high_loss_low_unc,
            self.clean_high_loss_high_unc,
            self.noisy_low_loss_low_unc,
            self.noisy_low_loss_high_unc,
            self.noisy_high_loss_low_unc,
            self.noisy_high_loss_high_unc,
        ]
    }

    pub const NAMES: [&'static str; 8] = [
        "clean_low_loss_low_unc",
        "clean_low_loss_high_unc",
        "clean_high_loss_low_unc",
        "clean_high_loss_high_unc",
        "noisy_low_loss_low_unc",
        "noisy_low_loss_high_unc",
        "noisy_high_loss_low_unc",
        "noisy_high_loss_high_unc",
    ];
}

/// Cut value so that values `<= cut` form the lowest `(1 - tau)` share.
/// With ties at the cut, every tied value counts as low.
pub fn low_share_cut(values: &[f64], tau: f64) -> f64 {
    let low = fraction_count_floor(1.0 - tau, values.len());
    if low == 0 {
        return f64::NEG_INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[low - 1]
}

/// Splits samples at the `(1 - tau)` quantiles of loss and uncertainty and
/// cross-tabulates with the clean mask. Proportions are over all samples.
pub fn quadrant_analysis(
    losses: &[f64],
    uncertainties: &[f64],
    clean: &[bool],
    tau: f64,
    epoch: usize,
) -> Result<QuadrantReport> {
    let n = losses.len();
    if uncertainties.len() != n || clean.len() != n {
        return Err(Error::shape("quadrant inputs disagree in length"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::config(format!("quadrant tau must lie in (0, 1), got {tau}")));
    }
    if n == 0 {
        return Err(Error::config("quadrant analysis of an empty set"));
    }
    let loss_cut = low_share_cut(losses, tau);
    let uncertainty_cut = low_share_cut(uncertainties, tau);
    let mut cells = [0usize; 8];
    for i in 0..n {
        let high_loss = losses[i] > loss_cut;
        let high_unc = uncertainties[i] > uncertainty_cut;
        let idx = (usize::from(!clean[i]) << 2) | (usize::from(high_loss) << 1) | usize::from(high_unc);
        cells[idx] += 1;
    }
    let p = |c: usize| cells[c] as f64 / n as f64;
    Ok(QuadrantReport {
        epoch,
        loss_cut,
        uncertainty_cut,
        clean_low_loss_low_unc: p(0),
        clean_low_loss_high_unc: p(1),
        clean_high_loss_low_unc: p(2),
        clean_high_loss_high_unc: p(3),
        noisy_low_loss_low_unc: p(4),
        noisy_low_loss_high_unc: p(5),
        noisy_high_loss_low_unc: p(6),
        noisy_high_loss_high_unc: p(7),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Fraction of the group in each bin; sums to 1 unless `empty`.
    pub density: Vec<f64>,
    pub count: usize,
    pub empty: bool,
}

/// Clean and noisy histograms over shared bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSummary {
    pub edges: Vec<f64>,
    pub clean: Histogram,
    pub noisy: Histogram,
}

pub fn distribution_summary(values: &[f64], clean: &[bool], bins: usize) -> Result<DistributionSummary> {
    if bins < 2 {
        return Err(Error::config("need at least two bins"));
    }
    if values.len() != clean.len() {
        return Err(Error::shape("values and clean mask disagree in length"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("histogram values must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, width) = if values.is_empty() {
        (0.0, 1.0 / bins as f64)
    } else if hi > lo {
        (lo, (hi - lo) / bins as f64)
    } else {
        (lo, 1.0 / bins as f64)
    };
    let edges: Vec<f64> = (0..=bins).map(|b| lo + width * b as f64).collect();

    let mut counts = [vec![0usize; bins], vec![0usize; bins]];
    for (&v, &c) in values.iter().zip(clean) {
        let b = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[usize::from(!c)][b] += 1;
    }
    let to_hist = |counts: &[usize]| {
        let total: usize = counts.iter().sum();
        Histogram {
            density: counts
                .iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect(),
            count: total,
            empty: total == 0,
        }
    };
    Ok(DistributionSummary {
        edges,
        clean: to_hist(&counts[0]),
        noisy: to_hist(&counts[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[]).is_err());
    }

    #[test]
    fn label_precision_examples() {
        let p = label_precision(&[true, true], &[true, true]).unwrap();
        assert_eq!(p.value, 1.0);
        let clean: Vec<bool> = (0..10).map(|i| i < 6).collect();
        assert_eq!(label_precision(&[true; 10], &clean).unwrap().value, 0.6);
        let sel = [true, true, true, true, false];
        let clean = [true, true, true, false, true];
        assert_eq!(label_precision(&sel, &clean).unwrap().value, 0.75);
        let empty = label_precision(&[false; 3], &[true; 3]).unwrap();
        assert!(empty.degenerate);
        assert_eq!(empty.value, 1.0);
    }

    #[test]
    fn quadrant_split_counts() {
        let losses: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let unc: Vec<f64> = (0..10).map(|i| (9 - i) as f64).collect();
        let q = quadrant_analysis(&losses, &unc, &[true; 10], 0.4, 50).unwrap();
        let low_loss = q.clean_low_loss_low_unc + q.clean_low_loss_high_unc;
        assert!((low_loss - 0.6).abs() < 1e-12);
        assert_eq!(q.noisy_total(), 0.0);
        assert!((q.proportions().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(q.loss_cut, 5.0);
    }

    #[test]
    fn quadrant_degenerate_values_are_low() {
        let q = quadrant_analysis(&[1.0; 6], &[0.5; 6], &[true, true, true, false, false, false], 0.4, 1).unwrap();
        assert_eq!(q.clean_low_loss_low_unc, 0.5);
        assert_eq!(q.noisy_low_loss_low_unc, 0.5);
    }

    #[test]
    fn quadrant_rejects_bad_tau() {
        assert!(quadrant_analysis(&[1.0], &[1.0], &[true], 0.0, 1).is_err());
    }

    #[test]
    fn histogram_of_constant_values() {
        let s = distribution_summary(&[2.0; 5], &[true, true, false, true, false], 4).unwrap();
        assert_eq!(s.clean.density.iter().filter(|&&d| d > 0.0).count(), 1);
        assert_eq!(s.noisy.density.iter().filter(|&&d| d > 0.0).count(), 1);
        assert_eq!(s.edges.len(), 5);
    }

    #[test]
    fn histograms_sum_to_one_and_flag_empty_groups() {
        let vals = [0.1, 0.5, 0.9, 0.3, 0.7];
        let s = distribution_summary(&vals, &[true; 5], 3).unwrap();
        assert!((s.clean.density.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.noisy.empty);
        assert_eq!(*s.edges.first().unwrap(), 0.1);
        assert!((s.edges.last().unwrap() - 0.9).abs() < 1e-12);
        assert!(distribution_summary(&vals, &[true; 5], 1).is_err());
    }

    #[test]
    fn series_requires_contiguous_epochs() {
        let rec = |epoch| EpochRecord {
            epoch,
            learning_rate: 0.1,
            mean_train_loss: 1.0,
            test_accuracy: 0.5,
            label_precision: 1.0,
            zeroed_fraction: 0.0,
            mean_weight_clean: 1.0,
            mean_weight_noisy: 1.0,
        };
        let mut s = MetricsSeries::new("default", 1);
        s.push(rec(1)).unwrap();
        assert!(s.push(rec(3)).is_err());
        s.push(rec(2)).unwrap();
        assert_eq!(s.final_accuracy(), Some(0.5));
    }
}
