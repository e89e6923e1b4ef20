//! Per-sample ring buffers of recent predictions.
//!
//! Each record is the predicted probability of the sample's given label plus
//! the predicted (argmax) class, one record per sample per epoch. Two
//! uncertainty signals are derived from a buffer: the population variance of
//! the stored probabilities, and the entropy of the predicted-label
//! frequencies normalized by `ln q`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub prob_given_label: f64,
    pub predicted_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHistory {
    q: usize,
    k: usize,
    records: Vec<PredictionRecord>,
    /// Total records ever written per sample; the write slot is `count % q`.
    counts: Vec<usize>,
}

impl PredictionHistory {
    pub fn new(num_samples: usize, q: usize, k: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::config("history capacity q must be positive"));
        }
        if k == 0 {
            return Err(Error::config("history needs at least one class"));
        }
        let blank = PredictionRecord {
            prob_given_label: 0.0,
            predicted_label: 0,
        };
        Ok(Self {
            q,
            k,
            records: vec![blank; num_samples * q],
            counts: vec![0; num_samples],
        })
    }

    pub fn capacity(&self) -> usize {
        self.q
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn num_samples(&self) -> usize {
        self.counts.len()
    }

    fn check(&self, sample_id: usize) -> Result<()> {
        if sample_id >= self.counts.len() {
            return Err(Error::Index {
                index: sample_id,
                len: self.counts.len(),
            });
        }
        Ok(())
    }

    /// Appends a record, evicting the oldest once `q` are stored.
    pub fn record(&mut self, sample_id: usize, prob_given_label: f64, predicted_label: usize) -> Result<()> {
        self.check(sample_id)?;
        if !(0.0..=1.0).contains(&prob_given_label) {
            return Err(Error::numeric(format!(
                "probability {prob_given_label} outside [0, 1]"
            )));
        }
        if predicted_label >= self.k {
            return Err(Error::Index {
                index: predicted_label,
                len: self.k,
            });
        }
        let slot = self.counts[sample_id] % self.q;
        self.records[sample_id * self.q + slot] = PredictionRecord {
            prob_given_label,
            predicted_label,
        };
        self.counts[sample_id] += 1;
        Ok(())
    }

    /// Number of stored records, at most `q`.
    pub fn fill(&self, sample_id: usize) -> usize {
        self.counts[sample_id].min(self.q)
    }

    /// Stored records, oldest first.
    pub fn records(&self, sample_id: usize) -> Result<Vec<PredictionRecord>> {
        self.check(sample_id)?;
        let count = self.counts[sample_id];
        let base = sample_id * self.q;
        let buf = &self.records[base..base + self.q];
        if count < self.q {
            return Ok(buf[..count].to_vec());
        }
        let start = count % self.q;
        Ok(buf[start..].iter().chain(&buf[..start]).copied().collect())
    }

    fn stored(&self, sample_id: usize) -> Result<&[PredictionRecord]> {
        self.check(sample_id)?;
        let base = sample_id * self.q;
        Ok(&self.records[base..base + self.fill(sample_id)])
    }

    /// Population variance of the stored probabilities; 0 with fewer than two records.
    pub fn variance_given_label(&self, sample_id: usize) -> Result<f64> {
        let recs = self.stored(sample_id)?;
        if recs.len() < 2 {
            return Ok(0.0);
        }
        Ok(population_variance(recs.iter().map(|r| r.prob_given_label)))
    }

    /// `-(1 / ln q) * sum F ln F` over predicted-label frequencies `F` of the
    /// stored records. The normalizer always uses the capacity `q`.
    pub fn inconsistency(&self, sample_id: usize) -> Result<f64> {
        let recs = self.stored(sample_id)?;
        if recs.is_empty() {
            return Err(Error::State(format!("sample {sample_id} has no predictions recorded")));
        }
        if self.q < 2 {
            return Ok(0.0);
        }
        let mut counts = vec![0usize; self.k];
        for r in recs {
            counts[r.predicted_label] += 1;
        }
        let m = recs.len() as f64;
        let entropy: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let f = c as f64 / m;
                -f * f.ln()
            })
            .sum();
        Ok((entropy / (self.q as f64).ln()).clamp(0.0, 1.0))
    }

    /// Most frequent predicted label; ties go to whichever tied label was recorded last.
    pub fn mode_label(&self, sample_id: usize) -> Result<usize> {
        let recs = self.records(sample_id)?;
        if recs.is_empty() {
            return Err(Error::State(format!("sample {sample_id} has no predictions recorded")));
        }
        let mut counts = vec![0usize; self.k];
        let mut last_seen = vec![0usize; self.k];
        for (pos, r) in recs.iter().enumerate() {
            counts[r.predicted_label] += 1;
            last_seen[r.predicted_label] = pos;
        }
        Ok((0..self.k)
            .filter(|&c| counts[c] > 0)
            .max_by_key(|&c| (counts[c], last_seen[c]))
            .unwrap())
    }
}

/// Population variance across the class probabilities of one prediction.
pub fn per_step_class_variance(prob_row: &[f64]) -> f64 {
    population_variance(prob_row.iter().copied())
}

/// Two-pass variance of values shifted by the first one; exactly 0 for constant input.
fn population_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return 0.0;
    };
    let n = values.clone().count() as f64;
    let mean = values.clone().map(|v| v - first).sum::<f64>() / n;
    values.map(|v| (v - first - mean).powi(2)).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history_with(q: usize, k: usize, recs: &[(f64, usize)]) -> PredictionHistory {
        let mut h = PredictionHistory::new(1, q, k).unwrap();
        for &(p, y) in recs {
            h.record(0, p, y).unwrap();
        }
        h
    }

    #[test]
    fn ring_keeps_last_q() {
        let h = history_with(3, 4, &[(0.1, 0), (0.2, 1), (0.3, 2), (0.4, 3)]);
        assert_eq!(h.fill(0), 3);
        let probs: Vec<f64> = h.records(0).unwrap().iter().map(|r| r.prob_given_label).collect();
        assert_eq!(probs, vec![0.2, 0.3, 0.4]);
        let labels: Vec<usize> = h.records(0).unwrap().iter().map(|r| r.predicted_label).collect();
        assert_eq!(labels, vec![1, 2, 3]);
    }

    #[test]
    fn fill_counts_until_saturation() {
        let h = history_with(15, 2, &[(0.5, 0), (0.5, 1)]);
        assert_eq!(h.fill(0), 2);
    }

    #[test]
    fn record_rejects_bad_input() {
        let mut h = PredictionHistory::new(2, 3, 2).unwrap();
        assert!(matches!(h.record(2, 0.5, 0), Err(Error::Index { .. })));
        assert!(h.record(0, 1.5, 0).is_err());
        assert!(h.record(0, 0.5, 2).is_err());
    }

    #[test]
    fn variance_examples() {
        assert_eq!(history_with(15, 2, &[(0.7, 0); 3]).variance_given_label(0).unwrap(), 0.0);
        let v = history_with(15, 2, &[(0.2, 0), (0.4, 0)]).variance_given_label(0).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        let v = history_with(15, 2, &[(0.0, 0), (1.0, 0)]).variance_given_label(0).unwrap();
        assert_eq!(v, 0.25);
        assert_eq!(history_with(15, 2, &[(0.9, 0)]).variance_given_label(0).unwrap(), 0.0);
    }

    #[test]
    fn inconsistency_examples() {
        let same = history_with(15, 3, &[(0.5, 2); 6]);
        assert_eq!(same.inconsistency(0).unwrap(), 0.0);

        let distinct: Vec<(f64, usize)> = (0..15).map(|c| (0.5, c)).collect();
        let h = history_with(15, 15, &distinct);
        assert!((h.inconsistency(0).unwrap() - 1.0).abs() < 1e-12);

        let mut mix = vec![(0.5, 0); 10];
        mix.extend(vec![(0.5, 1); 5]);
        let h = history_with(15, 2, &mix);
        let a: f64 = 2.0 / 3.0;
        let b: f64 = 1.0 / 3.0;
        let want = (-a * a.ln() - b * b.ln()) / 15f64.ln();
        assert!((h.inconsistency(0).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.2350).abs() < 5e-5);
    }

    #[test]
    fn inconsistency_uses_capacity_normalizer() {
        // two distinct labels out of two records, q = 15: ln 2 / ln 15
        let h = history_with(15, 4, &[(0.5, 0), (0.5, 1)]);
        assert!((h.inconsistency(0).unwrap() - 2f64.ln() / 15f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_history_is_a_state_error() {
        let h = PredictionHistory::new(1, 3, 2).unwrap();
        assert!(matches!(h.mode_label(0), Err(Error::State(_))));
        assert!(matches!(h.inconsistency(0), Err(Error::State(_))));
    }

    #[test]
    fn mode_label_majority_and_tie_break() {
        assert_eq!(history_with(5, 3, &[(0.1, 1); 3]).mode_label(0).unwrap(), 1);
        assert_eq!(history_with(5, 3, &[(0.1, 0), (0.1, 1), (0.1, 0)]).mode_label(0).unwrap(), 0);
        assert_eq!(history_with(5, 3, &[(0.1, 0), (0.1, 1)]).mode_label(0).unwrap(), 1);
        assert_eq!(history_with(5, 3, &[(0.1, 1), (0.1, 0)]).mode_label(0).unwrap(), 0);
        // tie after wrap-around: order is by recency, not slot
        let h = history_with(2, 3, &[(0.1, 2), (0.1, 0), (0.1, 1)]);
        assert_eq!(h.mode_label(0).unwrap(), 1);
    }

    #[test]
    fn class_variance_examples() {
        assert_eq!(per_step_class_variance(&[0.25; 4]), 0.0);
        assert_eq!(per_step_class_variance(&[0.1; 10]), 0.0);
        assert_eq!(per_step_class_variance(&[1.0, 0.0]), 0.25);
        // E[x^2] - E[x]^2 = 1/4 - 1/16
        assert!((per_step_class_variance(&[1.0, 0.0, 0.0, 0.0]) - 3.0 / 16.0).abs() < 1e-15);
    }
}
