//! Label-corruption transition matrices and seeded label corruption.
//!
//! Row `y` of a transition matrix is the distribution of the observed label
//! given true label `y`. Five schemes are supported:
//!
//! | kind                  | diagonal        | off-diagonal                                   |
//! |-----------------------|-----------------|------------------------------------------------|
//! | `asymmetric`          | `1 - tau`       | `tau` at `(y + 1) mod k`                        |
//! | `symmetric_excluding` | `1 - tau`       | `tau / (k - 1)` everywhere                      |
//! | `symmetric_including` | `1 - tau + tau/k` | `tau / k` everywhere                          |
//! | `mixed`               | `1 - tau`       | `tau_sym/(k-1)`, plus `tau - tau_sym` at the pair |
//! | `nearest`             | `1 - tau`       | `tau` split in proportion to confusion counts  |
//!
//! For `symmetric_including`, `tau` is the fraction of labels redrawn uniformly
//! over all `k` classes, so the expected flip rate is `tau (k - 1) / k`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{predict, Model};

/// XOR-ed into a run seed to get the corruption seed, so corruption is
/// independent of (and shared across methods for) a given run seed.
pub const CORRUPTION_SEED_MASK: u64 = 0x5eed_c0de_1abe_1000;

pub fn corruption_seed(base_seed: u64) -> u64 {
    base_seed ^ CORRUPTION_SEED_MASK
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Asymmetric,
    SymmetricExcluding,
    SymmetricIncluding,
    Mixed,
    Nearest,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::Asymmetric,
        NoiseKind::SymmetricExcluding,
        NoiseKind::SymmetricIncluding,
        NoiseKind::Mixed,
        NoiseKind::Nearest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Asymmetric => "asymmetric",
            NoiseKind::SymmetricExcluding => "symmetric_excluding",
            NoiseKind::SymmetricIncluding => "symmetric_including",
            NoiseKind::Mixed => "mixed",
            NoiseKind::Nearest => "nearest",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown noise kind {s:?}; expected one of asymmetric, symmetric_excluding, \
                     symmetric_including, mixed, nearest"
                ))
            })
    }
}

/// How a transition matrix was generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDescriptor {
    pub kind: NoiseKind,
    pub tau: f64,
    pub tau_sym: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    rows: Vec<Vec<f64>>,
    descriptor: NoiseDescriptor,
}

impl TransitionMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    pub fn descriptor(&self) -> NoiseDescriptor {
        self.descriptor
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            k,
            rows,
            descriptor: NoiseDescriptor {
                kind: NoiseKind::SymmetricExcluding,
                tau: 0.0,
                tau_sym: 0.0,
            },
        }
    }

    /// Probability that a label from class `y` is changed.
    pub fn flip_probability(&self, y: usize) -> f64 {
        self.rows[y]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Builds the transition matrix for `kind`.
///
/// `tau` is the total noise rate. For `Mixed`, `tau_sym` is the symmetric
/// share and the asymmetric share is `tau - tau_sym`. `Nearest` needs a
/// `k x k` confusion count matrix (`confusion[true][predicted]`).
pub fn build_transition(
    kind: NoiseKind,
    k: usize,
    tau: f64,
    tau_sym: Option<f64>,
    confusion: Option<&[Vec<u64>]>,
) -> Result<TransitionMatrix> {
    if k < 2 {
        return Err(Error::config(format!("need k >= 2 classes, got {k}")));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::config(format!("tau must lie in [0, 1), got {tau}")));
    }
    let kf = k as f64;
    let pair = |y: usize| (y + 1) % k;
    let mut tau_sym_used = 0.0;

    let rows: Vec<Vec<f64>> = match kind {
        NoiseKind::Asymmetric => (0..k)
            .map(|y| {
                let mut row = vec![0.0; k];
                row[y] = 1.0 - tau;
                row[pair(y)] += tau;
                row
            })
            .collect(),
        NoiseKind::SymmetricExcluding => (0..k)
            .map(|y| {
                let mut row = vec![tau / (kf - 1.0); k];
                row[y] = 1.0 - tau;
                row
            })
            .collect(),
        NoiseKind::SymmetricIncluding => (0..k)
            .map(|y| {
                let mut row = vec![tau / kf; k];
                row[y] = 1.0 - tau + tau / kf;
                row
            })
            .collect(),
        NoiseKind::Mixed => {
            let ts = tau_sym.ok_or_else(|| Error::config("mixed noise needs tau_sym"))?;
            let ta = tau - ts;
            if ts.is_nan() || ts < 0.0 || ta < -1e-12 {
                return Err(Error::config(format!(
                    "mixed noise needs 0 <= tau_sym <= tau, got tau={tau}, tau_sym={ts}"
                )));
            }
            let ta = ta.max(0.0);
            tau_sym_used = ts;
            (0..k)
                .map(|y| {
                    let mut row = vec![ts / (kf - 1.0); k];
                    row[y] = 1.0 - ta - ts;
                    row[pair(y)] += ta;
                    row
                })
                .collect()
        }
        NoiseKind::Nearest => {
            let conf = confusion.ok_or_else(|| Error::config("nearest noise needs a confusion matrix"))?;
            if conf.len() != k || conf.iter().any(|r| r.len() != k) {
                return Err(Error::config(format!("confusion matrix must be {k}x{k}")));
            }
            conf.iter()
                .enumerate()
                .map(|(y, counts)| {
                    let off: u64 = counts
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != y)
                        .map(|(_, c)| c)
                        .sum();
                    let mut row: Vec<f64> = if off == 0 {
                        vec![tau / (kf - 1.0); k]
                    } else {
                        counts.iter().map(|&c| tau * c as f64 / off as f64).collect()
                    };
                    row[y] = 1.0 - tau;
                    row
                })
                .collect()
        }
    };

    Ok(TransitionMatrix {
        k,
        rows,
        descriptor: NoiseDescriptor {
            kind,
            tau,
            tau_sym: tau_sym_used,
        },
    })
}

/// Draws each observed label independently from the row of its true label.
pub fn corrupt_labels(true_labels: &[usize], transition: &TransitionMatrix, seed: u64) -> Result<Vec<usize>> {
    if let Some(&bad) = true_labels.iter().find(|&&y| y >= transition.k) {
        return Err(Error::config(format!(
            "label {bad} out of range for {} classes",
            transition.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(true_labels
        .iter()
        .map(|&y| {
            let u: f64 = rng.random();
            let row = &transition.rows[y];
            let mut acc = 0.0;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return j;
                }
            }
            // rounding left u above the cumulative total
            row.iter().rposition(|&p| p > 0.0).unwrap_or(y)
        })
        .collect())
}

/// Fraction of positions where the two label vectors differ.
pub fn realized_noise_rate(true_labels: &[usize], observed_labels: &[usize]) -> Result<f64> {
    if true_labels.len() != observed_labels.len() {
        return Err(Error::shape(format!(
            "{} true labels vs {} observed labels",
            true_labels.len(),
            observed_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Ok(0.0);
    }
    let flips = true_labels
        .iter()
        .zip(observed_labels)
        .filter(|(a, b)| a != b)
        .count();
    Ok(flips as f64 / true_labels.len() as f64)
}

/// `counts[i][j]` = held-out samples of true class `i` that the probe predicts as `j`.
pub fn confusion_from_probe(dataset: &Dataset, probe: &Model) -> Result<Vec<Vec<u64>>> {
    let k = dataset.num_classes;
    if probe.num_classes() != k {
        return Err(Error::shape(format!(
            "probe has {} outputs for {k} classes",
            probe.num_classes()
        )));
    }
    let predicted = predict(probe, &dataset.features)?;
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in dataset.true_labels.iter().zip(&predicted) {
        counts[t][p] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_model, Matrix};

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn symmetric_excluding_k5() {
        let t = build_transition(NoiseKind::SymmetricExcluding, 5, 0.4, None, None).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_close(t.get(i, j), if i == j { 0.6 } else { 0.1 });
            }
        }
    }

    #[test]
    fn symmetric_including_k5() {
        let t = build_transition(NoiseKind::SymmetricIncluding, 5, 0.4, None, None).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_close(t.get(i, j), if i == j { 0.68 } else { 0.08 });
            }
        }
    }

    #[test]
    fn asymmetric_k5() {
        let t = build_transition(NoiseKind::Asymmetric, 5, 0.4, None, None).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j {
                    0.6
                } else if j == (i + 1) % 5 {
                    0.4
                } else {
                    0.0
                };
                assert_close(t.get(i, j), want);
            }
        }
    }

    #[test]
    fn mixed_k5() {
        let t = build_transition(NoiseKind::Mixed, 5, 0.4, Some(0.1), None).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j {
                    0.6
                } else if j == (i + 1) % 5 {
                    0.325
                } else {
                    0.025
                };
                assert_close(t.get(i, j), want);
            }
        }
    }

    #[test]
    fn zero_tau_is_identity() {
        let conf = vec![vec![3, 1, 0], vec![0, 5, 2], vec![1, 1, 1]];
        for kind in NoiseKind::ALL {
            let t = build_transition(kind, 3, 0.0, Some(0.0), Some(&conf)).unwrap();
            assert_eq!(t.rows(), TransitionMatrix::identity(3).rows(), "{kind}");
        }
    }

    #[test]
    fn nearest_follows_confusion_and_falls_back() {
        let conf = vec![vec![90, 6, 4], vec![0, 50, 0], vec![2, 8, 70]];
        let t = build_transition(NoiseKind::Nearest, 3, 0.3, None, Some(&conf)).unwrap();
        assert_close(t.get(0, 0), 0.7);
        assert_close(t.get(0, 1), 0.3 * 0.6);
        assert_close(t.get(0, 2), 0.3 * 0.4);
        assert_close(t.get(1, 0), 0.15);
        assert_close(t.get(1, 2), 0.15);
        assert_close(t.get(2, 0), 0.06);
        assert_close(t.get(2, 1), 0.24);
    }

    #[test]
    fn configuration_errors() {
        assert!(build_transition(NoiseKind::Asymmetric, 5, 1.0, None, None).is_err());
        assert!(build_transition(NoiseKind::Asymmetric, 5, -0.1, None, None).is_err());
        assert!(build_transition(NoiseKind::Asymmetric, 1, 0.1, None, None).is_err());
        assert!(build_transition(NoiseKind::Mixed, 5, 0.2, Some(0.3), None).is_err());
        assert!(build_transition(NoiseKind::Mixed, 5, 0.2, None, None).is_err());
        assert!(build_transition(NoiseKind::Nearest, 3, 0.2, None, None).is_err());
        let ragged = vec![vec![1, 2], vec![1, 2, 3], vec![0, 0, 0]];
        assert!(build_transition(NoiseKind::Nearest, 3, 0.2, None, Some(&ragged)).is_err());
    }

    #[test]
    fn identity_corruption_keeps_labels() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let out = corrupt_labels(&labels, &TransitionMatrix::identity(4), 3).unwrap();
        assert_eq!(out, labels);
    }

    #[test]
    fn corruption_is_seeded() {
        let labels: Vec<usize> = (0..2000).map(|i| i % 5).collect();
        let t = build_transition(NoiseKind::SymmetricExcluding, 5, 0.4, None, None).unwrap();
        let a = corrupt_labels(&labels, &t, 1).unwrap();
        assert_eq!(a, corrupt_labels(&labels, &t, 1).unwrap());
        assert_ne!(a, corrupt_labels(&labels, &t, 2).unwrap());
    }

    #[test]
    fn corruption_concentrates_at_tau() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 5).collect();
        let t = build_transition(NoiseKind::SymmetricExcluding, 5, 0.4, None, None).unwrap();
        let obs = corrupt_labels(&labels, &t, 17).unwrap();
        let rate = realized_noise_rate(&labels, &obs).unwrap();
        let band = 3.0 * (0.4f64 * 0.6 / 10_000.0).sqrt();
        assert!((rate - 0.4).abs() <= band, "rate {rate}");
    }

    #[test]
    fn noise_rate_counts() {
        assert_eq!(realized_noise_rate(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(realized_noise_rate(&[0, 0], &[1, 1]).unwrap(), 1.0);
        assert_eq!(realized_noise_rate(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.25);
        assert!(realized_noise_rate(&[0], &[0, 1]).is_err());
    }

    fn probe_dataset() -> Dataset {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.1],
            vec![0.0, 1.0],
            vec![-1.0, 0.0],
            vec![-1.0, -0.1],
        ])
        .unwrap();
        let y = vec![0, 0, 1, 2, 2];
        Dataset::new("probe", x, y.clone(), y, 3).unwrap()
    }

    #[test]
    fn confusion_of_constant_probe() {
        let mut m = init_model(&[2, 3], 1).unwrap();
        m.weights_mut()[0].as_mut_slice().fill(0.0);
        m.biases_mut()[0].copy_from_slice(&[0.0, 5.0, 0.0]);
        let c = confusion_from_probe(&probe_dataset(), &m).unwrap();
        assert_eq!(c, vec![vec![0, 2, 0], vec![0, 1, 0], vec![0, 2, 0]]);
    }

    #[test]
    fn confusion_of_perfect_probe() {
        // logits = x W with class 0 ~ +x, class 1 ~ +y, class 2 ~ -x
        let w = Matrix::from_rows(&[vec![10.0, 0.0, -10.0], vec![0.0, 10.0, 0.0]]).unwrap();
        let m = Model::from_parameters(vec![w], vec![vec![0.0; 3]]).unwrap();
        let c = confusion_from_probe(&probe_dataset(), &m).unwrap();
        assert_eq!(c, vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
    }

    #[test]
    fn parses_kind_names() {
        assert_eq!("symmetric-excluding".parse::<NoiseKind>().unwrap(), NoiseKind::SymmetricExcluding);
        assert_eq!("Mixed".parse::<NoiseKind>().unwrap(), NoiseKind::Mixed);
        assert!("pair".parse::<NoiseKind>().is_err());
    }
}
