use proptest::prelude::*;

use focilab::baselines::{strategy_default, strategy_small_loss, strategy_variance_emphasis};
use focilab::metrics::{accuracy, distribution_summary, label_precision, quadrant_analysis};

fn arb_samples() -> impl Strategy<Value = Vec<(f64, f64, bool)>> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..0.25, any::<bool>()), 1..300)
}

proptest! {
    #[test]
    fn small_loss_without_noise_is_default(losses in prop::collection::vec(0.0f64..10.0, 0..200)) {
        prop_assert_eq!(strategy_small_loss(&losses, 0.0), strategy_default(losses.len()));
    }

    #[test]
    fn strategies_have_unit_mean_on_their_support(
        values in prop::collection::vec(0.0f64..1.0, 1..200),
        tau in 0.0f64..0.9,
    ) {
        for w in [strategy_default(values.len()), strategy_variance_emphasis(&values), strategy_small_loss(&values, tau)] {
            let kept: Vec<f64> = w.values.iter().cloned().filter(|&v| v > 0.0).collect();
            if !kept.is_empty() {
                prop_assert!((kept.iter().sum::<f64>() / kept.len() as f64 - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn default_precision_is_clean_fraction(clean in prop::collection::vec(any::<bool>(), 1..500)) {
        let w = strategy_default(clean.len());
        let p = label_precision(&w.nonzero_mask(), &clean).unwrap();
        let frac = clean.iter().filter(|&&c| c).count() as f64 / clean.len() as f64;
        prop_assert_eq!(p.value, frac);
    }

    #[test]
    fn quadrants_partition_unity(samples in arb_samples(), tau in 0.05f64..0.95) {
        let losses: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let unc: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let clean: Vec<bool> = samples.iter().map(|s| s.2).collect();
        let q = quadrant_analysis(&losses, &unc, &clean, tau, 7).unwrap();
        let n = samples.len() as f64;
        let clean_frac = clean.iter().filter(|&&c| c).count() as f64 / n;
        prop_assert!((q.proportions().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!((q.clean_total() - clean_frac).abs() <= 1e-9);
        prop_assert!((q.noisy_total() - (1.0 - clean_frac)).abs() <= 1e-9);
        let low = ((1.0 - tau) * n + 1e-9).floor();
        let low_loss = losses.iter().filter(|&&l| l <= q.loss_cut).count() as f64;
        // ties at the cut may only enlarge the low side
        prop_assert!(low_loss >= low);
        let distinct = { let mut s = losses.clone(); s.sort_by(f64::total_cmp); s.dedup(); s.len() == losses.len() };
        if distinct {
            prop_assert_eq!(low_loss, low);
        }
    }

    #[test]
    fn histograms_share_edges_and_integrate(samples in arb_samples(), bins in 2usize..30) {
        let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let clean: Vec<bool> = samples.iter().map(|s| s.2).collect();
        let d = distribution_summary(&values, &clean, bins).unwrap();
        prop_assert_eq!(d.edges.len(), bins + 1);
        for h in [&d.clean, &d.noisy] {
            if !h.empty {
                prop_assert!((h.density.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn precision_examples() {
    let p = label_precision(&[true, true, false, true], &[true, false, false, true]).unwrap();
    assert!((p.value - 2.0 / 3.0).abs() < 1e-15);
    assert!(!p.degenerate);
    assert!(label_precision(&[false, false], &[true, false]).unwrap().degenerate);
    assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 1, 2]).unwrap(), 0.75);
}
