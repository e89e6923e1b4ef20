use focilab::report::{emit_report, read_metrics_csv, summarize};
use focilab::runner::{load_clean_data, prepare_run_data, run_methods, run_single};
use focilab::{ExperimentConfig, Method};

fn small_config(kind: &str, tau: f64) -> ExperimentConfig {
    let text = format!(
        r#"{{
  "dataset": {{ "kind": "blobs", "k": 3, "n_train": 240, "n_test": 90, "dim": 2,
               "radius": 2.0, "spread": 0.6, "seed": 5 }},
  "noise": {{ "kind": "{kind}", "tau": {tau}, "tau_sym": 0.0,
             "probe": {{ "n_samples": 120, "hidden": 4, "epochs": 2, "batch_size": 32, "lr": 0.05 }} }},
  "method": "foci",
  "layer_dims": [2, 8, 3],
  "epochs": 8,
  "batch_size": 32,
  "schedule": {{ "initial_lr": 0.05, "milestones": [6], "decay_factor": 5.0, "momentum": 0.9, "weight_decay": 0.0 }},
  "foci": {{ "q": 3, "gamma": 3, "epsilon": 0.1, "tau": {tau} }},
  "seeds": [1, 2],
  "dump_history": true,
  "dump_weights_epochs": [2, 5]
}}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

#[test]
fn corruption_is_shared_across_methods() {
    let cfg = small_config("asymmetric", 0.3);
    let results = run_methods(&cfg, &Method::ALL).unwrap();
    assert_eq!(results.len(), 8);
    for seed_idx in 0..2 {
        let labels: Vec<&Vec<usize>> = (0..4).map(|m| &results[m * 2 + seed_idx].train.observed_labels).collect();
        assert!(labels.iter().all(|l| *l == labels[0]));
    }
    assert_ne!(results[0].train.observed_labels, results[1].train.observed_labels);
    let order: Vec<(&str, u64)> = results.iter().map(|r| (r.method(), r.seed())).collect();
    assert_eq!(order[..3], [("default", 1), ("default", 2), ("foci", 1)]);
}

#[test]
fn concurrent_runs_match_sequential_runs() {
    let cfg = small_config("nearest", 0.3);
    let together = run_methods(&cfg, &[Method::Foci]).unwrap();
    let clean = load_clean_data(&cfg).unwrap();
    for (r, &seed) in together.iter().zip(&cfg.seeds) {
        let data = prepare_run_data(&cfg, &clean, seed).unwrap();
        let alone = run_single(&cfg, &data, seed).unwrap();
        assert_eq!(alone.series, r.series);
        assert_eq!(alone.history_dump, r.history_dump);
    }
}

#[test]
fn clean_data_gives_perfect_precision() {
    let cfg = small_config("symmetric_excluding", 0.0);
    for r in run_methods(&cfg, &[Method::Default, Method::Foci]).unwrap() {
        assert_eq!(r.train.clean_fraction(), 1.0);
        assert!(r.series.records.iter().all(|e| e.label_precision == 1.0));
        assert!(r.quadrant.is_none());
    }
}

#[test]
fn series_and_dumps_are_complete() {
    let cfg = small_config("mixed", 0.3);
    let r = &run_methods(&cfg, &[Method::Foci]).unwrap()[0];
    let epochs: Vec<usize> = r.series.records.iter().map(|e| e.epoch).collect();
    assert_eq!(epochs, (1..=8).collect::<Vec<_>>());
    assert_eq!(r.history_dump.len(), 8 * 240);
    assert_eq!(r.weight_dumps.iter().map(|d| d.epoch).collect::<Vec<_>>(), vec![2, 5]);
    assert!(r.weight_dumps[0].rows.iter().all(|w| w.weight == 1.0));
    let q = r.quadrant.as_ref().unwrap();
    assert_eq!(q.epoch, 4);
    for e in &r.series.records {
        for v in [e.test_accuracy, e.label_precision, e.zeroed_fraction] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn report_files_round_trip_and_parse() {
    let cfg = small_config("asymmetric", 0.3);
    let results = run_methods(&cfg, &[Method::Default, Method::Foci]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&results, dir.path()).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    for want in ["metrics_foci_seed2.csv", "summary.csv", "accuracy.svg", "history_default_seed1.csv"] {
        assert!(names.iter().any(|n| n == want), "missing {want}");
    }
    for svg in ["accuracy.svg", "label_precision.svg"] {
        let text = std::fs::read_to_string(dir.path().join(svg)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
    let back = read_metrics_csv(&dir.path().join("metrics_foci_seed1.csv")).unwrap();
    assert_eq!(back.method, "foci");
    assert_eq!(back.seed, 1);
    assert_eq!(back.records.len(), results[2].series.records.len());
    for (a, b) in back.records.iter().zip(&results[2].series.records) {
        assert_eq!(a.epoch, b.epoch);
        assert!((a.test_accuracy - b.test_accuracy).abs() < 1e-12);
    }
}

#[test]
fn summary_statistics() {
    let cfg = small_config("asymmetric", 0.3);
    let results = run_methods(&cfg, &[Method::Default]).unwrap();
    let one = summarize(&[results[0].series.clone()]);
    assert_eq!((one.len(), one[0].runs, one[0].final_std), (1, 1, 0.0));

    let mut three: Vec<_> = results.iter().map(|r| r.series.clone()).collect();
    let mut extra = three[0].clone();
    extra.seed = 9;
    extra.records.last_mut().unwrap().test_accuracy = 0.5;
    three.push(extra);
    let finals: Vec<f64> = three.iter().map(|s| s.final_accuracy().unwrap()).collect();
    let mean = finals.iter().sum::<f64>() / 3.0;
    let std = (finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    let row = &summarize(&three)[0];
    assert_eq!(row.runs, 3);
    assert!((row.final_mean - mean).abs() < 1e-12);
    assert!((row.final_std - std).abs() < 1e-12);
}

#[test]
fn config_validation() {
    let good = small_config("asymmetric", 0.3);
    let text = good.to_json();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), good);
    let typo = text.replacen("\"epochs\"", "\"epoch\"", 1);
    assert!(ExperimentConfig::from_json(&typo).unwrap_err().is_config());
    let mut bad = good.clone();
    bad.epochs = 2;
    assert!(bad.validate().unwrap_err().is_config());
    let mut bad = good.clone();
    bad.seeds.clear();
    assert!(bad.validate().is_err());
    let mut bad = good;
    bad.batch_size = 0;
    assert!(bad.validate().is_err());
    let missing = ExperimentConfig::load(std::path::Path::new("/nonexistent/config.json"));
    assert!(missing.unwrap_err().is_config());
}

#[test]
fn committed_configs_load() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap().validate().unwrap();
    }
}
