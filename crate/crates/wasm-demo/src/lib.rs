//! Browser bindings for the label-noise laboratory.
//!
//! Each exported function takes plain numbers or strings and returns a JSON
//! string; `www/index.html` renders the results.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use focilab::config::{DatasetSpec, NoiseSpec, ProbeSpec};
use focilab::noise::{build_transition, realized_noise_rate};
use focilab::runner::{load_clean_data, prepare_run_data, Trainer};
use focilab::weighting::normalize_weights;
use focilab::{BlobSpec, EpochRecord, ExperimentConfig, FociConfig, LrSchedule, Method, NoiseKind, Result};

#[derive(Serialize)]
struct TransitionView {
    k: usize,
    rows: Vec<Vec<f64>>,
    flip: Vec<f64>,
}

#[derive(Serialize)]
struct WeightsView {
    weights: Vec<f64>,
    survivors: usize,
}

#[derive(Serialize)]
struct Point {
    x: f64,
    y: f64,
    label: usize,
    clean: bool,
    weight: f64,
}

#[derive(Serialize)]
struct SimulationView {
    method: String,
    noise: String,
    realized_noise: f64,
    records: Vec<EpochRecord>,
    points: Vec<Point>,
}

/// Confusion counts for a ring of classes: neighbours are confused more often.
fn ring_confusion(k: usize) -> Vec<Vec<u64>> {
    (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let d = (i + k - j) % k;
                    match d.min(k - d) {
                        0 => 0,
                        1 => 4,
                        _ => 1,
                    }
                })
                .collect()
        })
        .collect()
}

pub fn transition_json(kind: &str, k: usize, tau: f64, tau_sym: f64) -> Result<String> {
    let kind: NoiseKind = kind.parse()?;
    let conf = ring_confusion(k);
    let m = build_transition(kind, k, tau, Some(tau_sym), Some(&conf))?;
    let view = TransitionView {
        k,
        rows: m.rows().to_vec(),
        flip: (0..k).map(|y| m.flip_probability(y)).collect(),
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

pub fn weights_json(raw: &[f64], zeroed: &[u8]) -> Result<String> {
    let mask: Vec<bool> = zeroed.iter().map(|&z| z != 0).collect();
    let w = normalize_weights(raw, &mask)?;
    let view = WeightsView {
        weights: w.values,
        survivors: w.survivor_count,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

fn demo_config(method: Method, noise: NoiseKind, tau: f64, epochs: usize, seed: u64) -> ExperimentConfig {
    let gamma = (epochs / 4).max(1);
    ExperimentConfig {
        dataset: DatasetSpec::Blobs(BlobSpec {
            k: 4,
            n_train: 800,
            n_test: 400,
            dim: 2,
            radius: 2.0,
            spread: 0.8,
            seed: 2024,
        }),
        noise: NoiseSpec {
            kind: noise,
            tau,
            tau_sym: tau / 2.0,
            probe: ProbeSpec {
                n_samples: 400,
                epochs: 5,
                ..ProbeSpec::default()
            },
        },
        method,
        layer_dims: vec![2, 32, 32, 4],
        epochs,
        batch_size: 64,
        schedule: LrSchedule {
            initial_lr: 0.02,
            milestones: vec![epochs / 2, epochs * 3 / 4],
            ..LrSchedule::default()
        },
        foci: FociConfig {
            gamma,
            tau,
            ..FociConfig::default()
        },
        seeds: vec![seed],
        out_dir: "out".into(),
        analysis_epoch: None,
        dump_history: false,
        dump_weights_epochs: Vec::new(),
    }
}

pub fn simulate_json(method: &str, noise: &str, tau: f64, epochs: usize, seed: u64) -> Result<String> {
    let cfg = demo_config(method.parse()?, noise.parse()?, tau, epochs, seed);
    cfg.validate()?;
    let clean = load_clean_data(&cfg)?;
    let data = prepare_run_data(&cfg, &clean, seed)?;
    let mut trainer = Trainer::new(&cfg, &data, seed)?;
    for _ in 0..epochs {
        trainer.run_epoch()?;
    }
    let train = &data.train;
    let points = (0..train.len())
        .map(|i| Point {
            x: train.features.get(i, 0),
            y: train.features.get(i, 1),
            label: train.observed_labels[i],
            clean: train.is_clean(i),
            weight: trainer.last_weights()[i],
        })
        .collect();
    let view = SimulationView {
        method: cfg.method.as_str().to_string(),
        noise: cfg.noise.kind.as_str().to_string(),
        realized_noise: realized_noise_rate(&train.true_labels, &train.observed_labels)?,
        records: trainer.series().records.clone(),
        points,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

fn to_js(r: Result<String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

/// Transition matrix for a noise scheme, as `{k, rows, flip}`.
#[wasm_bindgen]
pub fn transition_matrix(kind: &str, k: usize, tau: f64, tau_sym: f64) -> Result<String, JsValue> {
    to_js(transition_json(kind, k, tau, tau_sym))
}

/// Normalized weights for raw values; `zeroed[i] != 0` screens sample `i`.
#[wasm_bindgen]
pub fn weight_pipeline(raw: &[f64], zeroed: &[u8]) -> Result<String, JsValue> {
    to_js(weights_json(raw, zeroed))
}

/// Trains one method on a small noisy blob set and returns per-epoch
/// metrics plus the final per-sample weights.
#[wasm_bindgen]
pub fn simulate(method: &str, noise: &str, tau: f64, epochs: usize, seed: u64) -> Result<String, JsValue> {
    to_js(simulate_json(method, noise, tau, epochs, seed))
}
