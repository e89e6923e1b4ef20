//! Seeded end-to-end training runs.
//!
//! Each epoch shuffles the training set without replacement and walks it in
//! minibatches. For every batch: forward pass, record the prediction history
//! (before the update), compute per-sample weights with the configured
//! method, and take one weighted momentum-SGD step. Batches whose weights are
//! all zero are skipped. At the end of the epoch the model is scored on the
//! clean test set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{strategy_default, strategy_small_loss, strategy_variance_emphasis};
use crate::config::{DatasetSpec, ExperimentConfig, Method, ProbeSpec};
use crate::data::{load_dataset, make_blobs, BlobSpec, Dataset, Split};
use crate::error::{Error, Result};
use crate::history::PredictionHistory;
use crate::metrics::{accuracy, label_precision, quadrant_analysis, EpochRecord, MetricsSeries, QuadrantReport};
use crate::nn::{
    argmax, cross_entropy, forward, init_model, lr_at, predict, sgd_step, Batch, LrSchedule, Matrix, Model,
};
use crate::noise::{build_transition, confusion_from_probe, corrupt_labels, corruption_seed, NoiseKind};
use crate::weighting::{compute_batch_weights, SampleWeights};

const SHUFFLE_SEED_MASK: u64 = 0x0005_4fff_1e00_0001;
const PROBE_SEED_MASK: u64 = 0x0000_9409_e000_0002;

/// One `sample_id,epoch,prob_given_label,predicted_label` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub sample_id: usize,
    pub epoch: usize,
    pub prob_given_label: f64,
    pub predicted_label: usize,
}

/// One `sample_id,weight,zeroed,is_clean` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRow {
    pub sample_id: usize,
    pub weight: f64,
    pub zeroed: bool,
    pub is_clean: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightDump {
    pub epoch: usize,
    pub rows: Vec<WeightRow>,
}

/// Everything one (method, seed) run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub series: MetricsSeries,
    pub quadrant: Option<QuadrantReport>,
    pub history_dump: Vec<HistoryRow>,
    pub weight_dumps: Vec<WeightDump>,
    /// Training set with the observed labels the run trained on.
    pub train: Dataset,
}

impl RunResult {
    pub fn method(&self) -> &str {
        &self.series.method
    }

    pub fn seed(&self) -> u64 {
        self.series.seed
    }
}

/// Clean train/test data for a config, before corruption.
pub fn load_clean_data(config: &ExperimentConfig) -> Result<Split> {
    match &config.dataset {
        DatasetSpec::Blobs(spec) => make_blobs(spec),
        DatasetSpec::Csv {
            train,
            test,
            num_classes,
        } => {
            let k = num_classes.or(config.layer_dims.last().copied());
            let train = load_dataset(train, k)?;
            let mut test = load_dataset(test, k)?;
            // evaluation always uses the true labels
            test.observed_labels = test.true_labels.clone();
            if train.dim() != config.layer_dims[0] || test.dim() != config.layer_dims[0] {
                return Err(Error::config(format!(
                    "dataset has {} features but layer_dims starts with {}",
                    train.dim(),
                    config.layer_dims[0]
                )));
            }
            Ok(Split { train, test })
        }
    }
}

/// Plain minibatch SGD on observed labels; used to fit the nearest-noise probe.
pub fn train_plain(
    model: &mut Model,
    data: &Dataset,
    epochs: usize,
    batch_size: usize,
    schedule: &LrSchedule,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_SEED_MASK);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let lr = lr_at(schedule, epoch);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch = data.batch(chunk)?;
            let ones = vec![1.0; batch.len()];
            sgd_step(model, &batch, &ones, lr, schedule)?;
        }
    }
    Ok(())
}

/// Confusion counts of a probe fit on clean labels of a held-out split.
pub fn probe_confusion(split: &Split, config: &ExperimentConfig, seed: u64) -> Result<Vec<Vec<u64>>> {
    let probe_spec: &ProbeSpec = &config.noise.probe;
    let probe_seed = seed ^ PROBE_SEED_MASK;
    let (fit, score) = match &config.dataset {
        DatasetSpec::Blobs(spec) => {
            let half = (probe_spec.n_samples / 2).max(spec.k);
            let s = make_blobs(&BlobSpec {
                n_train: half,
                n_test: half,
                seed: spec.seed ^ PROBE_SEED_MASK,
                ..spec.clone()
            })?;
            (s.train, s.test)
        }
        DatasetSpec::Csv { .. } => {
            let n = split.test.len();
            (split.test.slice(0..n / 2)?, split.test.slice(n / 2..n)?)
        }
    };
    let k = split.train.num_classes;
    let mut probe = init_model(&[fit.dim(), probe_spec.hidden.max(1), k], probe_seed)?;
    let schedule = LrSchedule {
        initial_lr: probe_spec.lr,
        milestones: Vec::new(),
        ..LrSchedule::default()
    };
    train_plain(&mut probe, &fit, probe_spec.epochs, probe_spec.batch_size, &schedule, probe_seed)?;
    confusion_from_probe(&score, &probe)
}

/// Clean data with the training labels corrupted for `seed`.
pub fn prepare_run_data(config: &ExperimentConfig, clean: &Split, seed: u64) -> Result<Split> {
    let k = clean.train.num_classes;
    let noise = &config.noise;
    let confusion = if noise.kind == NoiseKind::Nearest && noise.tau > 0.0 {
        Some(probe_confusion(clean, config, corruption_seed(seed))?)
    } else {
        None
    };
    let transition = build_transition(
        noise.kind,
        k,
        noise.tau,
        Some(noise.tau_sym),
        confusion.as_deref(),
    )?;
    let observed = corrupt_labels(&clean.train.true_labels, &transition, corruption_seed(seed))?;
    Ok(Split {
        train: clean.train.with_observed(observed)?,
        test: clean.test.clone(),
    })
}

/// Drives one (method, seed) run epoch by epoch.
pub struct Trainer<'a> {
    config: &'a ExperimentConfig,
    data: &'a Split,
    model: Model,
    history: PredictionHistory,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    clean: Vec<bool>,
    epoch: usize,
    series: MetricsSeries,
    quadrant: Option<QuadrantReport>,
    history_dump: Vec<HistoryRow>,
    weight_dumps: Vec<WeightDump>,
    // per-sample values from the latest epoch
    last_loss: Vec<f64>,
    last_weight: Vec<f64>,
    last_zeroed: Vec<bool>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &'a ExperimentConfig, data: &'a Split, seed: u64) -> Result<Self> {
        config.validate()?;
        let n = data.train.len();
        let k = data.train.num_classes;
        if config.layer_dims[0] != data.train.dim() || *config.layer_dims.last().unwrap() != k {
            return Err(Error::config(format!(
                "layer_dims {:?} do not fit data with {} features and {k} classes",
                config.layer_dims,
                data.train.dim()
            )));
        }
        Ok(Self {
            config,
            data,
            model: init_model(&config.layer_dims, seed)?,
            history: PredictionHistory::new(n, config.foci.q, k)?,
            rng: ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_SEED_MASK),
            order: (0..n).collect(),
            clean: data.train.clean_mask(),
            epoch: 0,
            series: MetricsSeries::new(config.method.as_str(), seed),
            quadrant: None,
            history_dump: Vec::new(),
            weight_dumps: Vec::new(),
            last_loss: vec![0.0; n],
            last_weight: vec![0.0; n],
            last_zeroed: vec![false; n],
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn history(&self) -> &PredictionHistory {
        &self.history
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn series(&self) -> &MetricsSeries {
        &self.series
    }

    /// Per-sample weights applied during the latest epoch.
    pub fn last_weights(&self) -> &[f64] {
        &self.last_weight
    }

    fn weights_for(&self, batch: &Batch, probs: &Matrix, losses: &[f64]) -> Result<SampleWeights> {
        let epoch = self.epoch;
        let warm = epoch <= self.config.foci.gamma;
        let n = batch.len();
        Ok(match self.config.method {
            Method::Default => strategy_default(n),
            Method::Foci => {
                compute_batch_weights(batch, probs, losses, &self.history, &self.config.foci, epoch)?
            }
            _ if warm => SampleWeights::ones(n),
            Method::VarianceEmphasis => {
                let v = batch
                    .sample_ids
                    .iter()
                    .map(|&id| self.history.variance_given_label(id))
                    .collect::<Result<Vec<_>>>()?;
                strategy_variance_emphasis(&v)
            }
            Method::SmallLoss => strategy_small_loss(losses, self.config.foci.tau),
        })
    }

    /// Runs one epoch and returns its metrics record.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        self.epoch += 1;
        let epoch = self.epoch;
        let lr = lr_at(&self.config.schedule, epoch);
        self.order.shuffle(&mut self.rng);
        let order = std::mem::take(&mut self.order);
        let batch_size = self.config.batch_size;

        for (b, chunk) in order.chunks(batch_size).enumerate() {
            self.train_batch(chunk, lr).map_err(|e| Error::Run {
                epoch,
                batch: b,
                source: Box::new(e),
            })?;
        }
        self.order = order;

        let predicted = predict(&self.model, &self.data.test.features)?;
        let test_accuracy = accuracy(&predicted, &self.data.test.true_labels)?;
        let selected: Vec<bool> = self.last_weight.iter().map(|&w| w > 0.0).collect();
        let precision = label_precision(&selected, &self.clean)?;
        let n = self.last_weight.len().max(1) as f64;
        let zeroed = self.last_zeroed.iter().filter(|&&z| z).count() as f64 / n;
        let group_mean = |want_clean: bool| {
            let (sum, count) = self
                .last_weight
                .iter()
                .zip(&self.clean)
                .filter(|(_, &c)| c == want_clean)
                .fold((0.0, 0usize), |(s, c), (w, _)| (s + w, c + 1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        };
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            mean_train_loss: self.last_loss.iter().sum::<f64>() / n,
            test_accuracy,
            label_precision: precision.value,
            zeroed_fraction: zeroed,
            mean_weight_clean: group_mean(true),
            mean_weight_noisy: group_mean(false),
        };
        self.series.push(record.clone())?;

        if epoch == self.config.analysis_epoch() && self.config.noise.tau > 0.0 {
            let unc = (0..self.history.num_samples())
                .map(|i| self.history.variance_given_label(i))
                .collect::<Result<Vec<_>>>()?;
            self.quadrant = Some(quadrant_analysis(
                &self.last_loss,
                &unc,
                &self.clean,
                self.config.noise.tau,
                epoch,
            )?);
        }
        if self.config.dump_weights_epochs.contains(&epoch) {
            let rows = (0..self.last_weight.len())
                .map(|i| WeightRow {
                    sample_id: i,
                    weight: self.last_weight[i],
                    zeroed: self.last_zeroed[i],
                    is_clean: self.clean[i],
                })
                .collect();
            self.weight_dumps.push(WeightDump { epoch, rows });
        }
        Ok(record)
    }

    fn train_batch(&mut self, ids: &[usize], lr: f64) -> Result<()> {
        let batch = self.data.train.batch(ids)?;
        let probs = forward(&self.model, &batch.features)?;
        let losses = cross_entropy(&probs, &batch.labels)?;
        for (row, &id) in ids.iter().enumerate() {
            let p = probs.get(row, batch.labels[row]);
            let pred = argmax(probs.row(row));
            self.history.record(id, p, pred)?;
            if self.config.dump_history {
                self.history_dump.push(HistoryRow {
                    sample_id: id,
                    epoch: self.epoch,
                    prob_given_label: p,
                    predicted_label: pred,
                });
            }
            self.last_loss[id] = losses[row];
        }
        let weights = self.weights_for(&batch, &probs, &losses)?;
        for (row, &id) in ids.iter().enumerate() {
            self.last_weight[id] = weights.values[row];
            self.last_zeroed[id] = weights.zero_mask[row] || weights.values[row] == 0.0;
        }
        if weights.values.iter().any(|&w| w > 0.0) {
            sgd_step(&mut self.model, &batch, &weights.values, lr, &self.config.schedule)?;
        }
        Ok(())
    }

    /// Runs the remaining epochs and returns the full result.
    pub fn finish(mut self) -> Result<RunResult> {
        while self.epoch < self.config.epochs {
            self.run_epoch()?;
        }
        Ok(RunResult {
            series: self.series,
            quadrant: self.quadrant,
            history_dump: self.history_dump,
            weight_dumps: self.weight_dumps,
            train: self.data.train.clone(),
        })
    }
}

/// Trains `config.method` for one seed on already-corrupted data.
pub fn run_single(config: &ExperimentConfig, data: &Split, seed: u64) -> Result<RunResult> {
    Trainer::new(config, data, seed)?.finish()
}

/// Runs every `(method, seed)` pair. Seeds share one corrupted dataset across
/// methods. Runs execute on separate threads; results are ordered by method
/// (in the order given) then seed.
pub fn run_methods(config: &ExperimentConfig, methods: &[Method]) -> Result<Vec<RunResult>> {
    config.validate()?;
    let clean = load_clean_data(config)?;
    let per_seed: Vec<Split> = config
        .seeds
        .iter()
        .map(|&s| prepare_run_data(config, &clean, s))
        .collect::<Result<_>>()?;
    let configs: Vec<ExperimentConfig> = methods.iter().map(|&m| config.with_method(m)).collect();

    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .flat_map(|cfg| {
                config
                    .seeds
                    .iter()
                    .zip(&per_seed)
                    .map(move |(&seed, data)| (cfg, seed, data))
            })
            .map(|(cfg, seed, data)| scope.spawn(move || run_single(cfg, data, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

/// Runs the configured method for every seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    run_methods(config, &[config.method])
}
