//! Fully connected classifier with rectified hidden layers and a softmax head.
//!
//! Everything is `f64`. Layer `l` maps `dims[l]` inputs to `dims[l + 1]`
//! outputs as `z = a W + b`, with `W` stored row-major as `dims[l] x dims[l + 1]`.
//! Training uses per-sample weighted cross-entropy averaged over the batch
//! size, so unit weights give the ordinary minibatch loss.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp on probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Copies the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Learning-rate step schedule plus the optimizer constants that go with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub initial_lr: f64,
    /// Epochs (1-based) at which the rate is divided by `decay_factor`.
    pub milestones: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 0.1,
            milestones: vec![50, 75],
            decay_factor: 5.0,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config("initial_lr must be positive"));
        }
        if !(self.decay_factor > 1.0 && self.decay_factor.is_finite()) {
            return Err(Error::config("decay_factor must be > 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.milestones.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("milestones must be sorted"));
        }
        Ok(())
    }
}

/// Learning rate in effect during `epoch` (1-based).
pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    let passed = schedule.milestones.iter().filter(|&&m| m <= epoch).count();
    schedule.initial_lr / schedule.decay_factor.powi(passed as i32)
}

/// A minibatch drawn from a dataset.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sample_ids: Vec<usize>,
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(sample_ids: Vec<usize>, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() != sample_ids.len() || labels.len() != sample_ids.len() {
            return Err(Error::shape(format!(
                "batch has {} ids, {} feature rows, {} labels",
                sample_ids.len(),
                features.rows(),
                labels.len()
            )));
        }
        let mut sorted = sample_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::shape("duplicate sample id in batch"));
        }
        Ok(Self {
            sample_ids,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    weight_velocity: Vec<Matrix>,
    bias_velocity: Vec<Vec<f64>>,
}

/// Parameter gradients with the same layout as [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Model) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// All gradient entries, layer by layer (weights then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Builds a model with scaled-uniform weights, `U(-l, l)` with
/// `l = sqrt(6 / (fan_in + fan_out))`, and zero biases.
pub fn init_model(layer_dims: &[usize], seed: u64) -> Result<Model> {
    if layer_dims.len() < 2 {
        return Err(Error::config(format!(
            "need at least an input and an output dimension, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::config(format!(
            "layer dimensions must be positive, got {layer_dims:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit)
            .map_err(|e| Error::config(format!("bad init range: {e}")))?;
        let data = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
        weights.push(Matrix::from_vec(fan_in, fan_out, data)?);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(Model::from_parts(layer_dims.to_vec(), weights, biases))
}

impl Model {
    fn from_parts(layer_dims: Vec<usize>, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Self {
        let weight_velocity = weights
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        let bias_velocity = biases.iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            layer_dims,
            weights,
            biases,
            weight_velocity,
            bias_velocity,
        }
    }

    /// Builds a model from explicit parameters; momentum starts at zero.
    pub fn from_parameters(weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::config("need one bias vector per weight matrix"));
        }
        let mut dims = vec![weights[0].rows()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.rows() != *dims.last().unwrap() || b.len() != w.cols() || w.cols() == 0 {
                return Err(Error::shape("layer shapes do not chain"));
            }
            dims.push(w.cols());
        }
        Ok(Self::from_parts(dims, weights, biases))
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn weight_velocity(&self) -> &[Matrix] {
        &self.weight_velocity
    }

    pub fn bias_velocity(&self) -> &[Vec<f64>] {
        &self.bias_velocity
    }

    /// Every parameter, layer by layer (weights then biases).
    pub fn flatten_parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Forward pass keeping every layer's post-activation output;
    /// `acts[0]` is the input and the last entry holds softmax probabilities.
    fn forward_all(&self, features: &Matrix) -> Result<Vec<Matrix>> {
        if features.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "feature width {} does not match input dim {}",
                features.cols(),
                self.input_dim()
            )));
        }
        let n_layers = self.weights.len();
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(features.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = affine(acts.last().unwrap(), w, b);
            if l + 1 < n_layers {
                z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                for r in 0..z.rows() {
                    softmax_in_place(z.row_mut(r));
                }
            }
            acts.push(z);
        }
        Ok(acts)
    }
}

fn affine(input: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(input.rows(), w.cols());
    for r in 0..input.rows() {
        let x = input.row(r);
        let o = out.row_mut(r);
        o.copy_from_slice(b);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (oj, &wij) in o.iter_mut().zip(w.row(i)) {
                *oj += xi * wij;
            }
        }
    }
    out
}

/// Numerically stable softmax over one row of logits.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Class probabilities, one row per input row.
pub fn forward(model: &Model, features: &Matrix) -> Result<Matrix> {
    Ok(model.forward_all(features)?.pop().unwrap())
}

/// Per-sample `-ln p[label]` with `p` clamped below at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<Vec<f64>> {
    if probs.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if y >= probs.cols() {
                return Err(Error::shape(format!(
                    "label {y} out of range for {} classes",
                    probs.cols()
                )));
            }
            Ok(-probs.get(i, y).max(PROB_FLOOR).ln())
        })
        .collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted class for every row.
pub fn predict(model: &Model, features: &Matrix) -> Result<Vec<usize>> {
    let probs = forward(model, features)?;
    Ok((0..probs.rows()).map(|r| argmax(probs.row(r))).collect())
}

/// How each sample's output error is scaled before backpropagation.
enum Scaling<'a> {
    Unit,
    Weighted(&'a [f64]),
}

fn backprop(model: &Model, batch: &Batch, scaling: Scaling<'_>) -> Result<Gradients> {
    let n = batch.len();
    if let Scaling::Weighted(w) = scaling {
        if w.len() != n {
            return Err(Error::shape(format!("{} weights for {n} samples", w.len())));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::numeric(format!(
                "sample weights must be finite and non-negative, got {bad}"
            )));
        }
    }
    let k = model.num_classes();
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= k) {
        return Err(Error::shape(format!("label {bad} out of range for {k} classes")));
    }
    let acts = model.forward_all(&batch.features)?;
    let mut grads = Gradients::zeros_like(model);
    if n == 0 {
        return Ok(grads);
    }
    let inv_n = 1.0 / n as f64;

    // dL/dz at the output: (w_i / N) (p_i - onehot(y_i))
    let mut delta = acts.last().unwrap().clone();
    for (i, &y) in batch.labels.iter().enumerate() {
        let row = delta.row_mut(i);
        row[y] -= 1.0;
        match scaling {
            Scaling::Unit => row.iter_mut().for_each(|v| *v *= inv_n),
            Scaling::Weighted(w) => {
                let s = w[i] * inv_n;
                row.iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    for l in (0..model.weights.len()).rev() {
        let input = &acts[l];
        let gw = &mut grads.weights[l];
        for r in 0..n {
            let a = input.row(r);
            let d = delta.row(r);
            for (i, &ai) in a.iter().enumerate() {
                if ai == 0.0 {
                    continue;
                }
                for (g, &dj) in gw.row_mut(i).iter_mut().zip(d) {
                    *g += ai * dj;
                }
            }
            for (g, &dj) in grads.biases[l].iter_mut().zip(d) {
                *g += dj;
            }
        }
        if l == 0 {
            break;
        }
        let w = &model.weights[l];
        let mut prev = Matrix::zeros(n, w.rows());
        for r in 0..n {
            let d = delta.row(r);
            let a = input.row(r);
            for (i, p) in prev.row_mut(r).iter_mut().enumerate() {
                // ReLU derivative, taken as 0 at the kink
                if a[i] > 0.0 {
                    *p = w.row(i).iter().zip(d).map(|(wij, dj)| wij * dj).sum();
                }
            }
        }
        delta = prev;
    }

    if grads.flatten().iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient"));
    }
    Ok(grads)
}

/// Exact gradient of `(1/N) * sum_i w_i * loss_i` with respect to every parameter.
pub fn weighted_gradients(model: &Model, batch: &Batch, sample_weights: &[f64]) -> Result<Gradients> {
    backprop(model, batch, Scaling::Weighted(sample_weights))
}

/// Gradient of the plain batch-mean loss.
pub fn gradients(model: &Model, batch: &Batch) -> Result<Gradients> {
    backprop(model, batch, Scaling::Unit)
}

fn apply_update(model: &mut Model, grads: &Gradients, lr: f64, momentum: f64, weight_decay: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::numeric(format!("learning rate must be positive, got {lr}")));
    }
    for l in 0..model.weights.len() {
        let params = model.weights[l].as_mut_slice();
        let vel = model.weight_velocity[l].as_mut_slice();
        for ((p, v), &g) in params.iter_mut().zip(vel).zip(grads.weights[l].as_slice()) {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
        let params = &mut model.biases[l];
        let vel = &mut model.bias_velocity[l];
        for ((p, v), &g) in params.iter_mut().zip(vel).zip(&grads.biases[l]) {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
    }
    if model.flatten_parameters().iter().any(|p| !p.is_finite()) {
        return Err(Error::numeric("parameters became non-finite after update"));
    }
    Ok(())
}

/// One weighted momentum-SGD step on `(1/N) * sum_i w_i * loss_i`.
///
/// Velocity accumulates `grad + weight_decay * param`, then
/// `param -= lr * velocity`. Samples with weight 0 contribute nothing.
pub fn sgd_step(
    model: &mut Model,
    batch: &Batch,
    sample_weights: &[f64],
    lr: f64,
    schedule: &LrSchedule,
) -> Result<()> {
    let grads = weighted_gradients(model, batch, sample_weights)?;
    apply_update(model, &grads, lr, schedule.momentum, schedule.weight_decay)
}

/// The same step as [`sgd_step`] without per-sample weights.
pub fn sgd_step_unweighted(model: &mut Model, batch: &Batch, lr: f64, schedule: &LrSchedule) -> Result<()> {
    let grads = gradients(model, batch)?;
    apply_update(model, &grads, lr, schedule.momentum, schedule.weight_decay)
}
