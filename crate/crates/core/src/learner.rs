//! Desk-scale classifiers with analytic per-sample gradients, Adam and
//! early-stopped centralized training.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::data::Dataset;
use crate::error::{FederationError, LearnerError};
use crate::stream::StreamFactory;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Multinomial logistic regression.
    Logistic,
    /// One ReLU hidden layer.
    Mlp { hidden_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Result<Self, LearnerError> {
        Self::new(ModelKind::Logistic, input_dim, num_classes)
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Result<Self, LearnerError> {
        Self::new(ModelKind::Mlp { hidden_dim }, input_dim, num_classes)
    }

    pub fn new(kind: ModelKind, input_dim: usize, num_classes: usize) -> Result<Self, LearnerError> {
        if input_dim == 0 {
            return Err(LearnerError::InvalidSpec("input_dim must be at least 1".into()));
        }
        if num_classes < 2 {
            return Err(LearnerError::InvalidSpec("num_classes must be at least 2".into()));
        }
        if let ModelKind::Mlp { hidden_dim: 0 } = kind {
            return Err(LearnerError::InvalidSpec("hidden_dim must be at least 1".into()));
        }
        Ok(Self {
            kind,
            input_dim,
            num_classes,
        })
    }

    pub fn layout(&self) -> Vec<Segment> {
        let (d, k) = (self.input_dim, self.num_classes);
        let mut segments = Vec::new();
        let mut offset = 0;
        let mut push = |name: &'static str, rows: usize, cols: usize, is_bias: bool| {
            segments.push(Segment {
                name,
                offset,
                rows,
                cols,
                is_bias,
            });
            offset += rows * cols;
        };
        match self.kind {
            ModelKind::Logistic => {
                push("weight", k, d, false);
                push("bias", k, 1, true);
            }
            ModelKind::Mlp { hidden_dim: h } => {
                push("hidden.weight", h, d, false);
                push("hidden.bias", h, 1, true);
                push("output.weight", k, h, false);
                push("output.bias", k, 1, true);
            }
        }
        segments
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(Segment::len).sum()
    }
}

/// A named slice `[offset, offset + rows * cols)` of a [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub is_bias: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter vector with the layout of the model that owns it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Segment>,
}

impl ParamVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            values: vec![0.0; spec.num_params()],
            layout: spec.layout(),
        }
    }

    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self, LearnerError> {
        let layout = spec.layout();
        let expected: usize = layout.iter().map(Segment::len).sum();
        if values.len() != expected {
            return Err(LearnerError::ParamMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<R: RngCore + ?Sized>(spec: &ModelSpec, rng: &mut R) -> ParamVector {
    let mut params = ParamVector::zeros(spec);
    for seg in spec.layout() {
        if seg.is_bias {
            continue;
        }
        let bound = glorot_bound(seg.cols, seg.rows);
        for v in &mut params.values[seg.range()] {
            *v = rng.random_range(-bound..=bound);
        }
    }
    params
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Softmax via the log-sum-exp shift. Returns the probabilities and
/// `logsumexp(logits)`.
pub fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    let lse = max + libm::log(total);
    (exps.into_iter().map(|e| e / total).collect(), lse)
}

struct Forward {
    logits: Vec<f64>,
    /// Hidden pre-activations (MLP only).
    hidden_pre: Vec<f64>,
    /// Hidden activations (MLP only).
    hidden: Vec<f64>,
}

fn affine(weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    bias.iter()
        .enumerate()
        .map(|(r, b)| b + vecops::dot(&weights[r * cols..(r + 1) * cols], x))
        .collect()
}

fn forward(params: &ParamVector, spec: &ModelSpec, x: &[f64]) -> Forward {
    let v = &params.values;
    let layout = &params.layout;
    match spec.kind {
        ModelKind::Logistic => Forward {
            logits: affine(&v[layout[0].range()], &v[layout[1].range()], x),
            hidden_pre: Vec::new(),
            hidden: Vec::new(),
        },
        ModelKind::Mlp { .. } => {
            let hidden_pre = affine(&v[layout[0].range()], &v[layout[1].range()], x);
            let hidden: Vec<f64> = hidden_pre.iter().map(|a| a.max(0.0)).collect();
            let logits = affine(&v[layout[2].range()], &v[layout[3].range()], &hidden);
            Forward {
                logits,
                hidden_pre,
                hidden,
            }
        }
    }
}

/// Class probabilities for one feature row.
pub fn predict_proba(params: &ParamVector, spec: &ModelSpec, x: &[f64]) -> Vec<f64> {
    softmax(&forward(params, spec, x).logits).0
}

fn check_inputs(spec: &ModelSpec, params: &ParamVector, data: &Dataset, batch: &[usize]) -> Result<(), LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    if data.dim() != spec.input_dim {
        return Err(LearnerError::InputMismatch {
            expected: spec.input_dim,
            got: data.dim(),
        });
    }
    let expected = spec.num_params();
    if params.len() != expected {
        return Err(LearnerError::ParamMismatch {
            expected,
            got: params.len(),
        });
    }
    for &i in batch {
        let label = data.label(i);
        if label >= spec.num_classes {
            return Err(LearnerError::LabelOutOfRange {
                label,
                num_classes: spec.num_classes,
            });
        }
        if data.row(i).iter().any(|x| !x.is_finite()) {
            return Err(LearnerError::NonFiniteFeature(i));
        }
    }
    Ok(())
}

fn sample_loss_grad(params: &ParamVector, spec: &ModelSpec, x: &[f64], y: usize) -> (f64, Vec<f64>) {
    let fwd = forward(params, spec, x);
    let (probs, lse) = softmax(&fwd.logits);
    let loss = lse - fwd.logits[y];
    let mut dz = probs;
    dz[y] -= 1.0;

    let mut grad = vec![0.0; params.len()];
    let layout = &params.layout;
    match spec.kind {
        ModelKind::Logistic => {
            let (w, b) = (layout[0], layout[1]);
            for (k, &g) in dz.iter().enumerate() {
                let row = &mut grad[w.offset + k * w.cols..w.offset + (k + 1) * w.cols];
                row.iter_mut().zip(x).for_each(|(r, xi)| *r = g * xi);
                grad[b.offset + k] = g;
            }
        }
        ModelKind::Mlp { hidden_dim } => {
            let (w1, b1, w2, b2) = (layout[0], layout[1], layout[2], layout[3]);
            let w2_vals = &params.values[w2.range()];
            let mut dh = vec![0.0; hidden_dim];
            for (k, &g) in dz.iter().enumerate() {
                let row = &mut grad[w2.offset + k * hidden_dim..w2.offset + (k + 1) * hidden_dim];
                row.iter_mut().zip(&fwd.hidden).for_each(|(r, h)| *r = g * h);
                grad[b2.offset + k] = g;
                for (j, d) in dh.iter_mut().enumerate() {
                    *d += w2_vals[k * hidden_dim + j] * g;
                }
            }
            for (j, d) in dh.iter().enumerate() {
                let da = if fwd.hidden_pre[j] > 0.0 { *d } else { 0.0 };
                let row = &mut grad[w1.offset + j * w1.cols..w1.offset + (j + 1) * w1.cols];
                row.iter_mut().zip(x).for_each(|(r, xi)| *r = da * xi);
                grad[b1.offset + j] = da;
            }
        }
    }
    (loss, grad)
}

/// Per-sample cross-entropy losses and gradients, in batch order.
pub fn per_sample_loss_grads(
    params: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    batch: &[usize],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), LearnerError> {
    check_inputs(spec, params, data, batch)?;
    Ok(batch
        .iter()
        .map(|&i| sample_loss_grad(params, spec, data.row(i), data.label(i)))
        .unzip())
}

pub fn per_sample_grads(
    params: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    batch: &[usize],
) -> Result<Vec<Vec<f64>>, LearnerError> {
    per_sample_loss_grads(params, spec, data, batch).map(|(_, g)| g)
}

/// Mean cross-entropy over the batch and its gradient. The gradient is the
/// in-order sum of per-sample gradients divided by the batch size.
pub fn loss_and_grad(
    params: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    batch: &[usize],
) -> Result<(f64, Vec<f64>), LearnerError> {
    let (losses, grads) = per_sample_loss_grads(params, spec, data, batch)?;
    let n = batch.len() as f64;
    let mut total = vec![0.0; params.len()];
    for g in &grads {
        vecops::add_assign(&mut total, g);
    }
    total.iter_mut().for_each(|g| *g /= n);
    Ok((losses.iter().sum::<f64>() / n, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState) {
    state.t += 1;
    let bc1 = 1.0 - libm::pow(state.beta1, state.t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, state.t as f64);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (libm::sqrt(v_hat) + state.eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopState {
    pub best_val_acc: f64,
    pub epochs_since_improve: usize,
    pub patience: usize,
}

impl EarlyStopState {
    pub const DEFAULT_PATIENCE: usize = 7;

    pub fn new(patience: usize) -> Self {
        Self {
            best_val_acc: f64::NEG_INFINITY,
            epochs_since_improve: 0,
            patience,
        }
    }

    /// Records an epoch's validation accuracy. Returns `(improved, stop)`.
    pub fn observe(&mut self, val_acc: f64) -> (bool, bool) {
        if val_acc > self.best_val_acc {
            self.best_val_acc = val_acc;
            self.epochs_since_improve = 0;
            (true, false)
        } else {
            self.epochs_since_improve += 1;
            (false, self.epochs_since_improve > self.patience)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Predicted labels and per-class probabilities for every row.
pub fn predict(params: &ParamVector, spec: &ModelSpec, data: &Dataset) -> (Vec<usize>, Vec<Vec<f64>>) {
    (0..data.len())
        .map(|i| {
            let p = predict_proba(params, spec, data.row(i));
            (argmax(&p), p)
        })
        .unzip()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(params: &ParamVector, spec: &ModelSpec, data: &Dataset) -> Evaluation {
    if data.is_empty() {
        return Evaluation {
            accuracy: 0.0,
            loss: 0.0,
        };
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..data.len() {
        let fwd = forward(params, spec, data.row(i));
        let (probs, lse) = softmax(&fwd.logits);
        if argmax(&probs) == data.label(i) {
            correct += 1;
        }
        loss += lse - fwd.logits[data.label(i)];
    }
    Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss: loss / data.len() as f64,
    }
}

/// Statistics of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
}

/// Plain minibatch step: mean gradient, then Adam.
pub fn plain_step(
    params: &mut ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    batch: &[usize],
    adam: &mut AdamState,
) -> Result<StepStats, LearnerError> {
    let (loss, grad) = loss_and_grad(params, spec, data, batch)?;
    adam_step(&mut params.values, &grad, adam);
    Ok(StepStats {
        loss,
        grad_norm: vecops::l2_norm(&grad),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub mean_grad_norm: f64,
    pub steps: usize,
}

/// Shuffles `0..data.len()` with `shuffle_rng` and applies `step` to each
/// consecutive minibatch of at most `batch_size` indices.
pub fn run_epoch<R, F, E>(
    params: &mut ParamVector,
    data: &Dataset,
    batch_size: usize,
    shuffle_rng: &mut R,
    mut step: F,
) -> Result<EpochStats, E>
where
    R: RngCore + ?Sized,
    F: FnMut(&mut ParamVector, &[usize]) -> Result<StepStats, E>,
{
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(shuffle_rng);
    let mut stats = EpochStats::default();
    for batch in order.chunks(batch_size.max(1)) {
        let s = step(params, batch)?;
        stats.mean_loss += s.loss;
        stats.mean_grad_norm += s.grad_norm;
        stats.steps += 1;
    }
    if stats.steps > 0 {
        stats.mean_loss /= stats.steps as f64;
        stats.mean_grad_norm /= stats.steps as f64;
    }
    Ok(stats)
}

/// Stream name for the minibatch order of `client` in global epoch `epoch`.
/// Centralized training uses client 0.
pub fn shuffle_stream_name(client: usize, epoch: usize) -> String {
    format!("shuffle/client/{client}/epoch/{epoch}")
}

pub const INIT_STREAM: &str = "model/init";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub mean_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Epoch loop with early stopping on validation accuracy. Returns the
/// parameters of the best validation epoch. `on_epoch` sees the parameters
/// after every epoch.
pub fn train_centralized(
    spec: &ModelSpec,
    train: &Dataset,
    val: &Dataset,
    hyper: &TrainHyper,
    streams: &StreamFactory,
    mut on_epoch: impl FnMut(usize, &ParamVector),
) -> Result<(ParamVector, TrainHistory), FederationError> {
    if train.is_empty() {
        return Err(LearnerError::EmptyTrainingSet.into());
    }
    let mut params = init_params(spec, &mut streams.stream(INIT_STREAM)?);
    let mut adam = AdamState::new(params.len(), hyper.learning_rate);
    let mut early = EarlyStopState::new(hyper.patience);
    let mut best = params.clone();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    for epoch in 0..hyper.epochs {
        let mut rng = streams.stream(&shuffle_stream_name(0, epoch))?;
        let stats = run_epoch(&mut params, train, hyper.batch_size, &mut rng, |p, b| {
            plain_step(p, spec, train, b, &mut adam)
        })?;
        on_epoch(epoch, &params);
        let eval = evaluate(&params, spec, val);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            val_accuracy: eval.accuracy,
            val_loss: eval.loss,
            mean_grad_norm: stats.mean_grad_norm,
        });
        let (improved, stop) = early.observe(eval.accuracy);
        if improved {
            best = params.clone();
            history.best_epoch = epoch;
        }
        if stop {
            history.stopped_early = true;
            break;
        }
    }
    Ok((best, history))
}
