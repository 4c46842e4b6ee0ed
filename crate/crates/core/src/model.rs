//! The digit classifier: four conv stages and a dense head, its training
//! loop, prediction and checkpoint format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::features::{FeatureMap, Standardization, FEATURE_COLS, FEATURE_ROWS};
use crate::nn::{
    adam_step, batchnorm_backward, batchnorm_forward, batchnorm_infer, conv2d_backward, conv2d_forward,
    dense_backward, dense_forward, dropout, dropout_backward, l2_penalty, maxpool_backward, maxpool_forward,
    relu, relu_backward, softmax, softmax_cross_entropy, AdamState, BatchNorm, BatchNormCache, Conv2d, Dense,
    Mode, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub conv_filters: Vec<usize>,
    pub kernel: (usize, usize),
    pub pool: (usize, usize),
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub l2_factor: f64,
    /// Number of leading conv layers whose kernels carry the L2 term.
    pub l2_layers: usize,
    pub classes: usize,
    /// `(height, width, channels)`
    pub input_shape: (usize, usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_filters: vec![24, 32, 64, 128],
            kernel: (3, 3),
            pool: (2, 2),
            dense_units: 128,
            dropout_rate: 0.2,
            l2_factor: 0.1,
            l2_layers: 1,
            classes: NUM_CLASSES,
            input_shape: (FEATURE_ROWS, FEATURE_COLS, 1),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return bad("conv_filters must be a non-empty list of positive counts");
        }
        if self.kernel.0 % 2 == 0 || self.kernel.1 % 2 == 0 {
            return bad("kernel sides must be odd for same padding");
        }
        if self.pool.0 == 0 || self.pool.1 == 0 {
            return bad("pool sides must be positive");
        }
        if self.dense_units == 0 || self.classes < 2 {
            return bad("dense_units must be positive and classes at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if !(self.l2_factor >= 0.0 && self.l2_factor.is_finite()) {
            return bad("l2_factor must be finite and non-negative");
        }
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return bad("input_shape must be positive");
        }
        let (fh, fw) = self.final_spatial();
        if fh == 0 || fw == 0 {
            return bad("input is too small for the number of pooling stages");
        }
        Ok(())
    }

    /// `(height, width)` entering each stage followed by the final output.
    pub fn stage_sizes(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![(self.input_shape.0, self.input_shape.1)];
        for _ in &self.conv_filters {
            let (h, w) = *sizes.last().unwrap();
            sizes.push((h / self.pool.0, w / self.pool.1));
        }
        sizes
    }

    fn final_spatial(&self) -> (usize, usize) {
        *self.stage_sizes().last().unwrap()
    }

    pub fn flatten_len(&self) -> usize {
        let (h, w) = self.final_spatial();
        h * w * self.conv_filters.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation-loss improvement.
    pub early_stop_patience: Option<usize>,
    /// Fit per-row standardization on the training set before training.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 32,
            lr: 1e-4,
            seed: 0,
            early_stop_patience: None,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.batch_size == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("batch_size and lr must be positive".into()));
        }
        if self.batch_size > train_len {
            return Err(Error::InvalidConfig(format!(
                "batch_size {} exceeds the {train_len} training samples",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// One labeled feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub map: FeatureMap,
    pub label: usize,
}

impl Sample {
    pub fn new(map: FeatureMap, label: usize) -> Self {
        Sample { map, label }
    }
}

/// Losses are means over the epoch's training batches (train mode, dropout
/// active); `train_loss = train_ce + l2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_ce: f64,
    pub l2: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights the model holds after training.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub conv: Conv2d,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub stages: Vec<Stage>,
    pub hidden: Dense,
    pub output: Dense,
    pub standardization: Standardization,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub optimizer: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub digit: usize,
    pub probabilities: Vec<f64>,
}

struct StageCache {
    input: Tensor,
    bn_cache: BatchNormCache,
    bn_out: Tensor,
    argmax: Vec<usize>,
}

/// Intermediate values of a train-mode forward pass.
pub struct ForwardCache {
    stages: Vec<StageCache>,
    pooled_shape: Vec<usize>,
    flat: Tensor,
    hidden_pre: Tensor,
    mask: Vec<f64>,
    dropped: Tensor,
}

pub fn build_model(config: &ModelConfig, seed: u64) -> Result<ModelState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (kh, kw) = config.kernel;
    let mut in_ch = config.input_shape.2;
    let mut stages = Vec::with_capacity(config.conv_filters.len());
    for (i, &out_ch) in config.conv_filters.iter().enumerate() {
        let mut conv = Conv2d::he_normal(in_ch, out_ch, kh, kw, &mut rng);
        if i < config.l2_layers {
            conv.l2_factor = config.l2_factor;
        }
        stages.push(Stage {
            conv,
            bn: BatchNorm::new(out_ch),
        });
        in_ch = out_ch;
    }
    let hidden = Dense::he_normal(config.flatten_len(), config.dense_units, &mut rng);
    let output = Dense::he_normal(config.dense_units, config.classes, &mut rng);
    Ok(ModelState {
        config: config.clone(),
        stages,
        hidden,
        output,
        standardization: Standardization::identity(config.input_shape.0),
        seed,
        history: Vec::new(),
        optimizer: None,
    })
}

impl ModelState {
    /// Trainable tensors in build order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = Vec::new();
        for s in &self.stages {
            p.extend([&s.conv.kernels, &s.conv.bias, &s.bn.gamma, &s.bn.beta]);
        }
        p.extend([&self.hidden.weights, &self.hidden.bias, &self.output.weights, &self.output.bias]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = Vec::new();
        for s in &mut self.stages {
            p.push(&mut s.conv.kernels);
            p.push(&mut s.conv.bias);
            p.push(&mut s.bn.gamma);
            p.push(&mut s.bn.beta);
        }
        p.push(&mut self.hidden.weights);
        p.push(&mut self.hidden.bias);
        p.push(&mut self.output.weights);
        p.push(&mut self.output.bias);
        p
    }

    /// Every persisted tensor (parameters and running statistics) with its
    /// name, in build order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            out.push((format!("stage{i}.conv.kernels"), &s.conv.kernels));
            out.push((format!("stage{i}.conv.bias"), &s.conv.bias));
            out.push((format!("stage{i}.bn.gamma"), &s.bn.gamma));
            out.push((format!("stage{i}.bn.beta"), &s.bn.beta));
            out.push((format!("stage{i}.bn.running_mean"), &s.bn.running_mean));
            out.push((format!("stage{i}.bn.running_var"), &s.bn.running_var));
        }
        out.push(("hidden.weights".into(), &self.hidden.weights));
        out.push(("hidden.bias".into(), &self.hidden.bias));
        out.push(("output.weights".into(), &self.output.weights));
        out.push(("output.bias".into(), &self.output.bias));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.push(&mut s.conv.kernels);
            out.push(&mut s.conv.bias);
            out.push(&mut s.bn.gamma);
            out.push(&mut s.bn.beta);
            out.push(&mut s.bn.running_mean);
            out.push(&mut s.bn.running_var);
        }
        out.push(&mut self.hidden.weights);
        out.push(&mut self.hidden.bias);
        out.push(&mut self.output.weights);
        out.push(&mut self.output.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let (h, w, c) = self.config.input_shape;
        match *input.shape() {
            [n, ih, iw, ic] if n > 0 && (ih, iw, ic) == (h, w, c) => Ok(()),
            _ => Err(Error::ShapeMismatch(format!(
                "model expects [N, {h}, {w}, {c}], got {:?}",
                input.shape()
            ))),
        }
    }

    /// Inference-mode logits: running batch-norm statistics, no dropout.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut x = input.clone();
        for s in &self.stages {
            let z = conv2d_forward(&x, &s.conv)?;
            let a = relu(&batchnorm_infer(&z, &s.bn)?);
            x = maxpool_forward(&a, self.config.pool)?.0;
        }
        let n = x.shape()[0];
        let flat = x.reshape(&[n, self.config.flatten_len()])?;
        let h = relu(&dense_forward(&flat, &self.hidden)?);
        dense_forward(&h, &self.output)
    }

    /// Logits for `input`. Train mode updates batch-norm running statistics,
    /// samples a dropout mask from `rng` and returns the backward cache.
    pub fn forward(
        &mut self,
        input: &Tensor,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Option<ForwardCache>)> {
        if mode == Mode::Infer {
            return Ok((self.infer(input)?, None));
        }
        self.check_input(input)?;
        let pool = self.config.pool;
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.stages.len());
        for s in &mut self.stages {
            let z = conv2d_forward(&x, &s.conv)?;
            let (bn_out, bn_cache) = batchnorm_forward(&z, &mut s.bn, Mode::Train)?;
            let a = relu(&bn_out);
            let (pooled, argmax) = maxpool_forward(&a, pool)?;
            caches.push(StageCache {
                input: x,
                bn_cache: bn_cache.expect("train mode returns a cache"),
                bn_out,
                argmax,
            });
            x = pooled;
        }
        let pooled_shape = x.shape().to_vec();
        let n = pooled_shape[0];
        let flat = x.reshape(&[n, self.config.flatten_len()])?;
        let hidden_pre = dense_forward(&flat, &self.hidden)?;
        let (dropped, mask) = dropout(&relu(&hidden_pre), self.config.dropout_rate, Mode::Train, rng);
        let logits = dense_forward(&dropped, &self.output)?;
        Ok((
            logits,
            Some(ForwardCache {
                stages: caches,
                pooled_shape,
                flat,
                hidden_pre,
                mask,
                dropped,
            }),
        ))
    }

    /// Gradients of the loss with respect to every trainable tensor, in the
    /// order of [`ModelState::params`]. `grad_logits` is the loss gradient at
    /// the logits; the L2 term is added to the regularized kernels.
    pub fn backward(&self, cache: &ForwardCache, grad_logits: &Tensor) -> Result<Vec<Tensor>> {
        let out_g = dense_backward(grad_logits, &cache.dropped, &self.output)?;
        let g = dropout_backward(&out_g.input, &cache.mask);
        let g = relu_backward(&g, &cache.hidden_pre);
        let hid_g = dense_backward(&g, &cache.flat, &self.hidden)?;
        let mut g = hid_g.input.reshape(&cache.pooled_shape)?;

        let mut stage_grads = Vec::with_capacity(self.stages.len());
        for (s, c) in self.stages.iter().zip(&cache.stages).rev() {
            let ga = maxpool_backward(&g, &c.argmax, c.bn_out.shape())?;
            let gz = relu_backward(&ga, &c.bn_out);
            let bn_g = batchnorm_backward(&gz, &c.bn_cache, &s.bn)?;
            let conv_g = conv2d_backward(&bn_g.input, &c.input, &s.conv)?;
            g = conv_g.input;
            stage_grads.push((conv_g.kernels, conv_g.bias, bn_g.gamma, bn_g.beta));
        }
        stage_grads.reverse();

        let regularized: Vec<&Conv2d> = self.stages.iter().map(|s| &s.conv).collect();
        let (_, l2_grads) = l2_penalty(&regularized);
        let mut grads = Vec::with_capacity(4 * self.stages.len() + 4);
        for ((mut gk, gb, gg, gbeta), l2g) in stage_grads.into_iter().zip(l2_grads) {
            for (a, b) in gk.data_mut().iter_mut().zip(l2g.data()) {
                *a += b;
            }
            grads.extend([gk, gb, gg, gbeta]);
        }
        grads.extend([hid_g.weights, hid_g.bias, out_g.weights, out_g.bias]);
        Ok(grads)
    }

    /// Current L2 penalty over all conv kernels (unregularized layers
    /// contribute zero).
    pub fn l2_value(&self) -> f64 {
        let convs: Vec<&Conv2d> = self.stages.iter().map(|s| &s.conv).collect();
        l2_penalty(&convs).0
    }

    /// Standardizes and stacks feature maps into an `N x H x W x 1` batch.
    pub fn batch_tensor(&self, maps: &[&FeatureMap]) -> Result<Tensor> {
        let (h, w, c) = self.config.input_shape;
        if c != 1 || (h, w) != (FEATURE_ROWS, FEATURE_COLS) {
            return Err(Error::ShapeMismatch(format!(
                "feature maps are {FEATURE_ROWS}x{FEATURE_COLS}x1, model expects {h}x{w}x{c}"
            )));
        }
        let mut data = Vec::with_capacity(maps.len() * h * w);
        for m in maps {
            data.extend(self.standardization.apply(m).to_vec());
        }
        Tensor::from_vec(&[maps.len(), h, w, 1], data)
    }

    pub fn predict(&self, map: &FeatureMap) -> Result<Prediction> {
        Ok(self.predict_batch(&[map])?.remove(0))
    }

    /// Predicts each map; the digit is the first index of the largest
    /// probability.
    pub fn predict_batch(&self, maps: &[&FeatureMap]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(maps.len());
        for chunk in maps.chunks(EVAL_CHUNK) {
            let probs = softmax(&self.infer(&self.batch_tensor(chunk)?)?)?;
            for row in probs.data().chunks_exact(self.config.classes) {
                out.push(Prediction {
                    digit: argmax_first(row),
                    probabilities: row.to_vec(),
                });
            }
        }
        Ok(out)
    }

    /// Mean cross-entropy and accuracy (fraction) in inference mode.
    pub fn evaluate_loss(&self, samples: &[Sample]) -> Result<(f64, f64)> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("cannot evaluate an empty set".into()));
        }
        let mut loss = 0.0;
        let mut correct = 0usize;
        for chunk in samples.chunks(EVAL_CHUNK) {
            let maps: Vec<&FeatureMap> = chunk.iter().map(|s| &s.map).collect();
            let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
            let logits = self.infer(&self.batch_tensor(&maps)?)?;
            let (l, _) = softmax_cross_entropy(&logits, &labels)?;
            loss += l * chunk.len() as f64;
            correct += count_correct(&logits, &labels);
        }
        let n = samples.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }
}

const EVAL_CHUNK: usize = 64;

fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks_exact(k)
        .zip(labels)
        .filter(|(row, &l)| argmax_first(row) == l)
        .count()
}

/// Batch boundaries for `n` samples; a trailing batch of one is merged into
/// the previous batch so batch normalization always sees two or more.
fn batch_ranges(n: usize, batch: usize) -> Vec<std::ops::Range<usize>> {
    let mut ranges: Vec<_> = (0..n).step_by(batch).map(|s| s..(s + batch).min(n)).collect();
    if ranges.len() > 1 && ranges.last().is_some_and(|r| r.len() == 1) {
        let last = ranges.pop().unwrap();
        ranges.last_mut().unwrap().end = last.end;
    }
    ranges
}

/// Trains with Adam on shuffled minibatches. Each epoch draws its shuffle and
/// dropout masks from a stream keyed by `(seed, epoch)`. When `val` is
/// non-empty the weights of the lowest validation loss are restored at the
/// end (lowest training loss otherwise).
pub fn train(model: &mut ModelState, train_set: &[Sample], val: &[Sample], tc: &TrainConfig) -> Result<TrainReport> {
    let mut report = TrainReport {
        history: Vec::new(),
        best_epoch: None,
        stopped_early: false,
    };
    if tc.epochs == 0 {
        return Ok(report);
    }
    if train_set.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    tc.validate(train_set.len())?;
    let classes = model.config.classes;
    if let Some(s) = train_set.iter().chain(val).find(|s| s.label >= classes) {
        return Err(Error::LabelOutOfRange(s.label, classes));
    }
    if tc.standardize {
        model.standardization = Standardization::fit(train_set.iter().map(|s| &s.map));
    }
    // Standardize once up front.
    let inputs: Vec<Vec<f64>> = train_set.iter().map(|s| model.standardization.apply(&s.map).to_vec()).collect();
    let (h, w, _) = model.config.input_shape;

    let mut optimizer = model.optimizer.take().unwrap_or_else(|| AdamState::new(tc.lr));
    optimizer.lr = tc.lr;
    let mut best: Option<(f64, usize, ModelState)> = None;
    let mut since_best = 0usize;
    let start = model.history.len();

    for epoch in 0..tc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let (mut ce_sum, mut l2_sum, mut correct) = (0.0, 0.0, 0usize);
        for range in batch_ranges(order.len(), tc.batch_size) {
            let idx = &order[range];
            let mut data = Vec::with_capacity(idx.len() * h * w);
            for &i in idx {
                data.extend_from_slice(&inputs[i]);
            }
            let x = Tensor::from_vec(&[idx.len(), h, w, 1], data)?;
            let labels: Vec<usize> = idx.iter().map(|&i| train_set[i].label).collect();

            let l2 = model.l2_value();
            let (logits, cache) = model.forward(&x, Mode::Train, &mut rng)?;
            let (ce, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !ce.is_finite() || !logits.is_finite() {
                return Err(Error::DivergedTraining { epoch });
            }
            let grads = model.backward(&cache.expect("train mode returns a cache"), &grad)?;
            let mut params = model.params_mut();
            adam_step(&mut params, &grads, &mut optimizer)?;

            ce_sum += ce * idx.len() as f64;
            l2_sum += l2 * idx.len() as f64;
            correct += count_correct(&logits, &labels);
        }
        let n = train_set.len() as f64;
        let (train_ce, l2) = (ce_sum / n, l2_sum / n);
        let (val_loss, val_acc) = if val.is_empty() {
            (None, None)
        } else {
            let (l, a) = model.evaluate_loss(val)?;
            (Some(l), Some(a))
        };
        if !(train_ce + l2).is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::DivergedTraining { epoch });
        }
        let record = EpochRecord {
            epoch: start + epoch,
            train_loss: train_ce + l2,
            train_ce,
            l2,
            train_acc: correct as f64 / n,
            val_loss,
            val_acc,
        };
        let score = val_loss.unwrap_or(record.train_loss);
        model.history.push(record.clone());
        report.history.push(record);

        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            let mut snapshot = model.clone();
            snapshot.history.clear();
            best = Some((score, start + epoch, snapshot));
            since_best = 0;
        } else {
            since_best += 1;
            if tc.early_stop_patience.is_some_and(|p| since_best >= p) {
                report.stopped_early = true;
                break;
            }
        }
    }

    if let Some((_, epoch, snapshot)) = best {
        let history = std::mem::take(&mut model.history);
        *model = snapshot;
        model.history = history;
        report.best_epoch = Some(epoch);
    }
    model.optimizer = Some(optimizer);
    Ok(report)
}

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SDCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    lr: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    dtype: String,
    config: ModelConfig,
    seed: u64,
    history: Vec<EpochRecord>,
    standardization: Standardization,
    bn_momentum: Vec<f64>,
    bn_epsilon: Vec<f64>,
    l2_factors: Vec<f64>,
    tensors: Vec<TensorMeta>,
    optimizer: Option<OptimizerMeta>,
}

/// Layout: magic, version byte, little-endian `u32` metadata length, JSON
/// metadata, `f64` little-endian tensor data in build order (then Adam
/// moments when present), CRC32 of everything before it.
pub fn write_checkpoint(model: &ModelState, mut w: impl Write) -> Result<()> {
    let named = model.named_tensors();
    let meta = CheckpointMeta {
        dtype: "f64le".into(),
        config: model.config.clone(),
        seed: model.seed,
        history: model.history.clone(),
        standardization: model.standardization.clone(),
        bn_momentum: model.stages.iter().map(|s| s.bn.momentum).collect(),
        bn_epsilon: model.stages.iter().map(|s| s.bn.epsilon).collect(),
        l2_factors: model.stages.iter().map(|s| s.conv.l2_factor).collect(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorMeta {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        optimizer: model.optimizer.as_ref().filter(|o| !o.m.is_empty()).map(|o| OptimizerMeta {
            t: o.t,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
            lr: o.lr,
        }),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.push(CHECKPOINT_VERSION);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    let mut push = |t: &Tensor| {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (_, t) in &named {
        push(t);
    }
    if let Some(o) = model.optimizer.as_ref().filter(|o| !o.m.is_empty()) {
        for t in o.m.iter().chain(&o.v) {
            push(t);
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<ModelState> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 4 {
        return Err(Error::ChecksumMismatch);
    }
    if buf[..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic(String::from_utf8_lossy(&buf[..4]).into_owned()));
    }
    if buf.len() < 5 + 4 + 4 {
        return Err(Error::ChecksumMismatch);
    }
    if buf[4] != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch(buf[4]));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::ChecksumMismatch);
    }
    let meta_len = u32::from_le_bytes(body[5..9].try_into().unwrap()) as usize;
    let meta_end = 9usize.checked_add(meta_len).filter(|&e| e <= body.len()).ok_or(Error::ChecksumMismatch)?;
    let meta: CheckpointMeta = serde_json::from_slice(&body[9..meta_end])?;
    if meta.dtype != "f64le" {
        return Err(Error::MalformedHeader(format!("unsupported tensor dtype {}", meta.dtype)));
    }

    let mut model = build_model(&meta.config, meta.seed)?;
    let mut values = body[meta_end..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut fill = |t: &mut Tensor| -> Result<()> {
        for v in t.data_mut() {
            *v = values.next().ok_or_else(|| Error::MalformedHeader("tensor data is short".into()))?;
        }
        Ok(())
    };
    let expected: Vec<(String, Vec<usize>)> =
        model.named_tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    if expected.len() != meta.tensors.len()
        || expected.iter().zip(&meta.tensors).any(|((n, s), m)| *n != m.name || *s != m.shape)
    {
        return Err(Error::MalformedHeader("tensor table does not match the configured model".into()));
    }
    for t in model.named_tensors_mut() {
        fill(t)?;
    }
    if let Some(o) = &meta.optimizer {
        let shapes: Vec<Vec<usize>> = model.params().iter().map(|t| t.shape().to_vec()).collect();
        let mut state = AdamState::new(o.lr);
        state.t = o.t;
        state.beta1 = o.beta1;
        state.beta2 = o.beta2;
        state.epsilon = o.epsilon;
        for target in [&mut state.m, &mut state.v] {
            for s in &shapes {
                let mut t = Tensor::zeros(s);
                fill(&mut t)?;
                target.push(t);
            }
        }
        model.optimizer = Some(state);
    }
    if values.next().is_some() {
        return Err(Error::MalformedHeader("trailing tensor data".into()));
    }
    if meta.bn_momentum.len() != model.stages.len()
        || meta.bn_epsilon.len() != model.stages.len()
        || meta.l2_factors.len() != model.stages.len()
    {
        return Err(Error::MalformedHeader("per-stage settings do not match the stage count".into()));
    }
    for (i, s) in model.stages.iter_mut().enumerate() {
        s.bn.momentum = meta.bn_momentum[i];
        s.bn.epsilon = meta.bn_epsilon[i];
        s.conv.l2_factor = meta.l2_factors[i];
    }
    model.standardization = meta.standardization;
    model.history = meta.history;
    Ok(model)
}

pub fn save_checkpoint(model: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    read_checkpoint(std::io::BufReader::new(file))
}
