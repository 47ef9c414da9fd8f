//! Backpropagation through time, Adam and the training loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{forward_cached, CellCache, GruError, GruLayerWeights, GruModel, GruWeights, TrainMeta, Workspace};
use crate::inject::{derive_seed, seeded_rng};
use crate::math;
use crate::metrics::score_detection;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training set has no labeled windows")]
    Empty,
    #[error("training set lacks class {0}")]
    MissingClass(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Gru(#[from] GruError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Per-class loss weights; inverse class frequency when absent.
    pub class_weights: Option<Vec<f64>>,
    pub clip_norm: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub hidden: [usize; 2],
    pub window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 64,
            class_weights: None,
            clip_norm: 5.0,
            seed: 0,
            patience: 5,
            hidden: [32, 16],
            window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1"));
        }
        if self.batch_size == 0 || self.window == 0 {
            return Err(TrainError::InvalidConfig("batch size and window must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(TrainError::InvalidConfig("hidden sizes must be >= 1"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::InvalidConfig("clip norm must be positive"));
        }
        Ok(())
    }
}

/// One contiguous feature sequence. Steps labeled `None` are never used as a
/// window end but still feed earlier steps of later windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    /// `len × input_dim`, row-major.
    pub features: Vec<f64>,
    pub labels: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSet {
    pub input_dim: usize,
    pub streams: Vec<Stream>,
}

impl SequenceSet {
    pub fn new(input_dim: usize) -> Self {
        Self { input_dim, streams: Vec::new() }
    }

    /// Labeled window ends as `(stream, end step, label)`.
    pub fn samples(&self, window: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (s, stream) in self.streams.iter().enumerate() {
            for (t, label) in stream.labels.iter().enumerate().skip(window.saturating_sub(1)) {
                if let Some(y) = *label {
                    out.push((s, t, y));
                }
            }
        }
        out
    }

    pub fn window(&self, stream: usize, end: usize, window: usize) -> &[f64] {
        let d = self.input_dim;
        &self.streams[stream].features[(end + 1 - window) * d..(end + 1) * d]
    }
}

/// `n / (k · n_c)` for each class `c`.
pub fn class_weights(labels: impl Iterator<Item = usize>, classes: usize) -> Result<Vec<f64>, TrainError> {
    let mut counts = vec![0usize; classes];
    for y in labels {
        if y >= classes {
            return Err(GruError::LabelOutOfRange { label: y, classes }.into());
        }
        counts[y] += 1;
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(TrainError::Empty);
    }
    counts
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            if k == 0 {
                Err(TrainError::MissingClass(c))
            } else {
                Ok(n as f64 / (classes * k) as f64)
            }
        })
        .collect()
}

/// Scratch buffers for the backward pass.
struct Backprop {
    dh: Vec<f64>,
    carry: Vec<f64>,
    dhp: Vec<f64>,
    da_r: Vec<f64>,
    da_z: Vec<f64>,
    da_h: Vec<f64>,
    dct: Vec<f64>,
    dc: Vec<f64>,
    /// Layer-2 input gradients, fed to layer 1 as per-step hidden gradients.
    dx2: Vec<f64>,
    /// Layer-2 hidden gradients (non-zero at the last step only).
    dh2: Vec<f64>,
    dlogits: Vec<f64>,
}

impl Backprop {
    fn new(w: &GruWeights, window: usize) -> Self {
        let width = w.layer1.cols().max(w.layer2.cols());
        let h = w.layer1.hidden.max(w.layer2.hidden);
        Self {
            dh: vec![0.0; h],
            carry: vec![0.0; h],
            dhp: vec![0.0; h],
            da_r: vec![0.0; h],
            da_z: vec![0.0; h],
            da_h: vec![0.0; h],
            dct: vec![0.0; width],
            dc: vec![0.0; width],
            dx2: vec![0.0; window * w.layer1.hidden],
            dh2: vec![0.0; window * w.layer2.hidden],
            dlogits: vec![0.0; w.classes()],
        }
    }
}

/// BPTT through one layer. `dh_ext` holds the gradient arriving from above at
/// every step; input gradients are written to `dx` when given.
fn layer_backward(
    w: &GruLayerWeights,
    caches: &[CellCache],
    h0: &[f64],
    dh_ext: &[f64],
    g: &mut GruLayerWeights,
    mut dx: Option<&mut [f64]>,
    s: &mut Backprop,
) {
    let hd = w.hidden;
    let cols = w.cols();
    let carry = &mut s.carry[..hd];
    carry.fill(0.0);
    for t in (0..caches.len()).rev() {
        let c = &caches[t];
        let h_prev = if t == 0 { h0 } else { &caches[t - 1].h[..] };
        let (dh, dhp) = (&mut s.dh[..hd], &mut s.dhp[..hd]);
        let (da_r, da_z, da_h) = (&mut s.da_r[..hd], &mut s.da_z[..hd], &mut s.da_h[..hd]);
        for i in 0..hd {
            dh[i] = dh_ext[t * hd + i] + carry[i];
            let (z, ht) = (c.z[i], c.h_tilde[i]);
            let dz = dh[i] * (h_prev[i] - ht);
            let dht = dh[i] * (1.0 - z);
            dhp[i] = dh[i] * z;
            da_h[i] = dht * (1.0 - ht * ht);
            da_z[i] = dz * z * (1.0 - z);
        }
        let dct = &mut s.dct[..cols];
        dct.fill(0.0);
        for i in 0..hd {
            let a = da_h[i];
            g.b_h[i] += a;
            let row = i * cols;
            let (gw, ww) = (&mut g.w_h[row..row + cols], &w.w_h[row..row + cols]);
            for j in 0..cols {
                gw[j] += a * c.c_tilde[j];
                dct[j] += ww[j] * a;
            }
        }
        for i in 0..hd {
            let d_rh = dct[i];
            dhp[i] += d_rh * c.r[i];
            let r = c.r[i];
            da_r[i] = d_rh * h_prev[i] * r * (1.0 - r);
        }
        let dc = &mut s.dc[..cols];
        dc.fill(0.0);
        for i in 0..hd {
            let (ar, az) = (da_r[i], da_z[i]);
            g.b_r[i] += ar;
            g.b_z[i] += az;
            let row = i * cols;
            let (gr, gz) = (&mut g.w_r[row..row + cols], &mut g.w_z[row..row + cols]);
            let (wr, wz) = (&w.w_r[row..row + cols], &w.w_z[row..row + cols]);
            for j in 0..cols {
                let cj = c.c[j];
                gr[j] += ar * cj;
                gz[j] += az * cj;
                dc[j] += wr[j] * ar + wz[j] * az;
            }
        }
        for i in 0..hd {
            carry[i] = dhp[i] + dc[i];
        }
        if let Some(dx) = dx.as_deref_mut() {
            let input = w.input;
            for j in 0..input {
                dx[t * input + j] = dct[hd + j] + dc[hd + j];
            }
        }
    }
}

/// Forward and backward for one sample; accumulates `scale`-weighted
/// gradients into `g` and returns the weighted loss.
fn accumulate(
    w: &GruWeights,
    window: &[f64],
    label: usize,
    weight: f64,
    ws: &mut Workspace,
    s: &mut Backprop,
    g: &mut GruWeights,
) -> f64 {
    forward_cached(w, window, ws);
    let steps = ws.l1.len();
    let h2 = w.layer2.hidden;
    let max = ws.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + math::ln(ws.logits.iter().map(|l| math::exp(l - max)).sum::<f64>());
    let loss = -weight * (ws.logits[label] - lse);
    for (k, d) in s.dlogits.iter_mut().enumerate() {
        let target = if k == label { 1.0 } else { 0.0 };
        *d = weight * (ws.probs[k] - target);
    }
    let h_last = &ws.l2[steps - 1].h;
    s.dh2.fill(0.0);
    for (k, &d) in s.dlogits.iter().enumerate() {
        g.head_b[k] += d;
        for j in 0..h2 {
            g.head_w[k * h2 + j] += d * h_last[j];
            s.dh2[(steps - 1) * h2 + j] += w.head_w[k * h2 + j] * d;
        }
    }
    let dh2 = core::mem::take(&mut s.dh2);
    let mut dx2 = core::mem::take(&mut s.dx2);
    layer_backward(&w.layer2, &ws.l2, &ws.h0_2, &dh2, &mut g.layer2, Some(&mut dx2), s);
    layer_backward(&w.layer1, &ws.l1, &ws.h0_1, &dx2, &mut g.layer1, None, s);
    s.dh2 = dh2;
    s.dx2 = dx2;
    loss
}

/// Class-weighted cross-entropy averaged over the batch and its gradient
/// with respect to every parameter. Each window is `window × input_dim`.
pub fn loss_and_grads(
    weights: &GruWeights,
    window: usize,
    batch: &[(&[f64], usize)],
    class_weights: &[f64],
) -> Result<(f64, GruWeights), GruError> {
    let mut g = weights.zeros_like();
    let loss = batch_grads(weights, window, batch, class_weights, &mut g)?;
    Ok((loss, g))
}

fn batch_grads(
    weights: &GruWeights,
    window: usize,
    batch: &[(&[f64], usize)],
    class_weights: &[f64],
    g: &mut GruWeights,
) -> Result<f64, GruError> {
    let classes = weights.classes();
    let expected = window * weights.input_dim();
    for &(x, y) in batch {
        if y >= classes {
            return Err(GruError::LabelOutOfRange { label: y, classes });
        }
        if x.len() != expected {
            return Err(GruError::DimensionMismatch { expected, got: x.len() });
        }
    }
    let mut ws = Workspace::new(weights, window);
    let mut s = Backprop::new(weights, window);
    g.fill(0.0);
    let mut loss = 0.0;
    for &(x, y) in batch {
        loss += accumulate(weights, x, y, class_weights[y], &mut ws, &mut s, g);
    }
    let n = batch.len().max(1) as f64;
    g.scale(1.0 / n);
    Ok(loss / n)
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: GruWeights,
    v: GruWeights,
}

impl Adam {
    pub fn new(like: &GruWeights, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn step(&mut self, w: &mut GruWeights, g: &GruWeights) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - libm::pow(b1, self.t as f64);
        let c2 = 1.0 - libm::pow(b2, self.t as f64);
        let lr = self.learning_rate;
        let eps = self.eps;
        let gs = g.tensors();
        for (((wt, mt), vt), gt) in w
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(gs)
        {
            for i in 0..wt.len() {
                let gi = gt[i];
                mt[i] = b1 * mt[i] + (1.0 - b1) * gi;
                vt[i] = b2 * vt[i] + (1.0 - b2) * gi * gi;
                let mh = mt[i] / c1;
                let vh = vt[i] / c2;
                wt[i] -= lr * mh / (math::sqrt(vh) + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// F1 of class 1 on the validation windows.
    pub val_f1_anomaly: f64,
    /// F1 of class 0 on the validation windows.
    pub val_f1_normal: f64,
}

/// Weighted loss and binary F1 scores of `w` over every labeled window.
fn evaluate(
    w: &GruWeights,
    set: &SequenceSet,
    window: usize,
    samples: &[(usize, usize, usize)],
    class_weights: &[f64],
) -> (f64, f64, f64) {
    let mut ws = Workspace::new(w, window);
    let mut loss = 0.0;
    let mut pred = Vec::with_capacity(samples.len());
    let mut truth = Vec::with_capacity(samples.len());
    for &(s, t, y) in samples {
        forward_cached(w, set.window(s, t, window), &mut ws);
        let max = ws.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(ws.logits.iter().map(|l| math::exp(l - max)).sum::<f64>());
        loss -= class_weights[y] * (ws.logits[y] - lse);
        pred.push(super::argmax(&ws.probs) == 1);
        truth.push(y == 1);
    }
    let n = samples.len().max(1) as f64;
    let scores = score_detection(&pred, &truth).expect("equal lengths");
    (loss / n, scores.anomaly.f1, scores.normal.f1)
}

/// Trains a model with minibatch Adam, keeping the weights with the lowest
/// validation loss. An empty validation set falls back to the training loss.
pub fn train(
    train_set: &SequenceSet,
    val_set: &SequenceSet,
    config: &TrainConfig,
    classes: usize,
) -> Result<GruModel, TrainError> {
    config.validate()?;
    let window = config.window;
    let samples = train_set.samples(window);
    if samples.is_empty() {
        return Err(TrainError::Empty);
    }
    let cw = match &config.class_weights {
        Some(cw) if cw.len() == classes => {
            class_weights(samples.iter().map(|s| s.2), classes)?;
            cw.clone()
        }
        Some(_) => return Err(TrainError::InvalidConfig("class weight count differs from classes")),
        None => class_weights(samples.iter().map(|s| s.2), classes)?,
    };
    let val_samples = val_set.samples(window);
    let mut model = GruModel::init(train_set.input_dim, config.hidden, classes, window, derive_seed(config.seed, 0));
    let mut shuffle_rng = seeded_rng(derive_seed(config.seed, 1));
    let mut adam = Adam::new(&model.weights, config.learning_rate);
    let mut grads = model.weights.zeros_like();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch: Vec<(&[f64], usize)> = Vec::with_capacity(config.batch_size);
    let mut best = (f64::INFINITY, model.weights.clone(), 0usize);
    let mut stale = 0;
    let mut log = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| {
                let (s, t, y) = samples[i];
                (train_set.window(s, t, window), y)
            }));
            let loss = batch_grads(&model.weights, window, &batch, &cw, &mut grads)?;
            total += loss * chunk.len() as f64;
            let norm = grads.norm();
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
            }
            adam.step(&mut model.weights, &grads);
        }
        let train_loss = total / samples.len() as f64;
        let (val_loss, f1a, f1n) = if val_samples.is_empty() {
            let (_, a, n) = evaluate(&model.weights, train_set, window, &samples, &cw);
            (train_loss, a, n)
        } else {
            evaluate(&model.weights, val_set, window, &val_samples, &cw)
        };
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} f1 {f1a:.4}/{f1n:.4}");
        log.push(EpochLog { epoch, train_loss, val_loss, val_f1_anomaly: f1a, val_f1_normal: f1n });
        if !model.weights.norm().is_finite() {
            return Err(GruError::NonFinite("weights").into());
        }
        if val_loss < best.0 {
            best = (val_loss, model.weights.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    model.weights = best.1;
    model.meta = TrainMeta {
        seed: config.seed,
        epochs_run: log.len(),
        best_epoch: best.2,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        class_weights: cw,
        log,
    };
    Ok(model)
}
