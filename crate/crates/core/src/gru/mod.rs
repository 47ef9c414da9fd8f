//! Two-layer GRU with a softmax head.
//!
//! The cell follows the convention where the update gate keeps the old state:
//!
//! ```text
//! r  = σ(W_r [h, x] + b_r)
//! z  = σ(W_z [h, x] + b_z)
//! h~ = tanh(W_h [r * h, x] + b_h)
//! h' = z * h + (1 - z) * h~
//! ```
//!
//! Weight matrices are row-major `hidden × (hidden + input)`; the first
//! `hidden` columns multiply the recurrent state. Both layers start each
//! window from a zero state and only the last step reaches the head.

mod train;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::inject::{seeded_rng, BiasType};
use crate::math;

pub use train::{
    class_weights, loss_and_grads, train, Adam, EpochLog, SequenceSet, Stream, TrainConfig,
    TrainError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GruError {
    #[error("input has {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("models disagree on {0}")]
    SchemaMismatch(&'static str),
    #[error("non-finite weight in {0}")]
    NonFinite(&'static str),
}

/// Weights of one recurrent layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayerWeights {
    pub hidden: usize,
    pub input: usize,
    pub w_r: Vec<f64>,
    pub w_z: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruLayerWeights {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let m = hidden * (hidden + input);
        Self {
            hidden,
            input,
            w_r: vec![0.0; m],
            w_z: vec![0.0; m],
            w_h: vec![0.0; m],
            b_r: vec![0.0; hidden],
            b_z: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn glorot<R: Rng + ?Sized>(hidden: usize, input: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(hidden, input);
        let limit = math::sqrt(6.0 / (2 * hidden + input) as f64);
        for m in [&mut w.w_r, &mut w.w_z, &mut w.w_h] {
            for v in m.iter_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        w
    }

    pub fn cols(&self) -> usize {
        self.hidden + self.input
    }

    fn check(&self) -> Result<(), GruError> {
        let m = self.hidden * self.cols();
        let h = self.hidden;
        if self.w_r.len() != m || self.w_z.len() != m || self.w_h.len() != m {
            return Err(GruError::DimensionMismatch { expected: m, got: self.w_r.len() });
        }
        if self.b_r.len() != h || self.b_z.len() != h || self.b_h.len() != h {
            return Err(GruError::DimensionMismatch { expected: h, got: self.b_r.len() });
        }
        Ok(())
    }
}

/// `out = b + W v` for a row-major `W` with `v.len()` columns.
#[inline]
fn affine(w: &[f64], b: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        let mut acc = b[i];
        for (a, x) in row.iter().zip(v) {
            acc += a * x;
        }
        *o = acc;
    }
}

/// Intermediate values of one cell step, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct CellCache {
    /// `[h_prev, x]`
    pub c: Vec<f64>,
    /// `[r * h_prev, x]`
    pub c_tilde: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub h_tilde: Vec<f64>,
    pub h: Vec<f64>,
}

impl CellCache {
    fn new(hidden: usize, input: usize) -> Self {
        Self {
            c: vec![0.0; hidden + input],
            c_tilde: vec![0.0; hidden + input],
            r: vec![0.0; hidden],
            z: vec![0.0; hidden],
            h_tilde: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

fn cell_into(w: &GruLayerWeights, x: &[f64], h_prev: &[f64], cache: &mut CellCache) {
    let hd = w.hidden;
    cache.c[..hd].copy_from_slice(h_prev);
    cache.c[hd..].copy_from_slice(x);
    affine(&w.w_r, &w.b_r, &cache.c, &mut cache.r);
    affine(&w.w_z, &w.b_z, &cache.c, &mut cache.z);
    for i in 0..hd {
        cache.r[i] = math::sigmoid(cache.r[i]);
        cache.z[i] = math::sigmoid(cache.z[i]);
        cache.c_tilde[i] = cache.r[i] * h_prev[i];
    }
    cache.c_tilde[hd..].copy_from_slice(x);
    affine(&w.w_h, &w.b_h, &cache.c_tilde, &mut cache.h_tilde);
    for i in 0..hd {
        let ht = math::tanh(cache.h_tilde[i]);
        cache.h_tilde[i] = ht;
        cache.h[i] = cache.z[i] * h_prev[i] + (1.0 - cache.z[i]) * ht;
    }
}

/// One cell step.
pub fn gru_cell(x: &[f64], h_prev: &[f64], w: &GruLayerWeights) -> Result<Vec<f64>, GruError> {
    w.check()?;
    if x.len() != w.input {
        return Err(GruError::DimensionMismatch { expected: w.input, got: x.len() });
    }
    if h_prev.len() != w.hidden {
        return Err(GruError::DimensionMismatch { expected: w.hidden, got: h_prev.len() });
    }
    let mut cache = CellCache::new(w.hidden, w.input);
    cell_into(w, x, h_prev, &mut cache);
    Ok(cache.h)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = math::exp(l - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// All trainable tensors. Gradients and optimizer moments share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub layer1: GruLayerWeights,
    pub layer2: GruLayerWeights,
    /// Row-major `classes × layer2.hidden`.
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

/// Tensor names in [`GruWeights::tensors`] order.
pub const TENSOR_NAMES: [&str; 14] = [
    "layer1.w_r",
    "layer1.w_z",
    "layer1.w_h",
    "layer1.b_r",
    "layer1.b_z",
    "layer1.b_h",
    "layer2.w_r",
    "layer2.w_z",
    "layer2.w_h",
    "layer2.b_r",
    "layer2.b_z",
    "layer2.b_h",
    "head.w",
    "head.b",
];

impl GruWeights {
    pub fn zeros(input: usize, hidden: [usize; 2], classes: usize) -> Self {
        Self {
            layer1: GruLayerWeights::zeros(hidden[0], input),
            layer2: GruLayerWeights::zeros(hidden[1], hidden[0]),
            head_w: vec![0.0; classes * hidden[1]],
            head_b: vec![0.0; classes],
        }
    }

    pub fn glorot<R: Rng + ?Sized>(input: usize, hidden: [usize; 2], classes: usize, rng: &mut R) -> Self {
        let layer1 = GruLayerWeights::glorot(hidden[0], input, rng);
        let layer2 = GruLayerWeights::glorot(hidden[1], hidden[0], rng);
        let limit = math::sqrt(6.0 / (hidden[1] + classes) as f64);
        let head_w = (0..classes * hidden[1]).map(|_| rng.random_range(-limit..limit)).collect();
        Self { layer1, layer2, head_w, head_b: vec![0.0; classes] }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), [self.layer1.hidden, self.layer2.hidden], self.classes())
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input
    }

    pub fn classes(&self) -> usize {
        self.head_b.len()
    }

    pub fn tensors(&self) -> [&[f64]; 14] {
        let (a, b) = (&self.layer1, &self.layer2);
        [
            &a.w_r, &a.w_z, &a.w_h, &a.b_r, &a.b_z, &a.b_h, &b.w_r, &b.w_z, &b.w_h, &b.b_r, &b.b_z,
            &b.b_h, &self.head_w, &self.head_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 14] {
        let (a, b) = (&mut self.layer1, &mut self.layer2);
        [
            &mut a.w_r,
            &mut a.w_z,
            &mut a.w_h,
            &mut a.b_r,
            &mut a.b_z,
            &mut a.b_h,
            &mut b.w_r,
            &mut b.w_z,
            &mut b.w_h,
            &mut b.b_r,
            &mut b.b_z,
            &mut b.b_h,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill(&mut self, v: f64) {
        for t in self.tensors_mut() {
            t.fill(v);
        }
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum())
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn validate(&self) -> Result<(), GruError> {
        self.layer1.check()?;
        self.layer2.check()?;
        if self.layer2.input != self.layer1.hidden {
            return Err(GruError::DimensionMismatch { expected: self.layer1.hidden, got: self.layer2.input });
        }
        if self.head_w.len() != self.classes() * self.layer2.hidden {
            return Err(GruError::DimensionMismatch {
                expected: self.classes() * self.layer2.hidden,
                got: self.head_w.len(),
            });
        }
        for (name, t) in TENSOR_NAMES.iter().zip(self.tensors()) {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(GruError::NonFinite(name));
            }
        }
        Ok(())
    }
}

/// Training record stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub class_weights: Vec<f64>,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub weights: GruWeights,
    /// Frames per prediction.
    pub window: usize,
    /// Identifies the feature layout the model was trained on.
    pub schema_hash: u64,
    /// Free-form role tag, e.g. `detector`.
    pub role: String,
    pub meta: TrainMeta,
}

impl GruModel {
    pub fn new(weights: GruWeights, window: usize, schema_hash: u64) -> Self {
        Self { weights, window, schema_hash, role: String::new(), meta: TrainMeta::default() }
    }

    /// Seeded Glorot initialization.
    pub fn init(input: usize, hidden: [usize; 2], classes: usize, window: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        Self::new(GruWeights::glorot(input, hidden, classes, &mut rng), window, 0)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.weights.classes()
    }

    /// Class probabilities for one window of `window × input_dim` values.
    pub fn forward(&self, window: &[f64]) -> Result<Vec<f64>, GruError> {
        let mut ws = Workspace::new(&self.weights, self.window);
        self.forward_with(&mut ws, window).map(|p| p.to_vec())
    }

    /// Like [`forward`](Self::forward) but reuses buffers.
    pub fn forward_with<'a>(&self, ws: &'a mut Workspace, window: &[f64]) -> Result<&'a [f64], GruError> {
        let expected = self.window * self.input_dim();
        if window.len() != expected {
            return Err(GruError::DimensionMismatch { expected, got: window.len() });
        }
        ws.ensure(&self.weights, self.window);
        forward_cached(&self.weights, window, ws);
        Ok(&ws.probs)
    }

    pub fn predict(&self, window: &[f64]) -> Result<usize, GruError> {
        let p = self.forward(window)?;
        Ok(argmax(&p))
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Preallocated forward/backward buffers for one window.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    pub(crate) l1: Vec<CellCache>,
    pub(crate) l2: Vec<CellCache>,
    pub(crate) h0_1: Vec<f64>,
    pub(crate) h0_2: Vec<f64>,
    pub(crate) logits: Vec<f64>,
    pub(crate) probs: Vec<f64>,
}

impl Workspace {
    pub fn new(w: &GruWeights, window: usize) -> Self {
        let mut ws = Self::default();
        ws.ensure(w, window);
        ws
    }

    fn ensure(&mut self, w: &GruWeights, window: usize) {
        let (h1, h2, k) = (w.layer1.hidden, w.layer2.hidden, w.classes());
        let fits = self.l1.len() == window
            && self.h0_1.len() == h1
            && self.h0_2.len() == h2
            && self.probs.len() == k
            && self.l1.first().map_or(true, |c| c.c.len() == h1 + w.layer1.input);
        if fits {
            return;
        }
        self.l1 = (0..window).map(|_| CellCache::new(h1, w.layer1.input)).collect();
        self.l2 = (0..window).map(|_| CellCache::new(h2, h1)).collect();
        self.h0_1 = vec![0.0; h1];
        self.h0_2 = vec![0.0; h2];
        self.logits = vec![0.0; k];
        self.probs = vec![0.0; k];
    }
}

pub(crate) fn forward_cached(w: &GruWeights, window: &[f64], ws: &mut Workspace) {
    let input = w.layer1.input;
    let steps = ws.l1.len();
    for t in 0..steps {
        let x = &window[t * input..(t + 1) * input];
        let (done, rest) = ws.l1.split_at_mut(t);
        let h_prev = if t == 0 { &ws.h0_1[..] } else { &done[t - 1].h[..] };
        cell_into(&w.layer1, x, h_prev, &mut rest[0]);
    }
    for t in 0..steps {
        let x = &ws.l1[t].h;
        let (done, rest) = ws.l2.split_at_mut(t);
        let h_prev = if t == 0 { &ws.h0_2[..] } else { &done[t - 1].h[..] };
        cell_into(&w.layer2, x, h_prev, &mut rest[0]);
    }
    let h = &ws.l2[steps - 1].h;
    affine(&w.head_w, &w.head_b, h, &mut ws.logits);
    softmax_into(&ws.logits, &mut ws.probs);
}

/// Per-step output of [`predict_stream`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamPrediction {
    pub detect: bool,
    /// Set only on flagged steps.
    pub bias_type: Option<BiasType>,
    /// Detector probability of the anomaly class (0 before the first window).
    pub p_anomaly: f64,
    /// Classifier probability of `jump` (0 when not flagged).
    pub p_jump: f64,
}

impl StreamPrediction {
    pub const NORMAL: Self = Self { detect: false, bias_type: None, p_anomaly: 0.0, p_jump: 0.0 };
}

pub fn check_pair(detector: &GruModel, classifier: &GruModel) -> Result<(), GruError> {
    if detector.schema_hash != classifier.schema_hash {
        return Err(GruError::SchemaMismatch("feature schema"));
    }
    if detector.window != classifier.window {
        return Err(GruError::SchemaMismatch("window length"));
    }
    if detector.input_dim() != classifier.input_dim() {
        return Err(GruError::SchemaMismatch("input dimension"));
    }
    if detector.classes() != 2 || classifier.classes() != 2 {
        return Err(GruError::SchemaMismatch("class count"));
    }
    Ok(())
}

/// Detector then bias classifier over a sliding window of scaled frames
/// (`frames.len() / input_dim` steps). Steps before the first full window are
/// normal; the classifier only runs on flagged steps.
pub fn predict_stream(
    detector: &GruModel,
    classifier: &GruModel,
    frames: &[f64],
) -> Result<Vec<StreamPrediction>, GruError> {
    check_pair(detector, classifier)?;
    let d = detector.input_dim();
    if frames.len() % d != 0 {
        return Err(GruError::DimensionMismatch { expected: d, got: frames.len() % d });
    }
    let steps = frames.len() / d;
    let w = detector.window;
    let mut ws = Workspace::new(&detector.weights, w);
    let mut out = vec![StreamPrediction::NORMAL; steps];
    for t in (w.saturating_sub(1))..steps {
        if t + 1 < w {
            continue;
        }
        let win = &frames[(t + 1 - w) * d..(t + 1) * d];
        let p_anomaly = detector.forward_with(&mut ws, win)?[1];
        let detect = p_anomaly > 0.5;
        out[t] = if detect {
            let p_jump = classifier.forward_with(&mut ws, win)?[1];
            let bias_type = if p_jump > 0.5 { BiasType::Jump } else { BiasType::Noise };
            StreamPrediction { detect, bias_type: Some(bias_type), p_anomaly, p_jump }
        } else {
            StreamPrediction { detect, bias_type: None, p_anomaly, p_jump: 0.0 }
        };
    }
    Ok(out)
}
