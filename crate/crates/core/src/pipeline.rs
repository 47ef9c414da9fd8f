//! End-to-end detection: dataset assembly for training, offline batch
//! detection, and the per-point streaming pipeline.
//!
//! Streaming and batch paths share every numerical step, so a stream fed
//! point by point yields the same detections as [`detect_offline`] on the
//! whole series.

use alloc::collections::VecDeque;
use core::ops::Range;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{
    assemble_frames, schema_hash, FeatureError, FeatureFrame, FeatureScaler, FrameBuilder, WindowConfig,
    FEATURE_COUNT,
};
use crate::gru::{check_pair, predict_stream, GruError, GruModel, SequenceSet, Stream, StreamPrediction, Workspace};
use crate::inject::{BiasType, LabeledChannel, TimeType};
use crate::recover::{AlertEvent, RecoverError, Recoverer, RecoveryOutput, TimeClassifier, TimeThresholds};
use crate::rema::{rema_stream, Rema, RemaError, RemaOutput, RemaParams};
use crate::trace::{Channel, ChannelStats, NormStats, TraceError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rema(#[from] RemaError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gru(#[from] GruError),
    #[error(transparent)]
    Recover(#[from] RecoverError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("no detector parameters for channel {0}")]
    MissingChannel(Channel),
    #[error("model schema {model:#018x} does not match window config {config:#018x}")]
    SchemaMismatch { model: u64, config: u64 },
}

/// Which label a training sequence carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// 0 normal, 1 anomaly; every step labeled.
    Detect,
    /// 0 noise, 1 jump; only true anomalies labeled.
    Bias,
}

pub fn bias_class(b: BiasType) -> Option<usize> {
    match b {
        BiasType::Noise => Some(0),
        BiasType::Jump => Some(1),
        BiasType::None => None,
    }
}

pub fn class_bias(c: usize) -> BiasType {
    if c == 1 {
        BiasType::Jump
    } else {
        BiasType::Noise
    }
}

/// REMA outputs and unscaled frames for one normalized channel.
pub fn channel_features(
    values: &[f64],
    params: &RemaParams,
    windows: &WindowConfig,
) -> Result<(Vec<RemaOutput>, Vec<FeatureFrame>), PipelineError> {
    let rema = rema_stream(values, params)?;
    let frames = assemble_frames(values, &rema, windows)?;
    Ok((rema, frames))
}

pub fn flatten(scaled: &[[f64; FEATURE_COUNT]]) -> Vec<f64> {
    scaled.iter().flat_map(|f| f.iter().copied()).collect()
}

/// Training stream for one labeled channel. Frame `i` corresponds to step
/// `i + regression_window`.
pub fn labeled_stream(
    channel: &LabeledChannel,
    frames: &[FeatureFrame],
    scaler: &FeatureScaler,
    windows: &WindowConfig,
    task: Task,
) -> Stream {
    let offset = windows.regression_window;
    let labels = channel.labels[offset..offset + frames.len()]
        .iter()
        .map(|l| match task {
            Task::Detect => Some(l.is_anomaly() as usize),
            Task::Bias => {
                if l.is_anomaly() {
                    bias_class(l.bias_type)
                } else {
                    None
                }
            }
        })
        .collect();
    Stream { features: flatten(&scaler.transform_all(frames)), labels }
}

/// Frames of several channels, keyed by channel, ready for training.
#[derive(Debug, Clone)]
pub struct ChannelFrames {
    pub channel: LabeledChannel,
    pub frames: Vec<FeatureFrame>,
}

/// Builds frames for every labeled channel with its own detector parameters.
pub fn prepare_frames(
    channels: &[LabeledChannel],
    params: &[(Channel, RemaParams)],
    windows: &WindowConfig,
) -> Result<Vec<ChannelFrames>, PipelineError> {
    channels
        .iter()
        .map(|ch| {
            let p = lookup(params, ch.channel)?;
            let (_, frames) = channel_features(&ch.corrupted, p, windows)?;
            Ok(ChannelFrames { channel: ch.clone(), frames })
        })
        .collect()
}

/// Scaler fitted on all frames of the given channels.
pub fn fit_scaler(sets: &[ChannelFrames]) -> Result<FeatureScaler, PipelineError> {
    let all: Vec<FeatureFrame> = sets.iter().flat_map(|s| s.frames.iter().copied()).collect();
    Ok(FeatureScaler::fit(&all)?)
}

pub fn sequence_set(
    sets: &[ChannelFrames],
    scaler: &FeatureScaler,
    windows: &WindowConfig,
    task: Task,
) -> SequenceSet {
    SequenceSet {
        input_dim: FEATURE_COUNT,
        streams: sets.iter().map(|s| labeled_stream(&s.channel, &s.frames, scaler, windows, task)).collect(),
    }
}

/// Like [`sequence_set`], but only steps inside `steps` carry labels. The
/// whole channel still feeds the windows, so the first labeled windows see
/// real context instead of starting cold.
pub fn sequence_set_in(
    sets: &[ChannelFrames],
    scaler: &FeatureScaler,
    windows: &WindowConfig,
    task: Task,
    steps: Range<usize>,
) -> SequenceSet {
    let mut set = sequence_set(sets, scaler, windows, task);
    for stream in &mut set.streams {
        for (i, label) in stream.labels.iter_mut().enumerate() {
            if !steps.contains(&(i + windows.regression_window)) {
                *label = None;
            }
        }
    }
    set
}

/// Scaler fitted on the frames of steps inside `steps` only.
pub fn fit_scaler_in(
    sets: &[ChannelFrames],
    windows: &WindowConfig,
    steps: Range<usize>,
) -> Result<FeatureScaler, PipelineError> {
    let offset = windows.regression_window;
    let frames: Vec<FeatureFrame> = sets
        .iter()
        .flat_map(|s| {
            s.frames.iter().enumerate().filter(|(i, _)| steps.contains(&(i + offset))).map(|(_, f)| *f)
        })
        .collect();
    Ok(FeatureScaler::fit(&frames)?)
}

fn lookup(params: &[(Channel, RemaParams)], channel: Channel) -> Result<&RemaParams, PipelineError> {
    params.iter().find(|(c, _)| *c == channel).map(|(_, p)| p).ok_or(PipelineError::MissingChannel(channel))
}

/// Everything needed to run inference on a channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorBundle {
    pub windows: WindowConfig,
    pub rema: Vec<(Channel, RemaParams)>,
    pub norm: NormStats,
    pub scaler: FeatureScaler,
    pub detector: GruModel,
    pub classifier: GruModel,
    pub thresholds: TimeThresholds,
}

impl DetectorBundle {
    pub fn validate(&self) -> Result<(), PipelineError> {
        check_pair(&self.detector, &self.classifier)?;
        let config = schema_hash(&self.windows);
        if self.detector.schema_hash != config {
            return Err(PipelineError::SchemaMismatch { model: self.detector.schema_hash, config });
        }
        self.detector.weights.validate()?;
        self.classifier.weights.validate()?;
        self.norm.validate()?;
        self.thresholds.validate()?;
        Ok(())
    }

    pub fn params(&self, channel: Channel) -> Result<&RemaParams, PipelineError> {
        lookup(&self.rema, channel)
    }

    /// Steps at the start of a series that can never be flagged.
    pub fn warmup(&self) -> usize {
        self.windows.regression_window + self.detector.window - 1
    }
}

/// Per-step detections for a whole normalized channel. The first
/// `regression_window` steps have no frame and are normal.
pub fn detect_offline(
    bundle: &DetectorBundle,
    channel: Channel,
    values: &[f64],
) -> Result<Vec<StreamPrediction>, PipelineError> {
    let (_, frames) = channel_features(values, bundle.params(channel)?, &bundle.windows)?;
    let scaled = flatten(&bundle.scaler.transform_all(&frames));
    let preds = predict_stream(&bundle.detector, &bundle.classifier, &scaled)?;
    let mut out = vec![StreamPrediction::NORMAL; bundle.windows.regression_window];
    out.extend(preds);
    Ok(out)
}

/// Everything produced for one incoming reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOutput {
    pub step: usize,
    /// Incoming value after normalization.
    pub normalized: f64,
    pub rema: RemaOutput,
    pub prediction: StreamPrediction,
    pub time_type: TimeType,
    pub recovery: RecoveryOutput,
    pub alert: Option<AlertEvent>,
}

/// Streaming state for one channel.
///
/// Recovery estimates come from a second detector instance that is fed the
/// emitted values, so a replaced reading never leaks into later estimates.
#[derive(Debug, Clone)]
pub struct ChannelPipeline<'a> {
    bundle: &'a DetectorBundle,
    channel: Channel,
    stats: ChannelStats,
    rema: Rema,
    frames: FrameBuilder,
    window: VecDeque<[f64; FEATURE_COUNT]>,
    flat: Vec<f64>,
    ws: Workspace,
    time: TimeClassifier,
    recoverer: Recoverer,
    recovery_ema: Rema,
    last_emitted: f64,
    step: usize,
}

impl<'a> ChannelPipeline<'a> {
    pub fn new(bundle: &'a DetectorBundle, channel: Channel) -> Result<Self, PipelineError> {
        bundle.validate()?;
        let params = *bundle.params(channel)?;
        let w = bundle.detector.window;
        Ok(Self {
            bundle,
            channel,
            stats: *bundle.norm.get(channel)?,
            rema: Rema::new(params)?,
            frames: FrameBuilder::new(bundle.windows)?,
            window: VecDeque::with_capacity(w + 1),
            flat: vec![0.0; w * FEATURE_COUNT],
            ws: Workspace::new(&bundle.detector.weights, w),
            time: TimeClassifier::new(bundle.thresholds)?,
            recoverer: Recoverer::new(channel),
            recovery_ema: Rema::new(params)?,
            last_emitted: 0.0,
            step: 0,
        })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    fn classify(&mut self) -> Result<StreamPrediction, PipelineError> {
        for (i, f) in self.window.iter().enumerate() {
            self.flat[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT].copy_from_slice(f);
        }
        let p_anomaly = self.bundle.detector.forward_with(&mut self.ws, &self.flat)?[1];
        if p_anomaly <= 0.5 {
            return Ok(StreamPrediction { detect: false, bias_type: None, p_anomaly, p_jump: 0.0 });
        }
        let p_jump = self.bundle.classifier.forward_with(&mut self.ws, &self.flat)?[1];
        let bias_type = if p_jump > 0.5 { BiasType::Jump } else { BiasType::Noise };
        Ok(StreamPrediction { detect: true, bias_type: Some(bias_type), p_anomaly, p_jump })
    }

    /// Processes one raw reading.
    pub fn push(&mut self, raw: f64) -> Result<PointOutput, PipelineError> {
        let step = self.step;
        self.step += 1;
        let x = (raw - self.stats.mean) / self.stats.std;
        let rema = self.rema.step(x);
        let mut prediction = StreamPrediction::NORMAL;
        if let Some(frame) = self.frames.push(x, &rema) {
            self.window.push_back(self.bundle.scaler.transform(&frame));
            if self.window.len() > self.bundle.detector.window {
                self.window.pop_front();
            }
            if self.window.len() == self.bundle.detector.window {
                prediction = self.classify()?;
            }
        }
        let time_type = self.time.step(prediction.detect, step)?;

        let estimate = if self.recovery_ema.is_warming_up() {
            self.last_emitted
        } else {
            self.recovery_ema.fit()?;
            *self.recovery_ema.state().ema.back().expect("fit appends")
        };
        let (recovery, alert) = self.recoverer.apply(
            step,
            raw,
            prediction.bias_type,
            time_type,
            estimate,
            self.time.run_length(),
            &self.bundle.norm,
        )?;
        let emitted = (recovery.value - self.stats.mean) / self.stats.std;
        if self.recovery_ema.is_warming_up() {
            self.recovery_ema.step(emitted);
        } else {
            self.recovery_ema.check(emitted)?;
        }
        self.last_emitted = emitted;
        Ok(PointOutput { step, normalized: x, rema, prediction, time_type, recovery, alert })
    }
}

/// Runs the streaming pipeline over a raw channel.
pub fn run_channel(
    bundle: &DetectorBundle,
    channel: Channel,
    raw: &[f64],
) -> Result<Vec<PointOutput>, PipelineError> {
    let mut p = ChannelPipeline::new(bundle, channel)?;
    raw.iter().map(|&x| p.push(x)).collect()
}
