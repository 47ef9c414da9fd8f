//! Multi-window features: a least-squares trend over a long window, dispersion
//! and momentum statistics over a short one, and the detector's EMA outputs.
//!
//! For the frame at step `t`:
//!
//! - regression over `x[t - R + 1 ..= t]` against the local index `0 .. R`
//! - statistics over `x[t - S .. t]`, with `x[t]` as the incoming value
//! - RSI over `x[t - W .. t]`
//!
//! Frames start at `t = R`, so a series of length `n` yields `n - R` frames.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::rema::RemaOutput;

pub const FEATURE_COUNT: usize = 11;

/// Column names in [`FeatureFrame::to_array`] order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "slope",
    "intercept",
    "se",
    "std",
    "rsi",
    "range",
    "variation",
    "ema",
    "distance",
    "upper_margin",
    "lower_margin",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("window of length {len} is too short (need {min})")]
    WindowTooShort { len: usize, min: usize },
    #[error("invalid window config: {0}")]
    InvalidConfig(&'static str),
    #[error("series has {series} values but {rema} detector outputs")]
    Misaligned { series: usize, rema: usize },
    #[error("series of length {len} needs more than {window} values")]
    SeriesTooShort { len: usize, window: usize },
    #[error("no frames to fit scaler on")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub regression_window: usize,
    pub stat_window: usize,
    pub rsi_window: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { regression_window: 20, stat_window: 10, rsi_window: 10 }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.regression_window < 3 {
            return Err(FeatureError::InvalidConfig("regression_window must be >= 3"));
        }
        if self.stat_window < 2 || self.rsi_window < 2 {
            return Err(FeatureError::InvalidConfig("stat_window and rsi_window must be >= 2"));
        }
        if self.stat_window > self.regression_window || self.rsi_window > self.regression_window {
            return Err(FeatureError::InvalidConfig("short windows must not exceed regression_window"));
        }
        Ok(())
    }

    /// Values of history a frame needs, including the incoming one.
    pub fn history(&self) -> usize {
        self.regression_window + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub slope: f64,
    pub intercept: f64,
    pub se: f64,
    pub std: f64,
    pub rsi: f64,
    pub range: f64,
    pub variation: f64,
    pub ema: f64,
    pub distance: f64,
    pub upper_margin: f64,
    pub lower_margin: f64,
}

impl FeatureFrame {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.slope,
            self.intercept,
            self.se,
            self.std,
            self.rsi,
            self.range,
            self.variation,
            self.ema,
            self.distance,
            self.upper_margin,
            self.lower_margin,
        ]
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        Self {
            slope: a[0],
            intercept: a[1],
            se: a[2],
            std: a[3],
            rsi: a[4],
            range: a[5],
            variation: a[6],
            ema: a[7],
            distance: a[8],
            upper_margin: a[9],
            lower_margin: a[10],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Least-squares line through `(i, y[i])`; returns `(slope, intercept, se)`
/// with `se = sqrt(SSR / (n - 2))`.
pub fn regression_features(y: &[f64]) -> Result<(f64, f64, f64), FeatureError> {
    let n = y.len();
    if n < 3 {
        return Err(FeatureError::WindowTooShort { len: n, min: 3 });
    }
    let nf = n as f64;
    let x_mean = (nf - 1.0) / 2.0;
    let y_mean = math::mean(y);
    let sxx = nf * (nf * nf - 1.0) / 12.0;
    let sxy: f64 = y.iter().enumerate().map(|(i, &v)| (i as f64 - x_mean) * (v - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ssr: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let r = (v - y_mean) - slope * (i as f64 - x_mean);
            r * r
        })
        .sum();
    Ok((slope, intercept, math::sqrt(ssr / (nf - 2.0))))
}

/// Relative strength index of a window's first differences, simple averages.
/// No losses gives 100; a flat window gives 50.
pub fn rsi(window: &[f64]) -> Result<f64, FeatureError> {
    if window.len() < 2 {
        return Err(FeatureError::WindowTooShort { len: window.len(), min: 2 });
    }
    let (mut gain, mut loss) = (0.0, 0.0);
    for w in window.windows(2) {
        let d = w[1] - w[0];
        if d > 0.0 {
            gain += d;
        } else {
            loss -= d;
        }
    }
    let m = (window.len() - 1) as f64;
    let (gain, loss) = (gain / m, loss / m);
    Ok(if loss == 0.0 {
        if gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        100.0 - 100.0 / (1.0 + gain / loss)
    })
}

/// Returns `(std, rsi, range, variation)` for a short window and the value
/// that follows it. RSI uses the same window.
pub fn stat_features(window: &[f64], incoming: f64) -> Result<(f64, f64, f64, f64), FeatureError> {
    let rsi = rsi(window)?;
    let std = math::pop_std(window);
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let variation = incoming - window[window.len() - 1];
    Ok((std, rsi, hi - lo, variation))
}

/// Builds the frame for the last element of `history`, which must hold at
/// least `regression_window + 1` values ending at the current step.
fn frame_from(history: &[f64], rema: &RemaOutput, config: &WindowConfig) -> FeatureFrame {
    let t = history.len() - 1;
    let incoming = history[t];
    let (slope, intercept, se) = regression_features(&history[t + 1 - config.regression_window..=t])
        .expect("validated window");
    let (std, _, range, variation) =
        stat_features(&history[t - config.stat_window..t], incoming).expect("validated window");
    let rsi = rsi(&history[t - config.rsi_window..t]).expect("validated window");
    FeatureFrame {
        slope,
        intercept,
        se,
        std,
        rsi,
        range,
        variation,
        ema: rema.ema_value,
        distance: rema.distance,
        upper_margin: rema.upper_margin,
        lower_margin: rema.lower_margin,
    }
}

/// One frame per step from `regression_window` onward.
pub fn assemble_frames(
    series: &[f64],
    rema: &[RemaOutput],
    config: &WindowConfig,
) -> Result<Vec<FeatureFrame>, FeatureError> {
    config.validate()?;
    if series.len() != rema.len() {
        return Err(FeatureError::Misaligned { series: series.len(), rema: rema.len() });
    }
    let r = config.regression_window;
    if series.len() <= r {
        return Err(FeatureError::SeriesTooShort { len: series.len(), window: r });
    }
    Ok((r..series.len()).map(|t| frame_from(&series[t - r..=t], &rema[t], config)).collect())
}

/// Incremental counterpart of [`assemble_frames`]; produces identical frames.
#[derive(Debug, Clone)]
pub struct FrameBuilder {
    config: WindowConfig,
    history: VecDeque<f64>,
}

impl FrameBuilder {
    pub fn new(config: WindowConfig) -> Result<Self, FeatureError> {
        config.validate()?;
        Ok(Self { config, history: VecDeque::with_capacity(config.history() + 1) })
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    /// Adds the value at the current step; returns a frame once enough
    /// history has accumulated.
    pub fn push(&mut self, x: f64, rema: &RemaOutput) -> Option<FeatureFrame> {
        self.history.push_back(x);
        if self.history.len() > self.config.history() {
            self.history.pop_front();
        }
        if self.history.len() < self.config.history() {
            return None;
        }
        Some(frame_from(self.history.make_contiguous(), rema, &self.config))
    }
}

/// FNV-1a digest of the feature names and window sizes. Models trained on
/// different layouts get different hashes.
pub fn schema_hash(config: &WindowConfig) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for name in FEATURE_NAMES {
        eat(name.as_bytes());
        eat(&[0]);
    }
    for w in [config.regression_window, config.stat_window, config.rsi_window] {
        eat(&(w as u64).to_le_bytes());
    }
    h
}

/// Per-feature z-score fitted on training frames. A constant feature keeps
/// std 1 so it maps to zero rather than dividing by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self { mean: [0.0; FEATURE_COUNT], std: [1.0; FEATURE_COUNT] }
    }

    pub fn fit(frames: &[FeatureFrame]) -> Result<Self, FeatureError> {
        if frames.is_empty() {
            return Err(FeatureError::Empty);
        }
        let mut mean = [0.0; FEATURE_COUNT];
        let mut std = [1.0; FEATURE_COUNT];
        for k in 0..FEATURE_COUNT {
            let (m, s) = math::mean_std(frames.iter().map(|f| f.to_array()[k]));
            mean[k] = m;
            if s > 0.0 && s.is_finite() {
                std[k] = s;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, frame: &FeatureFrame) -> [f64; FEATURE_COUNT] {
        let mut a = frame.to_array();
        for (k, v) in a.iter_mut().enumerate() {
            *v = (*v - self.mean[k]) / self.std[k];
        }
        a
    }

    pub fn transform_all(&self, frames: &[FeatureFrame]) -> Vec<[f64; FEATURE_COUNT]> {
        frames.iter().map(|f| self.transform(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rema::{rema_stream, RemaParams};
    use alloc::vec;

    #[test]
    fn exact_line() {
        let (m, c, se) = regression_features(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!((m, c, se), (1.0, 0.0, 0.0));
        let (m, c, se) = regression_features(&[4.5; 4]).unwrap();
        assert_eq!((m, c, se), (0.0, 4.5, 0.0));
        assert!(regression_features(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rsi_extremes() {
        assert_eq!(rsi(&[1.0, 2.0, 3.0]).unwrap(), 100.0);
        assert_eq!(rsi(&[3.0, 2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(rsi(&[2.0, 2.0, 2.0]).unwrap(), 50.0);
    }

    #[test]
    fn hand_computed_stats() {
        // diffs 2, -1, 3: gains 5/3, losses 1/3, RS 5, RSI 100 - 100/6
        let (std, rsi, range, variation) = stat_features(&[1.0, 3.0, 2.0, 5.0], 4.0).unwrap();
        assert!((std - libm::sqrt(2.1875)).abs() < 1e-15);
        assert!((rsi - (100.0 - 100.0 / 6.0)).abs() < 1e-12);
        assert_eq!(range, 4.0);
        assert_eq!(variation, -1.0);
    }

    #[test]
    fn frame_count_and_builder_agree() {
        let xs: Vec<f64> = (0..80).map(|i| libm::sin(i as f64 * 0.3) + 0.01 * i as f64).collect();
        let rema = rema_stream(&xs, &RemaParams::default()).unwrap();
        let cfg = WindowConfig::default();
        let frames = assemble_frames(&xs, &rema, &cfg).unwrap();
        assert_eq!(frames.len(), 60);
        let mut b = FrameBuilder::new(cfg).unwrap();
        let streamed: Vec<_> = xs.iter().zip(&rema).filter_map(|(&x, r)| b.push(x, r)).collect();
        assert_eq!(streamed, frames);
    }

    #[test]
    fn config_validation() {
        let bad = WindowConfig { regression_window: 5, stat_window: 8, rsi_window: 8 };
        assert!(bad.validate().is_err());
        assert!(assemble_frames(&[0.0; 10], &[], &WindowConfig::default()).is_err());
    }

    #[test]
    fn schema_hash_tracks_windows() {
        let a = WindowConfig::default();
        let b = WindowConfig { regression_window: 30, ..a };
        assert_eq!(schema_hash(&a), schema_hash(&a));
        assert_ne!(schema_hash(&a), schema_hash(&b));
    }

    #[test]
    fn scaler_constant_feature() {
        let frames = vec![FeatureFrame::default(); 3];
        let s = FeatureScaler::fit(&frames).unwrap();
        assert_eq!(s.std, [1.0; FEATURE_COUNT]);
        assert_eq!(s.transform(&frames[0]), [0.0; FEATURE_COUNT]);
    }
}
