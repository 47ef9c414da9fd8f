//! Reinforced EMA outlier screen and its grid-search tuner.
//!
//! Each step runs in two phases. `fit` predicts the next level from the
//! previous input and three lagged EMA values,
//!
//! ```text
//! p     = mean(ema[t - ss], ema[t - ss/2], ema[t - ss/3])
//! ema_t = alpha * y[t-1] + (1 - alpha) * p
//! th    = max(std(ema[t-ss .. t-1]), 1e-9)
//! band  = ema_t ± th * sensitivity
//! ```
//!
//! and `check` compares the incoming value against the band. An outlier
//! replaces `ema_t` by the mean of `ema[t-ss .. t-1]` and lowers `alpha` by
//! `punish` (floored at `alpha_min`); an inlier raises it by `reward` (capped
//! at `alpha_max`). `y[t-1]` is the previous input, or its substituted EMA
//! value when it was flagged, so a spike does not pull the next prediction.
//! Windows written `a .. b` exclude `b`.
//!
//! After `slide_size` consecutive outliers the EMA window has collapsed onto
//! its own mean and the band can no longer reopen. The detector then re-warms:
//! for the next `slide_size` steps it tracks the raw input without flagging and
//! restarts from the initial `alpha`. [`Rema::literal`] disables this.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::inject::LabeledChannel;
use crate::math;
use crate::metrics::{score_detection, DetectionScores, MetricsError};

/// Lower bound on the band half-width before scaling by the sensitivity.
pub const THRESHOLD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RemaError {
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("fit called during warm-up (step {step}, slide size {slide_size})")]
    WarmingUp { step: usize, slide_size: usize },
    #[error("check called without a preceding fit")]
    CheckBeforeFit,
    #[error("fit called twice without a check")]
    FitTwice,
    #[error("series of length {len} is too short for slide size {slide_size}")]
    SeriesTooShort { len: usize, slide_size: usize },
    #[error("grid has no valid parameter combination")]
    EmptyGrid,
    #[error("labeled data must contain both classes")]
    SingleClass,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemaParams {
    pub alpha: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub punish: f64,
    pub reward: f64,
    pub slide_size: usize,
    /// Band multiplier on the EMA window standard deviation.
    pub sensitivity: f64,
}

impl Default for RemaParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            alpha_min: 0.05,
            alpha_max: 0.99,
            punish: 0.1,
            reward: 0.02,
            slide_size: 12,
            sensitivity: 3.0,
        }
    }
}

impl RemaParams {
    pub fn validate(&self) -> Result<(), RemaError> {
        let finite = [self.alpha, self.alpha_min, self.alpha_max, self.punish, self.reward, self.sensitivity]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(RemaError::InvalidParams("all parameters must be finite"));
        }
        if !(self.alpha_min > 0.0
            && self.alpha_min <= self.alpha
            && self.alpha <= self.alpha_max
            && self.alpha_max <= 1.0)
        {
            return Err(RemaError::InvalidParams("need 0 < alpha_min <= alpha <= alpha_max <= 1"));
        }
        if self.punish <= 0.0 || self.reward <= 0.0 {
            return Err(RemaError::InvalidParams("punish and reward must be positive"));
        }
        if self.slide_size < 3 {
            return Err(RemaError::InvalidParams("slide_size must be >= 3"));
        }
        if self.sensitivity <= 0.0 {
            return Err(RemaError::InvalidParams("sensitivity must be positive"));
        }
        Ok(())
    }

    /// Lags used by the level prediction: `ss`, `ss / 2`, `ss / 3`.
    pub fn lags(&self) -> [usize; 3] {
        [self.slide_size, self.slide_size / 2, self.slide_size / 3]
    }
}

/// Result of one detector step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemaOutput {
    pub is_outlier: bool,
    /// Stored EMA for this step (after any outlier substitution).
    pub ema_value: f64,
    /// `|x - ema_value|`.
    pub distance: f64,
    /// `upper_bound - x`.
    pub upper_margin: f64,
    /// `x - lower_bound`.
    pub lower_margin: f64,
}

impl RemaOutput {
    fn passthrough(x: f64) -> Self {
        Self { is_outlier: false, ema_value: x, distance: 0.0, upper_margin: 0.0, lower_margin: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    /// Tracking raw input; this many more steps until detection resumes.
    Warmup(usize),
    Ready,
    Fitted,
}

/// Evolving detector state for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RemaState {
    /// `ema[t - ss ..= t - 1]` before `fit`; `fit` appends the prediction for `t`.
    pub ema: VecDeque<f64>,
    pub alpha_current: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub distance: f64,
    pub step_count: usize,
    last_input: f64,
    consecutive_outliers: usize,
    phase: Phase,
}

/// Streaming reinforced-EMA detector. One instance per channel.
#[derive(Debug, Clone)]
pub struct Rema {
    params: RemaParams,
    state: RemaState,
    lock_recovery: bool,
}

impl Rema {
    pub fn new(params: RemaParams) -> Result<Self, RemaError> {
        params.validate()?;
        let ss = params.slide_size;
        Ok(Self {
            params,
            state: RemaState {
                ema: VecDeque::with_capacity(ss + 1),
                alpha_current: params.alpha,
                upper_bound: 0.0,
                lower_bound: 0.0,
                distance: 0.0,
                step_count: 0,
                last_input: 0.0,
                consecutive_outliers: 0,
                phase: Phase::Warmup(ss),
            },
            lock_recovery: true,
        })
    }

    /// Detector without the re-warm rule.
    pub fn literal(params: RemaParams) -> Result<Self, RemaError> {
        let mut rema = Self::new(params)?;
        rema.lock_recovery = false;
        Ok(rema)
    }

    pub fn params(&self) -> &RemaParams {
        &self.params
    }

    pub fn state(&self) -> &RemaState {
        &self.state
    }

    pub fn is_warming_up(&self) -> bool {
        matches!(self.state.phase, Phase::Warmup(_))
    }

    fn window_mean_std(&self) -> (f64, f64) {
        let ss = self.params.slide_size;
        math::mean_std(self.state.ema.iter().take(ss - 1).copied())
    }

    /// Predicts `ema[t]` and the band for the next step from history only.
    pub fn fit(&mut self) -> Result<(), RemaError> {
        match self.state.phase {
            Phase::Warmup(_) => {
                return Err(RemaError::WarmingUp {
                    step: self.state.step_count,
                    slide_size: self.params.slide_size,
                })
            }
            Phase::Fitted => return Err(RemaError::FitTwice),
            Phase::Ready => {}
        }
        let ss = self.params.slide_size;
        let ema = &self.state.ema;
        debug_assert_eq!(ema.len(), ss);
        let p_value = self.params.lags().iter().map(|&lag| ema[ss - lag]).sum::<f64>() / 3.0;
        let a = self.state.alpha_current;
        let predicted = a * self.state.last_input + (1.0 - a) * p_value;
        let (_, std) = self.window_mean_std();
        let band = std.max(THRESHOLD_FLOOR) * self.params.sensitivity;
        self.state.upper_bound = predicted + band;
        self.state.lower_bound = predicted - band;
        self.state.ema.push_back(predicted);
        self.state.phase = Phase::Fitted;
        Ok(())
    }

    /// Compares `x` with the band computed by the preceding [`fit`](Self::fit).
    pub fn check(&mut self, x: f64) -> Result<RemaOutput, RemaError> {
        if self.state.phase != Phase::Fitted {
            return Err(RemaError::CheckBeforeFit);
        }
        let p = self.params;
        let (upper, lower) = (self.state.upper_bound, self.state.lower_bound);
        let is_outlier = x < lower || x > upper;
        if is_outlier {
            let (mean, _) = self.window_mean_std();
            *self.state.ema.back_mut().expect("fit pushed a value") = mean;
            self.state.alpha_current = (self.state.alpha_current - p.punish).max(p.alpha_min);
            self.state.consecutive_outliers += 1;
        } else {
            self.state.alpha_current = (self.state.alpha_current + p.reward).min(p.alpha_max);
            self.state.consecutive_outliers = 0;
        }
        let ema_value = *self.state.ema.back().expect("fit pushed a value");
        self.state.ema.pop_front();
        self.state.distance = (x - ema_value).abs();
        self.state.last_input = if is_outlier { ema_value } else { x };
        self.state.step_count += 1;
        self.state.phase = Phase::Ready;
        if self.lock_recovery && self.state.consecutive_outliers >= p.slide_size {
            self.state.consecutive_outliers = 0;
            self.state.alpha_current = p.alpha;
            self.state.phase = Phase::Warmup(p.slide_size);
        }
        Ok(RemaOutput {
            is_outlier,
            ema_value,
            distance: self.state.distance,
            upper_margin: upper - x,
            lower_margin: x - lower,
        })
    }

    /// Processes one value: warm-up passthrough, or `fit` followed by `check`.
    pub fn step(&mut self, x: f64) -> RemaOutput {
        match self.state.phase {
            Phase::Warmup(remaining) => {
                let ss = self.params.slide_size;
                self.state.ema.push_back(x);
                if self.state.ema.len() > ss {
                    self.state.ema.pop_front();
                }
                self.state.upper_bound = x;
                self.state.lower_bound = x;
                self.state.distance = 0.0;
                self.state.last_input = x;
                self.state.step_count += 1;
                self.state.phase = if remaining > 1 { Phase::Warmup(remaining - 1) } else { Phase::Ready };
                RemaOutput::passthrough(x)
            }
            Phase::Ready => {
                self.fit().expect("ready state admits fit");
                self.check(x).expect("fit was just called")
            }
            Phase::Fitted => {
                // a dangling fit is completed with this value
                self.check(x).expect("fitted state admits check")
            }
        }
    }
}

/// Runs the detector over a whole series in a single pass.
pub fn rema_stream(series: &[f64], params: &RemaParams) -> Result<Vec<RemaOutput>, RemaError> {
    let mut rema = Rema::new(*params)?;
    if series.len() <= params.slide_size {
        return Err(RemaError::SeriesTooShort { len: series.len(), slide_size: params.slide_size });
    }
    Ok(series.iter().map(|&x| rema.step(x)).collect())
}

/// Candidate values per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemaGrid {
    pub alpha: Vec<f64>,
    pub alpha_min: Vec<f64>,
    pub alpha_max: Vec<f64>,
    pub punish: Vec<f64>,
    pub reward: Vec<f64>,
    pub slide_size: Vec<usize>,
    pub sensitivity: Vec<f64>,
}

impl Default for RemaGrid {
    fn default() -> Self {
        Self {
            alpha: alloc::vec![0.3, 0.5, 0.7],
            alpha_min: alloc::vec![0.05, 0.1],
            alpha_max: alloc::vec![0.9, 0.99],
            punish: alloc::vec![0.05, 0.1],
            reward: alloc::vec![0.01, 0.02],
            slide_size: alloc::vec![8, 12, 20],
            sensitivity: alloc::vec![2.0, 3.0, 4.0],
        }
    }
}

impl RemaGrid {
    pub fn single(params: RemaParams) -> Self {
        Self {
            alpha: alloc::vec![params.alpha],
            alpha_min: alloc::vec![params.alpha_min],
            alpha_max: alloc::vec![params.alpha_max],
            punish: alloc::vec![params.punish],
            reward: alloc::vec![params.reward],
            slide_size: alloc::vec![params.slide_size],
            sensitivity: alloc::vec![params.sensitivity],
        }
    }

    /// Broader search over longer windows and wider bands, for noisy
    /// low-speed traces where the default bands are too tight.
    pub fn wide() -> Self {
        Self {
            alpha: alloc::vec![0.1, 0.3, 0.5, 0.7, 0.9],
            alpha_min: alloc::vec![0.01, 0.05, 0.1],
            alpha_max: alloc::vec![0.9, 0.99],
            punish: alloc::vec![0.05, 0.1, 0.2, 0.4],
            reward: alloc::vec![0.01, 0.02, 0.05],
            slide_size: alloc::vec![8, 12, 20, 30, 40],
            sensitivity: alloc::vec![2.0, 3.0, 4.0, 5.0, 6.0, 8.0],
        }
    }

    /// Valid combinations in a fixed nested order (alpha outermost).
    pub fn combinations(&self) -> Vec<RemaParams> {
        let mut out = Vec::new();
        for &alpha in &self.alpha {
            for &alpha_min in &self.alpha_min {
                for &alpha_max in &self.alpha_max {
                    for &punish in &self.punish {
                        for &reward in &self.reward {
                            for &slide_size in &self.slide_size {
                                for &sensitivity in &self.sensitivity {
                                    let p = RemaParams {
                                        alpha,
                                        alpha_min,
                                        alpha_max,
                                        punish,
                                        reward,
                                        slide_size,
                                        sensitivity,
                                    };
                                    if p.validate().is_ok() {
                                        out.push(p);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn max_slide_size(&self) -> usize {
        self.slide_size.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComboScore {
    pub combo_id: usize,
    pub params: RemaParams,
    pub f1_anomaly: f64,
    pub f1_normal: f64,
    /// Mean of the two F1 scores.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ComboScore,
    pub table: Vec<ComboScore>,
}

/// Flags from a detector run over the corrupted channel values.
pub fn outlier_flags(series: &[f64], params: &RemaParams) -> Result<Vec<bool>, RemaError> {
    Ok(rema_stream(series, params)?.iter().map(|o| o.is_outlier).collect())
}

/// Scores one parameter set on labeled channels, skipping the first `skip`
/// steps of each.
pub fn score_params(
    channels: &[&LabeledChannel],
    params: &RemaParams,
    skip: usize,
) -> Result<DetectionScores, RemaError> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for ch in channels {
        let flags = outlier_flags(&ch.corrupted, params)?;
        pred.extend_from_slice(&flags[skip.min(flags.len())..]);
        truth.extend(ch.labels[skip.min(ch.len())..].iter().map(|l| l.is_anomaly()));
    }
    Ok(score_detection(&pred, &truth)?)
}

/// `true` if `a` beats `b`: higher score, then higher anomaly F1, then smaller
/// slide size, then smaller sensitivity, then earlier combination.
pub fn better(a: &ComboScore, b: &ComboScore) -> bool {
    use core::cmp::Ordering::*;
    let order = a
        .score
        .total_cmp(&b.score)
        .then(a.f1_anomaly.total_cmp(&b.f1_anomaly))
        .then(b.params.slide_size.cmp(&a.params.slide_size))
        .then(b.params.sensitivity.total_cmp(&a.params.sensitivity))
        .then(b.combo_id.cmp(&a.combo_id));
    order == Greater
}

/// Exhaustive search over `grid`. Every combination is scored on the same
/// steps: the first `max(grid slide sizes, skip)` of each channel are excluded.
pub fn grid_search(
    channels: &[&LabeledChannel],
    grid: &RemaGrid,
    skip: usize,
) -> Result<GridSearchResult, RemaError> {
    let combos = grid.combinations();
    if combos.is_empty() {
        return Err(RemaError::EmptyGrid);
    }
    let skip = skip.max(grid.max_slide_size());
    let anomalies = channels
        .iter()
        .flat_map(|c| c.labels.iter().skip(skip))
        .filter(|l| l.is_anomaly())
        .count();
    let total: usize = channels.iter().map(|c| c.len().saturating_sub(skip)).sum();
    if anomalies == 0 || anomalies == total {
        return Err(RemaError::SingleClass);
    }
    let mut table = Vec::with_capacity(combos.len());
    for (combo_id, params) in combos.into_iter().enumerate() {
        let s = score_params(channels, &params, skip)?;
        table.push(ComboScore {
            combo_id,
            params,
            f1_anomaly: s.anomaly.f1,
            f1_normal: s.normal.f1,
            score: s.overall_f1(),
        });
    }
    let best = select_best(&table).expect("table is non-empty");
    Ok(GridSearchResult { best, table })
}

/// Order-independent argmax under [`better`].
pub fn select_best(table: &[ComboScore]) -> Option<ComboScore> {
    table.iter().copied().reduce(|best, c| if better(&c, &best) { c } else { best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params(alpha: f64, ss: usize, s: f64) -> RemaParams {
        RemaParams { alpha, alpha_min: 0.05, alpha_max: 1.0, punish: 0.1, reward: 0.02, slide_size: ss, sensitivity: s }
    }

    #[test]
    fn validation() {
        assert!(RemaParams::default().validate().is_ok());
        let mut p = RemaParams::default();
        p.slide_size = 2;
        assert!(p.validate().is_err());
        let mut p = RemaParams::default();
        p.alpha_min = 0.8;
        assert!(p.validate().is_err());
    }

    #[test]
    fn fit_before_warmup_is_error() {
        let mut r = Rema::new(params(0.5, 4, 3.0)).unwrap();
        assert!(matches!(r.fit(), Err(RemaError::WarmingUp { .. })));
        assert_eq!(r.check(1.0), Err(RemaError::CheckBeforeFit));
    }

    #[test]
    fn constant_history_fixed_point() {
        let mut r = Rema::new(params(0.5, 6, 3.0)).unwrap();
        for _ in 0..6 {
            r.step(5.0);
        }
        r.fit().unwrap();
        assert_eq!(r.fit(), Err(RemaError::FitTwice));
        let s = r.state();
        assert_eq!(*s.ema.back().unwrap(), 5.0);
        assert_eq!(s.upper_bound, 5.0 + THRESHOLD_FLOOR * 3.0);
        assert_eq!(s.lower_bound, 5.0 - THRESHOLD_FLOOR * 3.0);
    }

    #[test]
    fn alpha_one_tracks_previous_input() {
        let mut p = params(1.0, 4, 3.0);
        p.alpha_max = 1.0;
        let mut r = Rema::new(p).unwrap();
        for x in [1.0, 2.0, 3.0, 4.0] {
            r.step(x);
        }
        r.fit().unwrap();
        assert_eq!(*r.state().ema.back().unwrap(), 4.0);
    }

    #[test]
    fn interior_point_rewards_alpha() {
        let mut r = Rema::new(params(0.5, 4, 3.0)).unwrap();
        for x in [0.0, 1.0, 0.0, 1.0] {
            r.step(x);
        }
        r.fit().unwrap();
        let ema = *r.state().ema.back().unwrap();
        let out = r.check(ema).unwrap();
        assert!(!out.is_outlier);
        assert_eq!(out.distance, 0.0);
        assert_eq!(r.state().alpha_current, 0.52);
    }

    #[test]
    fn outlier_on_constant_history() {
        let mut r = Rema::new(params(0.5, 6, 3.0)).unwrap();
        for _ in 0..6 {
            r.step(5.0);
        }
        r.fit().unwrap();
        let upper = r.state().upper_bound;
        let out = r.check(upper + 1.0).unwrap();
        assert!(out.is_outlier);
        assert_eq!(out.ema_value, 5.0);
        assert!(out.upper_margin < 0.0);
        assert!((r.state().alpha_current - 0.4).abs() < 1e-15);
    }

    #[test]
    fn constant_series_saturates_alpha() {
        let p = params(0.5, 8, 3.0);
        let out = rema_stream(&[2.5; 200], &p).unwrap();
        assert!(out.iter().all(|o| !o.is_outlier));
        let mut r = Rema::new(p).unwrap();
        for _ in 0..200 {
            r.step(2.5);
        }
        assert_eq!(r.state().alpha_current, p.alpha_max);
    }

    #[test]
    fn too_short_series() {
        let p = params(0.5, 8, 3.0);
        assert_eq!(
            rema_stream(&[0.0; 8], &p),
            Err(RemaError::SeriesTooShort { len: 8, slide_size: 8 })
        );
    }

    #[test]
    fn warmup_is_passthrough() {
        let p = params(0.5, 5, 3.0);
        let xs: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let out = rema_stream(&xs, &p).unwrap();
        for (t, o) in out.iter().take(5).enumerate() {
            assert!(!o.is_outlier);
            assert_eq!(o.ema_value, xs[t]);
        }
    }

    #[test]
    fn rewarm_after_lock() {
        // a permanent level shift locks the literal detector for good
        let p = params(0.5, 6, 3.0);
        let mut xs = vec![0.0; 40];
        xs.extend(core::iter::repeat(10.0).take(60));
        let literal: Vec<bool> = {
            let mut r = Rema::literal(p).unwrap();
            xs.iter().map(|&x| r.step(x).is_outlier).collect()
        };
        assert!(literal[40..].iter().all(|&f| f));
        let flags = outlier_flags(&xs, &p).unwrap();
        assert!(flags[40..46].iter().all(|&f| f));
        assert!(flags[46..].iter().all(|&f| !f));
    }

    #[test]
    fn empty_grid_rejected() {
        let mut g = RemaGrid::single(RemaParams::default());
        g.alpha_min = vec![0.9];
        assert!(g.combinations().is_empty());
    }

    #[test]
    fn tie_break_prefers_small_windows() {
        let a = ComboScore { combo_id: 1, params: params(0.5, 8, 3.0), f1_anomaly: 0.5, f1_normal: 0.9, score: 0.7 };
        let mut b = a;
        b.combo_id = 0;
        b.params.slide_size = 12;
        assert!(better(&a, &b));
        let mut c = a;
        c.f1_anomaly = 0.6;
        c.f1_normal = 0.8;
        assert!(better(&c, &a));
    }
}
