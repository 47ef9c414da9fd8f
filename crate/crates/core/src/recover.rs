//! Temporal typing of detected anomalies and value recovery.
//!
//! [`TimeClassifier`] counts consecutive detections and remembers recent
//! episodes. A run is permanent once it reaches `permanent_min` steps,
//! intermittent when it is at least the `intermittent_min_episodes`-th episode
//! inside the horizon, and transient otherwise. Labels only escalate while a
//! run continues; earlier emissions are never rewritten.
//!
//! [`Recoverer`] turns a typed detection into an emitted value: normal
//! readings pass through, short-lived anomalies are replaced by the EMA
//! estimate, and permanent faults hold the last trusted value and raise one
//! alert per run.

use alloc::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::inject::{BiasType, EpisodeShape, TimeType};
use crate::trace::{denormalize, Channel, NormStats, TraceError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecoverError {
    #[error("step {step} is not after previous step {previous}")]
    OutOfOrder { step: usize, previous: usize },
    #[error("invalid thresholds: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeThresholds {
    pub transient_max: usize,
    pub intermittent_min_episodes: usize,
    pub horizon: usize,
    pub permanent_min: usize,
}

impl Default for TimeThresholds {
    fn default() -> Self {
        EpisodeShape::default().into()
    }
}

impl From<EpisodeShape> for TimeThresholds {
    fn from(s: EpisodeShape) -> Self {
        Self {
            transient_max: s.transient_max,
            intermittent_min_episodes: s.intermittent_min_episodes,
            horizon: s.horizon,
            permanent_min: s.permanent_min,
        }
    }
}

impl TimeThresholds {
    pub fn validate(&self) -> Result<(), RecoverError> {
        if self.intermittent_min_episodes < 2 {
            return Err(RecoverError::InvalidConfig("intermittent_min_episodes must be >= 2"));
        }
        if self.permanent_min <= self.transient_max {
            return Err(RecoverError::InvalidConfig("permanent_min must exceed transient_max"));
        }
        if self.horizon == 0 {
            return Err(RecoverError::InvalidConfig("horizon must be >= 1"));
        }
        Ok(())
    }
}

/// Run counter plus memory of recently completed episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeClassifier {
    thresholds: TimeThresholds,
    run_length: usize,
    run_label: TimeType,
    /// Last step of each completed episode still inside the horizon.
    episodes: VecDeque<usize>,
    last_step: Option<usize>,
}

impl TimeClassifier {
    pub fn new(thresholds: TimeThresholds) -> Result<Self, RecoverError> {
        thresholds.validate()?;
        Ok(Self {
            thresholds,
            run_length: 0,
            run_label: TimeType::None,
            episodes: VecDeque::new(),
            last_step: None,
        })
    }

    pub fn thresholds(&self) -> &TimeThresholds {
        &self.thresholds
    }

    pub fn run_length(&self) -> usize {
        self.run_length
    }

    pub fn episode_memory(&self) -> impl Iterator<Item = usize> + '_ {
        self.episodes.iter().copied()
    }

    /// Types the detection at `step`; normal steps return [`TimeType::None`].
    pub fn step(&mut self, is_anomaly: bool, step: usize) -> Result<TimeType, RecoverError> {
        if let Some(previous) = self.last_step {
            if step <= previous {
                return Err(RecoverError::OutOfOrder { step, previous });
            }
        }
        self.last_step = Some(step);
        let horizon = self.thresholds.horizon;
        while self.episodes.front().is_some_and(|&end| step - end > horizon) {
            self.episodes.pop_front();
        }
        if !is_anomaly {
            if self.run_length > 0 {
                self.episodes.push_back(step - 1);
                self.run_length = 0;
                self.run_label = TimeType::None;
            }
            return Ok(TimeType::None);
        }
        self.run_length += 1;
        let label = if self.run_length >= self.thresholds.permanent_min {
            TimeType::Permanent
        } else if self.episodes.len() + 1 >= self.thresholds.intermittent_min_episodes {
            TimeType::Intermittent
        } else {
            TimeType::Transient
        };
        self.run_label = self.run_label.max(label);
        Ok(self.run_label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Passthrough,
    Replaced,
    Alert,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Passthrough => "passthrough",
            Action::Replaced => "replaced",
            Action::Alert => "alert",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutput {
    /// Emitted reading in raw units.
    pub value: f64,
    pub action: Action,
    pub time_type: TimeType,
    pub bias_type: Option<BiasType>,
}

/// Raised on the first permanent step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertEvent {
    pub step: usize,
    pub channel: Channel,
    /// Run length when the alert fired.
    pub run_length: usize,
}

/// Stateless recovery rule. `ema` is the normalized EMA estimate for this
/// step and `held` the last trusted raw value.
pub fn recover(
    x: f64,
    bias_type: Option<BiasType>,
    time_type: TimeType,
    ema: f64,
    held: f64,
    stats: &NormStats,
    channel: Channel,
) -> Result<RecoveryOutput, RecoverError> {
    let (value, action) = match time_type {
        TimeType::None => (x, Action::Passthrough),
        TimeType::Transient | TimeType::Intermittent => (denormalize(ema, stats, channel)?, Action::Replaced),
        TimeType::Permanent => (held, Action::Alert),
    };
    Ok(RecoveryOutput { value, action, time_type, bias_type })
}

/// Per-channel recovery state: the last trusted value and whether the
/// current run has already alerted.
#[derive(Debug, Clone, PartialEq)]
pub struct Recoverer {
    channel: Channel,
    last_trusted: Option<f64>,
    alerted: bool,
}

impl Recoverer {
    pub fn new(channel: Channel) -> Self {
        Self { channel, last_trusted: None, alerted: false }
    }

    pub fn last_trusted(&self) -> Option<f64> {
        self.last_trusted
    }

    /// Applies [`recover`] and tracks alerts. `run_length` is the classifier's
    /// current run length.
    #[allow(clippy::too_many_arguments)]
    pub fn apply(
        &mut self,
        step: usize,
        x: f64,
        bias_type: Option<BiasType>,
        time_type: TimeType,
        ema: f64,
        run_length: usize,
        stats: &NormStats,
    ) -> Result<(RecoveryOutput, Option<AlertEvent>), RecoverError> {
        let held = self.last_trusted.unwrap_or(x);
        let out = recover(x, bias_type, time_type, ema, held, stats, self.channel)?;
        let mut alert = None;
        match out.action {
            Action::Alert => {
                if !self.alerted {
                    self.alerted = true;
                    alert = Some(AlertEvent { step, channel: self.channel, run_length });
                }
            }
            _ => {
                self.last_trusted = Some(out.value);
                if time_type == TimeType::None {
                    self.alerted = false;
                }
            }
        }
        Ok((out, alert))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn run(flags: &[bool]) -> Vec<TimeType> {
        let mut c = TimeClassifier::new(TimeThresholds::default()).unwrap();
        flags.iter().enumerate().map(|(i, &f)| c.step(f, i).unwrap()).collect()
    }

    #[test]
    fn isolated_is_transient() {
        let out = run(&[false, true, false]);
        assert_eq!(out, [TimeType::None, TimeType::Transient, TimeType::None]);
    }

    #[test]
    fn long_run_turns_permanent() {
        let mut flags = alloc::vec![false];
        flags.extend([true; 25]);
        let out = run(&flags);
        assert!(out[1..20].iter().all(|&t| t == TimeType::Transient));
        assert!(out[20..].iter().all(|&t| t == TimeType::Permanent));
    }

    #[test]
    fn third_episode_is_intermittent() {
        let mut flags = [false; 40];
        for start in [5, 15, 25] {
            flags[start] = true;
            flags[start + 1] = true;
        }
        let out = run(&flags);
        assert_eq!(&out[5..7], &[TimeType::Transient; 2]);
        assert_eq!(&out[15..17], &[TimeType::Transient; 2]);
        assert_eq!(&out[25..27], &[TimeType::Intermittent; 2]);
    }

    #[test]
    fn memory_expires() {
        let mut flags = [false; 200];
        flags[5] = true;
        flags[15] = true;
        flags[100] = true;
        assert_eq!(run(&flags)[100], TimeType::Transient);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut c = TimeClassifier::new(TimeThresholds::default()).unwrap();
        c.step(false, 3).unwrap();
        assert_eq!(c.step(true, 3), Err(RecoverError::OutOfOrder { step: 3, previous: 3 }));
    }

    #[test]
    fn recovery_paths() {
        let stats = NormStats::identity(&[Channel::Latitude]);
        let ch = Channel::Latitude;
        let out = recover(5.0, None, TimeType::None, 0.0, 0.0, &stats, ch).unwrap();
        assert_eq!((out.value, out.action), (5.0, Action::Passthrough));
        let out = recover(9.0, Some(BiasType::Jump), TimeType::Transient, 4.2, 0.0, &stats, ch).unwrap();
        assert_eq!((out.value, out.action), (4.2, Action::Replaced));
        let out = recover(9.0, Some(BiasType::Jump), TimeType::Permanent, 4.2, 3.0, &stats, ch).unwrap();
        assert_eq!((out.value, out.action), (3.0, Action::Alert));
    }

    #[test]
    fn one_alert_per_run() {
        let stats = NormStats::identity(&[Channel::Latitude]);
        let mut r = Recoverer::new(Channel::Latitude);
        let mut alerts = 0;
        for (step, tt) in [TimeType::None, TimeType::Permanent, TimeType::Permanent, TimeType::None, TimeType::Permanent]
            .into_iter()
            .enumerate()
        {
            let (_, alert) = r.apply(step, 1.0, None, tt, 0.0, 20, &stats).unwrap();
            alerts += alert.is_some() as usize;
        }
        assert_eq!(alerts, 2);
    }
}
