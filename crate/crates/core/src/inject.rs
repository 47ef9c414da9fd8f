//! Labeled synthetic fault injection.
//!
//! Four injection kinds corrupt a clean (normalized) channel:
//!
//! | kind     | magnitude            | effect over `[at, at + d)`                   |
//! |----------|----------------------|----------------------------------------------|
//! | instant  | `k · N(0, 0.01)`     | one point offset, `d = 1`                    |
//! | constant | `c ~ U(0, u)`        | held flat at `clean[at - 1] + c` (stuck-at)  |
//! | bias     | `c ~ U(0, u)`        | `clean[i] + c`, shape preserved              |
//! | drift    | `linspace(0, e, d)`  | `clean[at + j] + e · j / (d - 1)`            |
//!
//! `N(0, 0.01)` is mean 0, variance 0.01. Instants are labeled `noise`, the
//! rest `jump`. A position whose value is left unchanged (the first point of
//! a drift) is labeled normal, so `corrupted[i] != clean[i]` exactly where the
//! label says anomaly.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::trace::{Channel, Series};

/// Offsets smaller than this are redrawn.
pub const MIN_OFFSET: f64 = 1e-9;
const MAX_REDRAWS: usize = 64;
const MAX_PLACEMENT_ATTEMPTS: usize = 4000;

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic child seed for an independent sub-stream (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InjectError {
    #[error("index {at} out of range for series of length {len}")]
    IndexOutOfRange { at: usize, len: usize },
    #[error("window [{at}, {end}) out of range for series of length {len}")]
    WindowOutOfRange { at: usize, end: usize, len: usize },
    #[error("constant injection needs a preceding value; at must be >= 1")]
    NoPrecedingValue,
    #[error("drift needs duration >= 2, got {0}")]
    DriftTooShort(usize),
    #[error("magnitude must be strictly positive and finite, got {0}")]
    NonPositiveMagnitude(f64),
    #[error("duration must be >= 1")]
    ZeroDuration,
    #[error("instant injections have duration 1, got {0}")]
    InstantDuration(usize),
    #[error("could not draw a non-zero offset")]
    ZeroOffset,
    #[error("target rates sum to {0}, must be <= 0.5")]
    RatesTooHigh(f64),
    #[error("rate {0} is not a fraction in [0, 1]")]
    InvalidRate(f64),
    #[error("plan is infeasible for length {n}: {reason}")]
    Infeasible { n: usize, reason: &'static str },
    #[error("invalid plan: {0}")]
    InvalidPlan(&'static str),
    #[error("channel {0} not present in series")]
    MissingChannel(Channel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    Instant,
    Constant,
    Bias,
    Drift,
}

impl InjectionKind {
    pub fn bias_type(self) -> BiasType {
        match self {
            InjectionKind::Instant => BiasType::Noise,
            _ => BiasType::Jump,
        }
    }

    /// Points that actually change for an episode of `duration` steps.
    pub fn labeled_len(self, duration: usize) -> usize {
        match self {
            InjectionKind::Drift => duration.saturating_sub(1),
            _ => duration,
        }
    }

    fn duration_for(self, labeled: usize) -> usize {
        match self {
            InjectionKind::Drift => labeled + 1,
            _ => labeled,
        }
    }
}

/// One injection. `magnitude` is the Gaussian scale `k` (instant), the uniform
/// upper bound `u` (constant, bias) or the linspace endpoint `e` (drift).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub kind: InjectionKind,
    pub magnitude: f64,
    pub duration: usize,
    pub channel: Channel,
}

impl InjectionSpec {
    pub fn validate(&self) -> Result<(), InjectError> {
        check_magnitude(self.magnitude)?;
        match self.kind {
            InjectionKind::Instant if self.duration != 1 => {
                Err(InjectError::InstantDuration(self.duration))
            }
            InjectionKind::Drift if self.duration < 2 => Err(InjectError::DriftTooShort(self.duration)),
            _ if self.duration == 0 => Err(InjectError::ZeroDuration),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detect {
    Normal,
    Anomaly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasType {
    None,
    Noise,
    Jump,
}

impl BiasType {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasType::None => "none",
            BiasType::Noise => "noise",
            BiasType::Jump => "jump",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(BiasType::None),
            "noise" => Some(BiasType::Noise),
            "jump" => Some(BiasType::Jump),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeType {
    None,
    Transient,
    Intermittent,
    Permanent,
}

impl TimeType {
    pub const ANOMALOUS: [TimeType; 3] =
        [TimeType::Transient, TimeType::Intermittent, TimeType::Permanent];

    pub fn as_str(self) -> &'static str {
        match self {
            TimeType::None => "none",
            TimeType::Transient => "transient",
            TimeType::Intermittent => "intermittent",
            TimeType::Permanent => "permanent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(TimeType::None),
            "transient" => Some(TimeType::Transient),
            "intermittent" => Some(TimeType::Intermittent),
            "permanent" => Some(TimeType::Permanent),
            _ => None,
        }
    }
}

/// Ground truth for one point. Normal points carry `none` for both types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnomalyLabel {
    pub detect: Detect,
    pub bias_type: BiasType,
    pub time_type: TimeType,
}

impl AnomalyLabel {
    pub const NORMAL: AnomalyLabel =
        AnomalyLabel { detect: Detect::Normal, bias_type: BiasType::None, time_type: TimeType::None };

    pub fn anomaly(bias_type: BiasType, time_type: TimeType) -> Self {
        debug_assert!(bias_type != BiasType::None && time_type != TimeType::None);
        Self { detect: Detect::Anomaly, bias_type, time_type }
    }

    pub fn is_anomaly(&self) -> bool {
        self.detect == Detect::Anomaly
    }

    /// The three fields agree on normal vs anomaly.
    pub fn is_consistent(&self) -> bool {
        let normal = self.detect == Detect::Normal;
        normal == (self.bias_type == BiasType::None) && normal == (self.time_type == TimeType::None)
    }
}

impl Default for AnomalyLabel {
    fn default() -> Self {
        Self::NORMAL
    }
}

fn check_magnitude(m: f64) -> Result<(), InjectError> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(InjectError::NonPositiveMagnitude(m))
    }
}

fn check_window(len: usize, at: usize, duration: usize) -> Result<(), InjectError> {
    if duration == 0 {
        return Err(InjectError::ZeroDuration);
    }
    match at.checked_add(duration) {
        Some(end) if end <= len => Ok(()),
        _ => Err(InjectError::WindowOutOfRange { at, end: at.saturating_add(duration), len }),
    }
}

fn draw_uniform<R: Rng + ?Sized>(bound: f64, rng: &mut R) -> Result<f64, InjectError> {
    for _ in 0..MAX_REDRAWS {
        let c = rng.random_range(0.0..bound);
        if c >= MIN_OFFSET {
            return Ok(c);
        }
    }
    Err(InjectError::ZeroOffset)
}

/// Draws `k · n` with `n ~ N(0, 0.01)`, i.e. `k · 0.1 · z` for standard normal `z`.
pub fn draw_instant_offset<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64, InjectError> {
    check_magnitude(scale)?;
    for _ in 0..MAX_REDRAWS {
        let z: f64 = rng.sample(StandardNormal);
        let offset = scale * 0.1 * z;
        if offset.abs() >= MIN_OFFSET {
            return Ok(offset);
        }
    }
    Err(InjectError::ZeroOffset)
}

/// Adds a single Gaussian spike at `at`.
pub fn inject_instant<R: Rng + ?Sized>(
    series: &mut [f64],
    scale: f64,
    at: usize,
    time_type: TimeType,
    rng: &mut R,
) -> Result<Vec<AnomalyLabel>, InjectError> {
    check_magnitude(scale)?;
    if at >= series.len() {
        return Err(InjectError::IndexOutOfRange { at, len: series.len() });
    }
    series[at] += draw_instant_offset(scale, rng)?;
    Ok(vec![AnomalyLabel::anomaly(BiasType::Noise, time_type)])
}

/// Stuck-at fault: the window is held at `series[at - 1] + c`, `c ~ U(0, bound)`.
pub fn inject_constant<R: Rng + ?Sized>(
    series: &mut [f64],
    bound: f64,
    at: usize,
    duration: usize,
    time_type: TimeType,
    rng: &mut R,
) -> Result<Vec<AnomalyLabel>, InjectError> {
    check_magnitude(bound)?;
    check_window(series.len(), at, duration)?;
    if at == 0 {
        return Err(InjectError::NoPrecedingValue);
    }
    let level = series[at - 1] + draw_uniform(bound, rng)?;
    series[at..at + duration].fill(level);
    Ok(vec![AnomalyLabel::anomaly(BiasType::Jump, time_type); duration])
}

/// Shape-preserving shift: `series[i] + c` over the window, `c ~ U(0, bound)`.
pub fn inject_bias<R: Rng + ?Sized>(
    series: &mut [f64],
    bound: f64,
    at: usize,
    duration: usize,
    time_type: TimeType,
    rng: &mut R,
) -> Result<Vec<AnomalyLabel>, InjectError> {
    check_magnitude(bound)?;
    check_window(series.len(), at, duration)?;
    let c = draw_uniform(bound, rng)?;
    for v in &mut series[at..at + duration] {
        *v += c;
    }
    Ok(vec![AnomalyLabel::anomaly(BiasType::Jump, time_type); duration])
}

/// Linear ramp of offsets from 0 to `endpoint` inclusive. The first point is
/// unchanged and therefore labeled normal.
pub fn inject_drift(
    series: &mut [f64],
    endpoint: f64,
    at: usize,
    duration: usize,
    time_type: TimeType,
) -> Result<Vec<AnomalyLabel>, InjectError> {
    check_magnitude(endpoint)?;
    if duration < 2 {
        return Err(InjectError::DriftTooShort(duration));
    }
    check_window(series.len(), at, duration)?;
    let last = (duration - 1) as f64;
    let mut labels = Vec::with_capacity(duration);
    for j in 0..duration {
        let offset = if j == duration - 1 { endpoint } else { endpoint * j as f64 / last };
        series[at + j] += offset;
        labels.push(if j == 0 {
            AnomalyLabel::NORMAL
        } else {
            AnomalyLabel::anomaly(BiasType::Jump, time_type)
        });
    }
    Ok(labels)
}

/// Applies one spec at `at`, dispatching on its kind.
pub fn apply_injection<R: Rng + ?Sized>(
    series: &mut [f64],
    spec: &InjectionSpec,
    at: usize,
    time_type: TimeType,
    rng: &mut R,
) -> Result<Vec<AnomalyLabel>, InjectError> {
    spec.validate()?;
    match spec.kind {
        InjectionKind::Instant => inject_instant(series, spec.magnitude, at, time_type, rng),
        InjectionKind::Constant => {
            inject_constant(series, spec.magnitude, at, spec.duration, time_type, rng)
        }
        InjectionKind::Bias => inject_bias(series, spec.magnitude, at, spec.duration, time_type, rng),
        InjectionKind::Drift => inject_drift(series, spec.magnitude, at, spec.duration, time_type),
    }
}

/// Target fraction of points for each `(time type, bias type)` cell of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryRates {
    pub transient_noise: f64,
    pub transient_jump: f64,
    pub intermittent_noise: f64,
    pub intermittent_jump: f64,
    pub permanent_noise: f64,
    pub permanent_jump: f64,
}

impl CategoryRates {
    pub fn get(&self, time: TimeType, bias: BiasType) -> f64 {
        match (time, bias) {
            (TimeType::Transient, BiasType::Noise) => self.transient_noise,
            (TimeType::Transient, BiasType::Jump) => self.transient_jump,
            (TimeType::Intermittent, BiasType::Noise) => self.intermittent_noise,
            (TimeType::Intermittent, BiasType::Jump) => self.intermittent_jump,
            (TimeType::Permanent, BiasType::Noise) => self.permanent_noise,
            (TimeType::Permanent, BiasType::Jump) => self.permanent_jump,
            _ => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.transient_noise
            + self.transient_jump
            + self.intermittent_noise
            + self.intermittent_jump
            + self.permanent_noise
            + self.permanent_jump
    }

    fn validate(&self) -> Result<(), InjectError> {
        for t in TimeType::ANOMALOUS {
            for b in [BiasType::Noise, BiasType::Jump] {
                let r = self.get(t, b);
                if !(0.0..=1.0).contains(&r) {
                    return Err(InjectError::InvalidRate(r));
                }
            }
        }
        let total = self.total();
        if total > 0.5 {
            return Err(InjectError::RatesTooHigh(total));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTargets {
    pub channel: Channel,
    pub rates: CategoryRates,
}

/// Reference anomaly profiles: per-channel time-type rates, split between
/// noise and jump in the proportion reported for each time type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Mmitss,
    Zurich,
}

impl Profile {
    /// Percent of points: `[time type][latitude, longitude, noise, jump]`.
    fn table(self) -> [[f64; 4]; 3] {
        match self {
            Profile::Mmitss => [
                [3.68, 3.62, 4.38, 2.92],
                [3.27, 3.28, 3.92, 2.63],
                [3.24, 3.21, 3.81, 2.64],
            ],
            Profile::Zurich => [
                [3.81, 3.48, 4.34, 2.96],
                [3.18, 3.33, 3.89, 2.62],
                [3.42, 3.22, 4.00, 2.64],
            ],
        }
    }

    pub fn targets(self) -> Vec<ChannelTargets> {
        let table = self.table();
        [Channel::Latitude, Channel::Longitude]
            .into_iter()
            .enumerate()
            .map(|(col, channel)| {
                let cell = |row: usize| {
                    let [_, _, noise, jump] = table[row];
                    let share = table[row][col] / 100.0;
                    (share * noise / (noise + jump), share * jump / (noise + jump))
                };
                let (tn, tj) = cell(0);
                let (inn, ij) = cell(1);
                let (pn, pj) = cell(2);
                ChannelTargets {
                    channel,
                    rates: CategoryRates {
                        transient_noise: tn,
                        transient_jump: tj,
                        intermittent_noise: inn,
                        intermittent_jump: ij,
                        permanent_noise: pn,
                        permanent_jump: pj,
                    },
                }
            })
            .collect()
    }
}

/// Magnitudes used when the planner instantiates episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionMix {
    /// Gaussian scale `k` for instants.
    pub noise_scale: f64,
    /// Jump kinds, drawn uniformly per episode.
    pub jump_kinds: Vec<InjectionKind>,
    pub constant_bound: f64,
    pub bias_bound: f64,
    pub drift_endpoint: f64,
}

impl Default for InjectionMix {
    fn default() -> Self {
        Self {
            noise_scale: 100.0,
            jump_kinds: vec![InjectionKind::Constant, InjectionKind::Bias, InjectionKind::Drift],
            constant_bound: 5.0,
            bias_bound: 5.0,
            drift_endpoint: 4.0,
        }
    }
}

impl InjectionMix {
    fn magnitude(&self, kind: InjectionKind) -> f64 {
        match kind {
            InjectionKind::Instant => self.noise_scale,
            InjectionKind::Constant => self.constant_bound,
            InjectionKind::Bias => self.bias_bound,
            InjectionKind::Drift => self.drift_endpoint,
        }
    }
}

/// Temporal shape parameters shared with the time classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeShape {
    /// Longest transient episode.
    pub transient_max: usize,
    /// Episodes per intermittent group (at least 3).
    pub intermittent_min_episodes: usize,
    pub intermittent_max_episodes: usize,
    /// An intermittent group spans at most this many steps.
    pub horizon: usize,
    pub permanent_min: usize,
    pub permanent_max: usize,
}

impl Default for EpisodeShape {
    fn default() -> Self {
        Self {
            transient_max: 2,
            intermittent_min_episodes: 3,
            intermittent_max_episodes: 5,
            horizon: 50,
            permanent_min: 20,
            permanent_max: 30,
        }
    }
}

/// Category-rate plan following a reference profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePlan {
    pub targets: Vec<ChannelTargets>,
    pub mix: InjectionMix,
    pub shape: EpisodeShape,
    /// Minimum clean steps between episodes of different clusters.
    pub min_gap: usize,
    /// No injection before this index.
    pub lead_in: usize,
}

/// Isolated episodes of one fixed injection at a fixed point rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub kind: InjectionKind,
    pub magnitude: f64,
    pub duration: usize,
    pub channels: Vec<Channel>,
    /// Fraction of points to corrupt per channel.
    pub rate: f64,
    pub min_gap: usize,
    pub lead_in: usize,
    pub permanent_min: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SchedulePlan {
    Profile(ProfilePlan),
    Scenario(ScenarioPlan),
}

impl SchedulePlan {
    pub fn profile(profile: Profile) -> Self {
        SchedulePlan::Profile(ProfilePlan {
            targets: profile.targets(),
            mix: InjectionMix::default(),
            shape: EpisodeShape::default(),
            min_gap: 3,
            lead_in: 30,
        })
    }

    pub fn empty(channels: &[Channel]) -> Self {
        SchedulePlan::Profile(ProfilePlan {
            targets: channels
                .iter()
                .map(|&channel| ChannelTargets { channel, rates: CategoryRates::default() })
                .collect(),
            mix: InjectionMix::default(),
            shape: EpisodeShape::default(),
            min_gap: 3,
            lead_in: 30,
        })
    }

    /// Single-kind scenario: isolated `kind` episodes on latitude and longitude.
    pub fn scenario(kind: InjectionKind, magnitude: f64, duration: usize, rate: f64) -> Self {
        SchedulePlan::Scenario(ScenarioPlan {
            kind,
            magnitude,
            duration,
            channels: vec![Channel::Latitude, Channel::Longitude],
            rate,
            min_gap: 3,
            lead_in: 30,
            permanent_min: EpisodeShape::default().permanent_min,
        })
    }

    pub fn channels(&self) -> Vec<Channel> {
        match self {
            SchedulePlan::Profile(p) => p.targets.iter().map(|t| t.channel).collect(),
            SchedulePlan::Scenario(s) => s.channels.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), InjectError> {
        match self {
            SchedulePlan::Profile(p) => {
                for t in &p.targets {
                    t.rates.validate()?;
                }
                let s = &p.shape;
                if s.transient_max == 0 {
                    return Err(InjectError::InvalidPlan("transient_max must be >= 1"));
                }
                if s.intermittent_min_episodes < 3
                    || s.intermittent_max_episodes < s.intermittent_min_episodes
                {
                    return Err(InjectError::InvalidPlan("intermittent groups need >= 3 episodes"));
                }
                if s.permanent_min <= s.transient_max || s.permanent_max < s.permanent_min {
                    return Err(InjectError::InvalidPlan("permanent run bounds are inconsistent"));
                }
                let span = s.intermittent_min_episodes * s.transient_max
                    + (s.intermittent_min_episodes - 1) * 2;
                if span > s.horizon {
                    return Err(InjectError::InvalidPlan("intermittent group cannot fit in horizon"));
                }
                check_magnitude(p.mix.noise_scale)?;
                if p.mix.jump_kinds.is_empty()
                    || p.mix.jump_kinds.contains(&InjectionKind::Instant)
                {
                    return Err(InjectError::InvalidPlan("jump kinds must be constant/bias/drift"));
                }
                for &k in &p.mix.jump_kinds {
                    check_magnitude(p.mix.magnitude(k))?;
                }
                Ok(())
            }
            SchedulePlan::Scenario(s) => {
                if !(0.0..=0.5).contains(&s.rate) {
                    return Err(InjectError::RatesTooHigh(s.rate));
                }
                InjectionSpec {
                    kind: s.kind,
                    magnitude: s.magnitude,
                    duration: s.duration,
                    channel: Channel::Latitude,
                }
                .validate()
            }
        }
    }
}

/// One scheduled injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedInjection {
    pub spec: InjectionSpec,
    pub at: usize,
    pub time_type: TimeType,
}

impl PlannedInjection {
    pub fn end(&self) -> usize {
        self.at + self.spec.duration
    }
}

/// A group of episodes placed as a unit; offsets are relative to the cluster start.
struct Cluster {
    span: usize,
    members: Vec<(usize, InjectionSpec, TimeType)>,
}

fn jump_kind<R: Rng + ?Sized>(mix: &InjectionMix, rng: &mut R) -> InjectionKind {
    *mix.jump_kinds.choose(rng).expect("validated non-empty")
}

fn short_episode<R: Rng + ?Sized>(
    bias: BiasType,
    labeled: usize,
    mix: &InjectionMix,
    channel: Channel,
    rng: &mut R,
) -> Vec<(usize, InjectionSpec)> {
    match bias {
        BiasType::Noise => (0..labeled)
            .map(|j| {
                let spec = InjectionSpec {
                    kind: InjectionKind::Instant,
                    magnitude: mix.noise_scale,
                    duration: 1,
                    channel,
                };
                (j, spec)
            })
            .collect(),
        _ => {
            let kind = jump_kind(mix, rng);
            let spec = InjectionSpec {
                kind,
                magnitude: mix.magnitude(kind),
                duration: kind.duration_for(labeled),
                channel,
            };
            vec![(0, spec)]
        }
    }
}

fn build_clusters<R: Rng + ?Sized>(
    n: usize,
    plan: &ProfilePlan,
    targets: &CategoryRates,
    channel: Channel,
    rng: &mut R,
) -> Vec<Cluster> {
    let shape = &plan.shape;
    let mut clusters = Vec::new();
    for bias in [BiasType::Noise, BiasType::Jump] {
        // permanent runs
        let mut remaining = libm::round(targets.get(TimeType::Permanent, bias) * n as f64) as usize;
        while remaining > 0 {
            let len = if remaining >= shape.permanent_min {
                rng.random_range(shape.permanent_min..=shape.permanent_max).min(remaining)
            } else if 2 * remaining >= shape.permanent_min {
                shape.permanent_min
            } else {
                break;
            };
            remaining = remaining.saturating_sub(len);
            let members: Vec<(usize, InjectionSpec, TimeType)> = match bias {
                BiasType::Noise => (0..len)
                    .map(|j| {
                        let spec = InjectionSpec {
                            kind: InjectionKind::Instant,
                            magnitude: plan.mix.noise_scale,
                            duration: 1,
                            channel,
                        };
                        (j, spec, TimeType::Permanent)
                    })
                    .collect(),
                _ => {
                    let kind = jump_kind(&plan.mix, rng);
                    let spec = InjectionSpec {
                        kind,
                        magnitude: plan.mix.magnitude(kind),
                        duration: kind.duration_for(len),
                        channel,
                    };
                    vec![(0, spec, TimeType::Permanent)]
                }
            };
            let span = members.iter().map(|(o, s, _)| o + s.duration).max().unwrap_or(0);
            clusters.push(Cluster { span, members });
        }

        // intermittent groups
        let mut remaining =
            libm::round(targets.get(TimeType::Intermittent, bias) * n as f64) as usize;
        while remaining >= shape.intermittent_min_episodes {
            let max_eps = shape.intermittent_max_episodes.min(remaining);
            let episodes = rng.random_range(shape.intermittent_min_episodes..=max_eps);
            let mut lens: Vec<usize> =
                (0..episodes).map(|_| rng.random_range(1..=shape.transient_max)).collect();
            // the final group absorbs or trims to land on the target
            let total: usize = lens.iter().sum();
            if total > remaining {
                let mut excess = total - remaining;
                for l in lens.iter_mut() {
                    let cut = (*l - 1).min(excess);
                    *l -= cut;
                    excess -= cut;
                }
            }
            let total: usize = lens.iter().sum();
            remaining -= total;
            let free = shape.horizon.saturating_sub(lens.iter().sum::<usize>() + 1);
            let max_gap = (free / (episodes - 1)).clamp(2, 10);
            let mut members = Vec::new();
            let mut offset = 0;
            for (e, &labeled) in lens.iter().enumerate() {
                if e > 0 {
                    offset += rng.random_range(2..=max_gap);
                }
                let mut width = 0;
                for (o, spec) in short_episode(bias, labeled, &plan.mix, channel, rng) {
                    width = width.max(o + spec.duration);
                    members.push((offset + o, spec, TimeType::Intermittent));
                }
                offset += width;
            }
            clusters.push(Cluster { span: offset, members });
        }

        // transient episodes
        let mut remaining = libm::round(targets.get(TimeType::Transient, bias) * n as f64) as usize;
        while remaining > 0 {
            let labeled = rng.random_range(1..=shape.transient_max).min(remaining);
            remaining -= labeled;
            let members: Vec<_> = short_episode(bias, labeled, &plan.mix, channel, rng)
                .into_iter()
                .map(|(o, s)| (o, s, TimeType::Transient))
                .collect();
            let span = members.iter().map(|(o, s, _)| o + s.duration).max().unwrap_or(0);
            clusters.push(Cluster { span, members });
        }
    }
    clusters
}

fn place_clusters<R: Rng + ?Sized>(
    n: usize,
    mut clusters: Vec<Cluster>,
    min_gap: usize,
    lead_in: usize,
    rng: &mut R,
) -> Result<Vec<PlannedInjection>, InjectError> {
    let lead_in = lead_in.max(1);
    let needed: usize = clusters.iter().map(|c| c.span + min_gap).sum();
    if needed + lead_in > n {
        return Err(InjectError::Infeasible { n, reason: "episodes and gaps exceed series length" });
    }
    // widest first, so the large runs still find room
    clusters.sort_by(|a, b| b.span.cmp(&a.span));
    let mut occupied = vec![false; n];
    let mut out = Vec::new();
    for cluster in clusters {
        if cluster.span + lead_in > n {
            return Err(InjectError::Infeasible { n, reason: "episode longer than series" });
        }
        let hi = n - cluster.span;
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let start = rng.random_range(lead_in..=hi);
            let lo = start.saturating_sub(min_gap);
            let end = (start + cluster.span + min_gap).min(n);
            if !occupied[lo..end].iter().any(|&o| o) {
                placed = Some(start);
                break;
            }
        }
        let start = placed.ok_or(InjectError::Infeasible { n, reason: "could not place episode" })?;
        occupied[start..start + cluster.span].fill(true);
        for (offset, spec, time_type) in cluster.members {
            out.push(PlannedInjection { spec, at: start + offset, time_type });
        }
    }
    out.sort_by_key(|p| p.at);
    Ok(out)
}

/// Schedules non-overlapping episodes on one channel of length `n`.
///
/// Profile plans hit each category's point target to within one episode;
/// scenario plans place isolated copies of a single injection.
pub fn plan_schedule<R: Rng + ?Sized>(
    n: usize,
    plan: &SchedulePlan,
    channel: Channel,
    rng: &mut R,
) -> Result<Vec<PlannedInjection>, InjectError> {
    plan.validate()?;
    match plan {
        SchedulePlan::Profile(p) => {
            let targets = p
                .targets
                .iter()
                .find(|t| t.channel == channel)
                .map(|t| t.rates)
                .unwrap_or_default();
            if targets.total() == 0.0 {
                return Ok(Vec::new());
            }
            let clusters = build_clusters(n, p, &targets, channel, rng);
            place_clusters(n, clusters, p.min_gap, p.lead_in, rng)
        }
        SchedulePlan::Scenario(s) => {
            if !s.channels.contains(&channel) || s.rate == 0.0 {
                return Ok(Vec::new());
            }
            let labeled = s.kind.labeled_len(s.duration).max(1);
            let count = libm::round(s.rate * n as f64 / labeled as f64) as usize;
            let time_type = if s.duration >= s.permanent_min {
                TimeType::Permanent
            } else {
                TimeType::Transient
            };
            let spec =
                InjectionSpec { kind: s.kind, magnitude: s.magnitude, duration: s.duration, channel };
            let clusters = (0..count)
                .map(|_| Cluster { span: s.duration, members: vec![(0, spec, time_type)] })
                .collect();
            place_clusters(n, clusters, s.min_gap, s.lead_in, rng)
        }
    }
}

/// Clean and corrupted values of one channel with per-point ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledChannel {
    pub channel: Channel,
    pub clean: Vec<f64>,
    pub corrupted: Vec<f64>,
    pub labels: Vec<AnomalyLabel>,
}

impl LabeledChannel {
    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    pub fn anomaly_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_anomaly()).collect()
    }

    pub fn slice(&self, start: usize, end: usize) -> LabeledChannel {
        LabeledChannel {
            channel: self.channel,
            clean: self.clean[start..end].to_vec(),
            corrupted: self.corrupted[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }

    /// Fraction of points labeled with the given category.
    pub fn rate(&self, time: TimeType, bias: BiasType) -> f64 {
        let hits = self
            .labels
            .iter()
            .filter(|l| l.is_anomaly() && l.time_type == time && l.bias_type == bias)
            .count();
        hits as f64 / self.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSeries {
    pub source_id: alloc::string::String,
    pub timestamps: Vec<f64>,
    pub channels: Vec<LabeledChannel>,
    pub seed: u64,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel(&self, channel: Channel) -> Option<&LabeledChannel> {
        self.channels.iter().find(|c| c.channel == channel)
    }

    pub fn slice(&self, start: usize, end: usize) -> LabeledSeries {
        LabeledSeries {
            source_id: self.source_id.clone(),
            timestamps: self.timestamps[start..end].to_vec(),
            channels: self.channels.iter().map(|c| c.slice(start, end)).collect(),
            seed: self.seed,
        }
    }
}

/// Corrupts every planned channel of a (normalized) series. Each channel uses
/// its own RNG stream derived from `seed`, so output is reproducible
/// bit-for-bit.
pub fn build_labeled_dataset(
    series: &Series,
    plan: &SchedulePlan,
    seed: u64,
) -> Result<LabeledSeries, InjectError> {
    plan.validate()?;
    let n = series.len();
    let mut channels = Vec::new();
    for channel in plan.channels() {
        let clean = series.column(channel).ok_or(InjectError::MissingChannel(channel))?.to_vec();
        let mut rng = seeded_rng(derive_seed(seed, channel.index() as u64));
        let schedule = plan_schedule(n, plan, channel, &mut rng)?;
        let mut corrupted = clean.clone();
        let mut labels = vec![AnomalyLabel::NORMAL; n];
        for p in &schedule {
            let window = apply_injection(&mut corrupted, &p.spec, p.at, p.time_type, &mut rng)?;
            labels[p.at..p.at + window.len()].copy_from_slice(&window);
        }
        for i in 0..n {
            if corrupted[i] == clean[i] {
                labels[i] = AnomalyLabel::NORMAL;
            }
        }
        channels.push(LabeledChannel { channel, clean, corrupted, labels });
    }
    Ok(LabeledSeries {
        source_id: series.source_id.clone(),
        timestamps: series.timestamps.clone(),
        channels,
        seed,
    })
}
