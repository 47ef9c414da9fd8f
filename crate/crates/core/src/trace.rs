//! GPS readings, temporal ordering, gap filling and z-score normalization.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::math;

/// Sensor channel. The order of [`Channel::ALL`] is the fixed channel order
/// used by every file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Latitude,
    Longitude,
    Speed,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Latitude, Channel::Longitude, Channel::Speed];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Latitude => "latitude",
            Channel::Longitude => "longitude",
            Channel::Speed => "speed",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "latitude" | "lat" => Ok(Channel::Latitude),
            "longitude" | "lon" | "lng" => Ok(Channel::Longitude),
            "speed" => Ok(Channel::Speed),
            _ => Err(TraceError::UnknownChannelName(String::from(s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("latitude out of range")]
    LatitudeOutOfRange(f64),
    #[error("longitude out of range")]
    LongitudeOutOfRange(f64),
    #[error("speed must be non-negative")]
    NegativeSpeed(f64),
    #[error("timestamp is not finite")]
    NonFiniteTimestamp,
    #[error("{0} value is not finite")]
    NonFiniteValue(Channel),
    #[error("trace is empty")]
    Empty,
    #[error("channel {channel} has {valid} valid values, at least 2 are required")]
    TooFewValues { channel: Channel, valid: usize },
    #[error("channel {0} has missing values; run interpolate_missing first")]
    Incomplete(Channel),
    #[error("no normalization statistics for channel {0}")]
    UnknownChannel(Channel),
    #[error("unknown channel name {0:?}")]
    UnknownChannelName(String),
    #[error("standard deviation for channel {0} must be positive")]
    NonPositiveStd(Channel),
}

/// One timestamped sample. `None` marks a missing value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsReading {
    pub timestamp: f64,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub speed: Option<f64>,
}

impl GpsReading {
    /// Validates coordinate ranges; out-of-range values are errors, never clamped.
    pub fn new(
        timestamp: f64,
        latitude: Option<f64>,
        longitude: Option<f64>,
        speed: Option<f64>,
    ) -> Result<Self, TraceError> {
        if !timestamp.is_finite() {
            return Err(TraceError::NonFiniteTimestamp);
        }
        if let Some(lat) = latitude {
            if !lat.is_finite() {
                return Err(TraceError::NonFiniteValue(Channel::Latitude));
            }
            if !(-90.0..=90.0).contains(&lat) {
                return Err(TraceError::LatitudeOutOfRange(lat));
            }
        }
        if let Some(lon) = longitude {
            if !lon.is_finite() {
                return Err(TraceError::NonFiniteValue(Channel::Longitude));
            }
            if !(-180.0..=180.0).contains(&lon) {
                return Err(TraceError::LongitudeOutOfRange(lon));
            }
        }
        if let Some(v) = speed {
            if !v.is_finite() {
                return Err(TraceError::NonFiniteValue(Channel::Speed));
            }
            if v < 0.0 {
                return Err(TraceError::NegativeSpeed(v));
            }
        }
        Ok(Self { timestamp, latitude, longitude, speed })
    }

    pub fn get(&self, channel: Channel) -> Option<f64> {
        match channel {
            Channel::Latitude => self.latitude,
            Channel::Longitude => self.longitude,
            Channel::Speed => self.speed,
        }
    }

    fn set(&mut self, channel: Channel, value: Option<f64>) {
        match channel {
            Channel::Latitude => self.latitude = value,
            Channel::Longitude => self.longitude = value,
            Channel::Speed => self.speed = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub source_id: String,
    pub readings: Vec<GpsReading>,
}

impl Trace {
    pub fn new(source_id: impl Into<String>, readings: Vec<GpsReading>) -> Self {
        Self { source_id: source_id.into(), readings }
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.readings.iter().map(|r| r.timestamp).collect()
    }

    pub fn valid_count(&self, channel: Channel) -> usize {
        self.readings.iter().filter(|r| r.get(channel).is_some()).count()
    }

    /// Channels that carry at least one value.
    pub fn present_channels(&self) -> Vec<Channel> {
        Channel::ALL.into_iter().filter(|&c| self.valid_count(c) > 0).collect()
    }
}

/// Sorts by timestamp and merges readings that share a timestamp by the
/// per-channel mean of their non-missing values.
pub fn sort_merge(trace: Trace) -> Result<Trace, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let Trace { source_id, mut readings } = trace;
    readings.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));

    let mut merged: Vec<GpsReading> = Vec::with_capacity(readings.len());
    let mut i = 0;
    while i < readings.len() {
        let t = readings[i].timestamp;
        let mut j = i + 1;
        while j < readings.len() && readings[j].timestamp == t {
            j += 1;
        }
        if j - i == 1 {
            merged.push(readings[i]);
        } else {
            let group = &readings[i..j];
            let mut out = GpsReading { timestamp: t, latitude: None, longitude: None, speed: None };
            for channel in Channel::ALL {
                let (sum, n) = group
                    .iter()
                    .filter_map(|r| r.get(channel))
                    .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                out.set(channel, (n > 0).then(|| sum / n as f64));
            }
            merged.push(out);
        }
        i = j;
    }
    Ok(Trace { source_id, readings: merged })
}

/// Number of values filled per channel by [`interpolate_missing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FillReport {
    pub filled: [usize; 3],
}

impl FillReport {
    pub fn get(&self, channel: Channel) -> usize {
        self.filled[channel.index()]
    }

    pub fn total(&self) -> usize {
        self.filled.iter().sum()
    }
}

/// Fills interior gaps by linear interpolation on the timestamp and leading or
/// trailing gaps with the nearest valid value.
///
/// A channel with no values at all is treated as absent and left untouched;
/// a channel with exactly one value is an error.
pub fn interpolate_missing(trace: Trace) -> Result<(Trace, FillReport), TraceError> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    let Trace { source_id, mut readings } = trace;
    let mut report = FillReport::default();
    for channel in Channel::ALL {
        let valid: Vec<usize> =
            (0..readings.len()).filter(|&i| readings[i].get(channel).is_some()).collect();
        if valid.is_empty() && channel == Channel::Speed {
            continue;
        }
        if valid.len() < 2 {
            return Err(TraceError::TooFewValues { channel, valid: valid.len() });
        }
        if valid.len() == readings.len() {
            continue;
        }
        let first = valid[0];
        let last = valid[valid.len() - 1];
        let mut filled = 0;
        let head = readings[first].get(channel);
        for r in &mut readings[..first] {
            r.set(channel, head);
            filled += 1;
        }
        let tail = readings[last].get(channel);
        for r in &mut readings[last + 1..] {
            r.set(channel, tail);
            filled += 1;
        }
        for pair in valid.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a < 2 {
                continue;
            }
            let (ta, tb) = (readings[a].timestamp, readings[b].timestamp);
            let (ya, yb) = (readings[a].get(channel).unwrap(), readings[b].get(channel).unwrap());
            for k in a + 1..b {
                let w = (readings[k].timestamp - ta) / (tb - ta);
                readings[k].set(channel, Some(ya + w * (yb - ya)));
                filled += 1;
            }
        }
        report.filled[channel.index()] = filled;
    }
    Ok((Trace { source_id, readings }, report))
}

/// Analysis-ready data: fully populated, one column per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub source_id: String,
    pub timestamps: Vec<f64>,
    pub columns: Vec<Column>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub channel: Channel,
    pub values: Vec<f64>,
}

impl Series {
    /// Extracts every present channel; fails if any present channel still has gaps.
    pub fn from_trace(trace: &Trace) -> Result<Self, TraceError> {
        if trace.is_empty() {
            return Err(TraceError::Empty);
        }
        let mut columns = Vec::new();
        for channel in trace.present_channels() {
            let values: Option<Vec<f64>> = trace.readings.iter().map(|r| r.get(channel)).collect();
            let values = values.ok_or(TraceError::Incomplete(channel))?;
            columns.push(Column { channel, values });
        }
        Ok(Self { source_id: trace.source_id.clone(), timestamps: trace.timestamps(), columns })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, channel: Channel) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.channel == channel).map(|c| c.values.as_slice())
    }

    /// Contiguous sub-range `[start, end)` of every column.
    pub fn slice(&self, start: usize, end: usize) -> Series {
        Series {
            source_id: self.source_id.clone(),
            timestamps: self.timestamps[start..end].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|c| Column { channel: c.channel, values: c.values[start..end].to_vec() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub channel: Channel,
    pub mean: f64,
    pub std: f64,
    /// Set when the channel was constant at fit time and `std` was replaced by 1.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: Vec<ChannelStats>,
}

impl NormStats {
    pub fn identity(channels: &[Channel]) -> Self {
        Self {
            channels: channels
                .iter()
                .map(|&channel| ChannelStats { channel, mean: 0.0, std: 1.0, degenerate: false })
                .collect(),
        }
    }

    /// Population mean and standard deviation per column. A zero-variance
    /// column gets `std = 1` and is flagged degenerate.
    pub fn fit(series: &Series) -> Result<Self, TraceError> {
        let mut channels = Vec::with_capacity(series.columns.len());
        for col in &series.columns {
            if col.values.len() < 2 {
                return Err(TraceError::TooFewValues { channel: col.channel, valid: col.values.len() });
            }
            let mean = math::mean(&col.values);
            let std = math::pop_std(&col.values);
            let stats = if std > 0.0 {
                ChannelStats { channel: col.channel, mean, std, degenerate: false }
            } else {
                log::warn!("channel {} has zero variance; using std = 1", col.channel);
                ChannelStats { channel: col.channel, mean, std: 1.0, degenerate: true }
            };
            channels.push(stats);
        }
        Ok(Self { channels })
    }

    pub fn get(&self, channel: Channel) -> Result<&ChannelStats, TraceError> {
        self.channels
            .iter()
            .find(|c| c.channel == channel)
            .ok_or(TraceError::UnknownChannel(channel))
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        for c in &self.channels {
            if !(c.std > 0.0 && c.std.is_finite()) {
                return Err(TraceError::NonPositiveStd(c.channel));
            }
        }
        Ok(())
    }
}

/// Where normalization statistics come from.
#[derive(Debug, Clone, Copy)]
pub enum NormSource<'a> {
    Fit,
    Use(&'a NormStats),
}

/// Z-scores every column with supplied or freshly fitted statistics.
pub fn normalize(series: &Series, source: NormSource<'_>) -> Result<(Series, NormStats), TraceError> {
    let stats = match source {
        NormSource::Fit => NormStats::fit(series)?,
        NormSource::Use(s) => {
            s.validate()?;
            s.clone()
        }
    };
    let mut out = series.clone();
    for col in &mut out.columns {
        let st = stats.get(col.channel)?;
        for v in &mut col.values {
            *v = (*v - st.mean) / st.std;
        }
    }
    Ok((out, stats))
}

/// Maps one normalized value back to raw units.
pub fn denormalize(value: f64, stats: &NormStats, channel: Channel) -> Result<f64, TraceError> {
    let st = stats.get(channel)?;
    Ok(value * st.std + st.mean)
}
