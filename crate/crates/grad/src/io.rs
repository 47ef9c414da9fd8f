//! CSV and TOML file formats.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! every file reads back to the same bits. Normalization statistics use a
//! fixed 17-significant-digit exponent form.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use grad_core::features::{FeatureFrame, FEATURE_NAMES};
use grad_core::gru::{EpochLog, StreamPrediction};
use grad_core::inject::{AnomalyLabel, BiasType, Detect, LabeledChannel, LabeledSeries, TimeType};
use grad_core::recover::{AlertEvent, RecoveryOutput};
use grad_core::rema::{ComboScore, RemaParams};
use grad_core::trace::{ChannelStats, GpsReading, NormStats, Trace};
use grad_core::Channel;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header names of the input trace columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub timestamp: String,
    pub latitude: String,
    pub longitude: String,
    /// Optional; a trace without this column has no speed channel.
    pub speed: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            speed: "speed".into(),
        }
    }
}

/// A row that could not become a reading. Rows are numbered from 1, not
/// counting the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub row_number: usize,
    pub reason: String,
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        kind => Error::Data(format!("{}: {kind:?}", path.display())),
    }
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(Error::io(path))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Writes text, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::io(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_field(raw: &str) -> std::result::Result<Option<f64>, ()> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| ())
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Parses a trace. Every data row ends up either as a reading or as a reject.
pub fn parse_trace<R: Read>(reader: R, map: &ColumnMap, source_id: &str) -> Result<(Trace, Vec<Reject>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(format!("malformed header: {e}")))?.clone();
    let required = |name: &str| {
        column(&headers, name).ok_or_else(|| Error::Data(format!("header has no column {name:?}")))
    };
    let (ti, lai, loi) = (required(&map.timestamp)?, required(&map.latitude)?, required(&map.longitude)?);
    let si = column(&headers, &map.speed);
    let mut readings = Vec::new();
    let mut rejects = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row_number = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject { row_number, reason: format!("unreadable row: {e}") });
                continue;
            }
        };
        if record.len() != headers.len() {
            rejects.push(Reject { row_number, reason: "wrong number of fields".into() });
            continue;
        }
        let mut values = [None; 4];
        let mut bad = None;
        for (slot, (idx, name)) in [(Some(ti), "timestamp"), (Some(lai), "latitude"), (Some(loi), "longitude"), (si, "speed")]
            .into_iter()
            .enumerate()
        {
            let Some(idx) = idx else { continue };
            match parse_field(&record[idx]) {
                Ok(v) => values[slot] = v,
                Err(()) => {
                    bad = Some(format!("invalid {name} value {:?}", record[idx].trim()));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            rejects.push(Reject { row_number, reason });
            continue;
        }
        let Some(t) = values[0] else {
            rejects.push(Reject { row_number, reason: "missing timestamp".into() });
            continue;
        };
        match GpsReading::new(t, values[1], values[2], values[3]) {
            Ok(r) => readings.push(r),
            Err(e) => rejects.push(Reject { row_number, reason: e.to_string() }),
        }
    }
    Ok((Trace::new(source_id, readings), rejects))
}

pub fn read_trace(path: &Path, map: &ColumnMap) -> Result<(Trace, Vec<Reject>)> {
    let file = File::open(path).map_err(Error::io(path))?;
    let source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_trace(file, map, &source_id)
}

/// Trace as CSV text with the default column names; missing values are empty.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["timestamp", "latitude", "longitude", "speed"]).expect("in-memory write");
    for r in &trace.readings {
        w.write_record([r.timestamp.to_string(), opt(r.latitude), opt(r.longitude), opt(r.speed)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    write_text(path, &trace_to_csv(trace))
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    let mut w = create(path)?;
    let result = (|| {
        w.write_record(["row_number", "reason"])?;
        for r in rejects {
            w.write_record([r.row_number.to_string(), r.reason.clone()])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    result.map_err(csv_err(path))
}

/// `channel,mean,std` with 17 significant digits.
pub fn write_norm_stats(path: &Path, stats: &NormStats) -> Result<()> {
    let mut text = String::from("channel,mean,std\n");
    for c in &stats.channels {
        text.push_str(&format!("{},{:.16e},{:.16e}\n", c.channel, c.mean, c.std));
    }
    write_text(path, &text)
}

pub fn read_norm_stats(path: &Path) -> Result<NormStats> {
    let mut rdr = open(path)?;
    let mut channels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(path))?;
        if record.len() != 3 {
            return Err(Error::Data(format!("{}: expected channel,mean,std", path.display())));
        }
        let channel: Channel = record[0].parse().map_err(Error::data)?;
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Data(format!("{}: bad number {s:?}", path.display())))
        };
        channels.push(ChannelStats { channel, mean: num(&record[1])?, std: num(&record[2])?, degenerate: false });
    }
    let stats = NormStats { channels };
    stats.validate().map_err(Error::data)?;
    Ok(stats)
}

/// `timestamp` then `<ch>_clean,<ch>_corrupt,<ch>_detect,<ch>_bias,<ch>_time`
/// for each channel.
pub fn write_labeled(path: &Path, series: &LabeledSeries) -> Result<()> {
    let mut w = create(path)?;
    let result = (|| {
        let mut header = vec!["timestamp".to_string()];
        for ch in &series.channels {
            for suffix in ["clean", "corrupt", "detect", "bias", "time"] {
                header.push(format!("{}_{suffix}", ch.channel));
            }
        }
        w.write_record(&header)?;
        for (i, t) in series.timestamps.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for ch in &series.channels {
                let l = ch.labels[i];
                row.push(ch.clean[i].to_string());
                row.push(ch.corrupted[i].to_string());
                row.push((l.is_anomaly() as u8).to_string());
                row.push(l.bias_type.as_str().to_string());
                row.push(l.time_type.as_str().to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    result.map_err(csv_err(path))
}

pub fn read_labeled(path: &Path) -> Result<LabeledSeries> {
    let mut rdr = open(path)?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let bad = |what: String| Error::Data(format!("{}: {what}", path.display()));
    if headers.get(0) != Some("timestamp") {
        return Err(bad("first column must be timestamp".into()));
    }
    let mut channels = Vec::new();
    for (k, chunk) in headers.iter().skip(1).collect::<Vec<_>>().chunks(5).enumerate() {
        let name = chunk[0].strip_suffix("_clean").ok_or_else(|| bad(format!("unexpected column {:?}", chunk[0])))?;
        let channel: Channel = name.parse().map_err(Error::data)?;
        let expected: Vec<String> =
            ["clean", "corrupt", "detect", "bias", "time"].iter().map(|s| format!("{name}_{s}")).collect();
        if chunk.len() != 5 || chunk.iter().zip(&expected).any(|(a, b)| a != b) {
            return Err(bad(format!("columns for channel {k} are out of order")));
        }
        channels.push(LabeledChannel { channel, clean: vec![], corrupted: vec![], labels: vec![] });
    }
    let mut timestamps = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("row {}: bad number {s:?}", row + 1)));
        timestamps.push(num(&record[0])?);
        for (k, ch) in channels.iter_mut().enumerate() {
            let base = 1 + 5 * k;
            ch.clean.push(num(&record[base])?);
            ch.corrupted.push(num(&record[base + 1])?);
            let detect = match &record[base + 2] {
                "0" => Detect::Normal,
                "1" => Detect::Anomaly,
                other => return Err(bad(format!("row {}: bad detect flag {other:?}", row + 1))),
            };
            let bias = BiasType::parse(&record[base + 3]).ok_or_else(|| bad(format!("row {}: bad bias", row + 1)))?;
            let time = TimeType::parse(&record[base + 4]).ok_or_else(|| bad(format!("row {}: bad time", row + 1)))?;
            let label = AnomalyLabel { detect, bias_type: bias, time_type: time };
            if !label.is_consistent() {
                return Err(bad(format!("row {}: inconsistent labels", row + 1)));
            }
            ch.labels.push(label);
        }
    }
    let source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LabeledSeries { source_id, timestamps, channels, seed: 0 })
}

/// Tuned detector parameters of one channel with their grid-search scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedChannel {
    pub channel: Channel,
    pub alpha: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub punish: f64,
    pub reward: f64,
    pub slide_size: usize,
    pub sensitivity: f64,
    pub f1_anomaly: f64,
    pub f1_normal: f64,
    pub score: f64,
}

impl TunedChannel {
    pub fn new(channel: Channel, best: &ComboScore) -> Self {
        let p = best.params;
        Self {
            channel,
            alpha: p.alpha,
            alpha_min: p.alpha_min,
            alpha_max: p.alpha_max,
            punish: p.punish,
            reward: p.reward,
            slide_size: p.slide_size,
            sensitivity: p.sensitivity,
            f1_anomaly: best.f1_anomaly,
            f1_normal: best.f1_normal,
            score: best.score,
        }
    }

    pub fn params(&self) -> RemaParams {
        RemaParams {
            alpha: self.alpha,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            punish: self.punish,
            reward: self.reward,
            slide_size: self.slide_size,
            sensitivity: self.sensitivity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TunedParams {
    pub channel: Vec<TunedChannel>,
}

impl TunedParams {
    pub fn params(&self) -> Vec<(Channel, RemaParams)> {
        self.channel.iter().map(|c| (c.channel, c.params())).collect()
    }
}

pub fn write_params(path: &Path, params: &TunedParams) -> Result<()> {
    let text = toml::to_string(params).map_err(Error::data)?;
    write_text(path, &text)
}

pub fn read_params(path: &Path) -> Result<TunedParams> {
    let parsed: TunedParams = toml::from_str(&read_text(path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for c in &parsed.channel {
        c.params().validate().map_err(Error::data)?;
    }
    Ok(parsed)
}

pub fn write_scores(path: &Path, table: &[ComboScore]) -> Result<()> {
    let mut w = create(path)?;
    let result = (|| {
        w.write_record([
            "combo_id", "alpha", "alpha_min", "alpha_max", "punish", "reward", "slide_size", "sensitivity",
            "f1_anomaly", "f1_normal", "score",
        ])?;
        for c in table {
            let p = c.params;
            w.write_record([
                c.combo_id.to_string(),
                p.alpha.to_string(),
                p.alpha_min.to_string(),
                p.alpha_max.to_string(),
                p.punish.to_string(),
                p.reward.to_string(),
                p.slide_size.to_string(),
                p.sensitivity.to_string(),
                c.f1_anomaly.to_string(),
                c.f1_normal.to_string(),
                c.score.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    result.map_err(csv_err(path))
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = create(path)?;
    let result = (|| {
        w.write_record(["epoch", "train_loss", "val_loss", "val_f1_anomaly", "val_f1_normal"])?;
        for e in log {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.val_f1_anomaly.to_string(),
                e.val_f1_normal.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    result.map_err(csv_err(path))
}

/// One frame per row: `step,channel,<feature names>`.
pub fn write_features(path: &Path, rows: &[(usize, Channel, FeatureFrame)]) -> Result<()> {
    let mut w = create(path)?;
    let result = (|| {
        let mut header = vec!["step", "channel"];
        header.extend(FEATURE_NAMES);
        w.write_record(&header)?;
        for (step, channel, f) in rows {
            let mut row = vec![step.to_string(), channel.to_string()];
            row.extend(f.to_array().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    result.map_err(csv_err(path))
}

pub fn write_predictions(path: &Path, rows: &[(f64, Channel, StreamPrediction)]) -> Result<()> {
    let mut w = create(path)?;
    let result = (|| {
        w.write_record(["timestamp", "channel", "detect", "bias_type", "p_anomaly", "p_jump"])?;
        for (t, channel, p) in rows {
            w.write_record([
                t.to_string(),
                channel.to_string(),
                (p.detect as u8).to_string(),
                p.bias_type.unwrap_or(BiasType::None).as_str().to_string(),
                p.p_anomaly.to_string(),
                p.p_jump.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    result.map_err(csv_err(path))
}

/// Appends recovery rows `timestamp,channel,value,action,bias_type,time_type`.
pub struct RecoveryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecoveryWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner
            .write_record(["timestamp", "channel", "value", "action", "bias_type", "time_type"])
            .map_err(Error::data)?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, timestamp: f64, channel: Channel, out: &RecoveryOutput) -> Result<()> {
        self.inner
            .write_record([
                timestamp.to_string(),
                channel.to_string(),
                out.value.to_string(),
                out.action.as_str().to_string(),
                out.bias_type.unwrap_or(BiasType::None).as_str().to_string(),
                out.time_type.as_str().to_string(),
            ])
            .map_err(Error::data)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::Data(e.to_string()))
    }
}

pub fn write_alerts(path: &Path, alerts: &[(f64, AlertEvent)]) -> Result<()> {
    let mut w = create(path)?;
    let result = (|| {
        w.write_record(["step", "timestamp", "channel", "run_length"])?;
        for (t, a) in alerts {
            w.write_record([a.step.to_string(), t.to_string(), a.channel.to_string(), a.run_length.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)
    })();
    result.map_err(csv_err(path))
}
