//! Manifest-driven experiments and the report bundle.
//!
//! For every scenario and seed the runner injects anomalies into the
//! normalized trace, tunes the EMA detector on the training block, trains the
//! networks on the training block with the validation block for early
//! stopping, and scores the test block. Detectors always run over the whole
//! series, so the test block is scored with warmed-up state.
//!
//! The bundle directory holds:
//!
//! - `report.csv`: `scenario,seed,method,metric,value` rows, deterministic
//!   for a fixed manifest;
//! - `timings.csv`: per-stage wall-clock, kept apart so the report stays
//!   byte-stable;
//! - `manifest.resolved`: the manifest with all defaults filled in;
//! - `hashes.txt`: SHA-256 digests of the manifest and every input trace;
//! - `plots/`: per-step test-block series, training logs and grid tables;
//! - `models/`: the trained bundles.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use grad_core::gru::StreamPrediction;
use grad_core::inject::{build_labeled_dataset, BiasType, LabeledChannel, LabeledSeries, TimeType};
use grad_core::metrics::{score_classification, score_detection, ClassificationReport, DetectionScores};
use grad_core::pipeline::{bias_class, detect_offline, run_channel, DetectorBundle, PointOutput};
use grad_core::recover::TimeClassifier;
use grad_core::rema::{grid_search, outlier_flags, GridSearchResult, RemaParams};
use grad_core::synth::{generate, MotionModel, TrajectoryConfig};
use grad_core::trace::{interpolate_missing, normalize, sort_merge, NormSource, NormStats, Series, Trace};
use grad_core::Channel;
use sha2::{Digest, Sha256};

use crate::bundle::{self, train_bundle, TrainPlan};
use crate::config::{DataSource, Manifest, NormFit, Scenario};
use crate::error::{Error, Result};
use crate::io;

pub const OVERALL_F1: &str = "overall_f1 is the arithmetic mean of the normal and anomaly F1 scores";
pub const CLASS_MASK: &str =
    "bias and time metrics cover test steps that are true anomalies and were flagged by the detector";

/// Trace loading, ordering, gap filling and normalization for one seed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Clean trace in raw units.
    pub raw: Series,
    pub norm: NormStats,
    pub normalized: Series,
    /// SHA-256 of the clean trace as CSV.
    pub digest: String,
    pub label: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn trajectory(model: MotionModel, points: usize) -> TrajectoryConfig {
    match model {
        MotionModel::Vehicle => TrajectoryConfig::vehicle(points),
        MotionModel::Aerial => TrajectoryConfig::aerial(points),
    }
}

/// Sorted, merged, gap-filled trace ready for normalization.
pub fn clean_trace(trace: Trace) -> Result<Trace> {
    let merged = sort_merge(trace).map_err(Error::data)?;
    let (filled, report) = interpolate_missing(merged).map_err(Error::data)?;
    if report.total() > 0 {
        log::info!("filled {} missing values", report.total());
    }
    Ok(filled)
}

pub fn prepare_data(manifest: &Manifest, seed: u64) -> Result<PreparedData> {
    let (trace, label) = match &manifest.data {
        DataSource::Synthetic { model, points } => {
            (generate(&trajectory(*model, *points), seed), format!("synthetic {model:?} seed={seed}").to_lowercase())
        }
        DataSource::Csv { path, columns } => {
            let (trace, rejects) = io::read_trace(path, columns)?;
            if !rejects.is_empty() {
                log::warn!("{}: {} rows rejected", path.display(), rejects.len());
            }
            (trace, path.display().to_string())
        }
    };
    let trace = clean_trace(trace)?;
    let digest = sha256_hex(io::trace_to_csv(&trace).as_bytes());
    let raw = Series::from_trace(&trace).map_err(Error::data)?;
    let (a, _) = manifest.split.bounds(raw.len());
    let fit_on = match manifest.split.norm_fit {
        NormFit::Full => raw.clone(),
        NormFit::Train => raw.slice(0, a),
    };
    let (_, norm) = normalize(&fit_on, NormSource::Fit).map_err(Error::data)?;
    let (normalized, _) = normalize(&raw, NormSource::Use(&norm)).map_err(Error::data)?;
    Ok(PreparedData { raw, norm, normalized, digest, label })
}

/// EMA detector parameters tuned separately for each channel.
pub fn tune_channels(
    channels: &[LabeledChannel],
    grid: &grad_core::rema::RemaGrid,
) -> Result<Vec<(Channel, GridSearchResult)>> {
    channels
        .iter()
        .map(|ch| {
            grid_search(&[ch], grid, 0)
                .map(|r| (ch.channel, r))
                .map_err(|e| Error::Stage { stage: "tune", message: format!("{}: {e}", ch.channel) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecoveryStats {
    /// Transient or intermittent jump episodes in the test block.
    pub episodes: usize,
    /// Mean absolute error against the clean signal over those episodes,
    /// normalized units.
    pub mae_corrupted: f64,
    pub mae_recovered: f64,
    pub alerts: usize,
    /// Ground-truth permanent episodes in the test block.
    pub permanent_episodes: usize,
    /// Permanent episodes that raised exactly one alert.
    pub permanent_single_alert: usize,
    /// Permanent episodes that raised no alert.
    pub permanent_missed: usize,
}

#[derive(Debug, Clone)]
pub struct GradResult {
    pub detection: DetectionScores,
    pub bias: Option<ClassificationReport>,
    pub time: Option<ClassificationReport>,
    pub recovery: RecoveryStats,
    pub bundle: DetectorBundle,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub test_steps: Range<usize>,
    pub labeled: LabeledSeries,
    pub raw: Series,
    pub params: Vec<(Channel, RemaParams)>,
    pub rema: Option<DetectionScores>,
    pub grad: Option<GradResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub scenario: String,
    pub seed: u64,
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ReportRow {
    pub scenario: String,
    pub seed: String,
    pub method: String,
    pub metric: String,
    pub value: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub runs: Vec<RunSummary>,
    pub rows: Vec<ReportRow>,
    pub timings: Vec<Timing>,
}

impl Outcome {
    /// Mean of a metric over seeds, from the summary rows.
    pub fn mean(&self, scenario: &str, method: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.seed == "mean" && r.method == method && r.metric == metric)
            .and_then(|r| r.value.parse().ok())
    }
}

struct Timer<'a> {
    timings: &'a mut Vec<Timing>,
    scenario: String,
    seed: u64,
}

impl Timer<'_> {
    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            scenario: self.scenario.clone(),
            seed: self.seed,
            stage,
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

fn detection_metrics(prefix: &str, s: &DetectionScores) -> Vec<(String, f64)> {
    let mut out = vec![
        (format!("{prefix}f1_anomaly"), s.anomaly.f1),
        (format!("{prefix}f1_normal"), s.normal.f1),
        (format!("{prefix}overall_f1"), s.overall_f1()),
        (format!("{prefix}precision_anomaly"), s.anomaly.precision),
        (format!("{prefix}recall_anomaly"), s.anomaly.recall),
        (format!("{prefix}precision_normal"), s.normal.precision),
        (format!("{prefix}recall_normal"), s.normal.recall),
        (format!("{prefix}tp"), s.anomaly.tp as f64),
        (format!("{prefix}fp"), s.anomaly.fp as f64),
        (format!("{prefix}fn"), s.anomaly.fn_ as f64),
        (format!("{prefix}tn"), s.anomaly.tn as f64),
    ];
    if s.anomaly.undefined || s.normal.undefined {
        out.push((format!("{prefix}undefined"), 1.0));
    }
    out
}

fn classification_metrics(prefix: &str, names: &[&str], r: &ClassificationReport) -> Vec<(String, f64)> {
    let total = r.matrix.total() as f64;
    let correct: u64 = (0..r.matrix.classes).map(|c| r.matrix.get(c, c)).sum();
    let mut out = vec![(format!("{prefix}accuracy"), correct as f64 / total), (format!("{prefix}support"), total)];
    for (c, m) in r.per_class.iter().enumerate() {
        out.push((format!("{prefix}f1_{}", names[c]), m.f1));
        for (p, name) in names.iter().enumerate() {
            out.push((format!("{prefix}count_{}_as_{name}", names[c]), r.matrix.get(c, p) as f64));
        }
    }
    out
}

fn time_class(t: TimeType) -> Option<usize> {
    match t {
        TimeType::Transient => Some(0),
        TimeType::Intermittent => Some(1),
        TimeType::Permanent => Some(2),
        TimeType::None => None,
    }
}

/// Maximal runs of steps for which `pred` holds.
fn episodes(labels: &[grad_core::inject::AnomalyLabel], steps: Range<usize>, pred: impl Fn(&grad_core::inject::AnomalyLabel) -> bool) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for i in steps.clone() {
        let hit = pred(&labels[i]);
        match (hit, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..steps.end);
    }
    out
}

struct ChannelRun {
    rema_flags: Option<Vec<bool>>,
    preds: Option<Vec<StreamPrediction>>,
    times: Option<Vec<TimeType>>,
    stream: Option<Vec<PointOutput>>,
}

fn run_one(
    manifest: &Manifest,
    scenario: &Scenario,
    seed: u64,
    data: &PreparedData,
    out: &Path,
    timer: &mut Timer<'_>,
) -> Result<(RunSummary, Vec<(String, f64)>, Vec<(String, f64)>)> {
    let tag = format!("{}_seed{seed}", scenario.name());
    let n = data.normalized.len();
    let (a, b) = manifest.split.bounds(n);
    let warm = manifest.features.history() + manifest.train.window + manifest.rema.resolve().max_slide_size();
    if a <= warm || b <= a || n <= b {
        return Err(Error::Data(format!("{n} points are too few for the configured split and windows")));
    }
    let test = b..n;

    let labeled = timer.run("inject", || {
        build_labeled_dataset(&data.normalized, &scenario.plan(), seed).map_err(Error::stage("inject"))
    })?;
    let train_block = labeled.slice(0, a);
    let tuned = timer.run("tune", || tune_channels(&train_block.channels, &manifest.rema.resolve()))?;
    for (channel, result) in &tuned {
        io::write_scores(&out.join("plots").join(format!("{tag}_{channel}_grid.csv")), &result.table)?;
    }
    let params: Vec<(Channel, RemaParams)> = tuned.iter().map(|(c, r)| (*c, r.best.params)).collect();

    let mut runs: Vec<ChannelRun> = labeled
        .channels
        .iter()
        .map(|_| ChannelRun { rema_flags: None, preds: None, times: None, stream: None })
        .collect();

    let mut rema_metrics = Vec::new();
    let mut rema_scores = None;
    if manifest.methods.rema {
        let (pred, truth) = timer.run("rema", || {
            let mut pred = Vec::new();
            let mut truth = Vec::new();
            for (ch, run) in labeled.channels.iter().zip(&mut runs) {
                let p = params.iter().find(|(c, _)| *c == ch.channel).expect("tuned every channel").1;
                let flags = outlier_flags(&ch.corrupted, &p).map_err(Error::stage("rema"))?;
                pred.extend_from_slice(&flags[test.clone()]);
                truth.extend(ch.labels[test.clone()].iter().map(|l| l.is_anomaly()));
                run.rema_flags = Some(flags);
            }
            Ok((pred, truth))
        })?;
        let s = score_detection(&pred, &truth).map_err(Error::stage("score"))?;
        rema_metrics = detection_metrics("", &s);
        rema_scores = Some(s);
    }

    let mut grad_metrics = Vec::new();
    let mut grad = None;
    if manifest.methods.grad {
        let plan = TrainPlan {
            labeled: &labeled,
            params: params.clone(),
            norm: data.norm.clone(),
            windows: manifest.features,
            config: manifest.train.config(seed),
            thresholds: manifest.thresholds,
            train_steps: 0..a,
            val_steps: a..b,
        };
        let bundle = timer.run("train", || train_bundle(&plan))?;
        bundle::save(&out.join("models").join(&tag), &bundle)?;
        io::write_training_log(&out.join("plots").join(format!("{tag}_detector_log.csv")), &bundle.detector.meta.log)?;
        io::write_training_log(
            &out.join("plots").join(format!("{tag}_classifier_log.csv")),
            &bundle.classifier.meta.log,
        )?;

        timer.run("predict", || {
            for (ch, run) in labeled.channels.iter().zip(&mut runs) {
                let preds = detect_offline(&bundle, ch.channel, &ch.corrupted).map_err(Error::stage("predict"))?;
                let mut tc = TimeClassifier::new(bundle.thresholds).map_err(Error::stage("predict"))?;
                let times = preds
                    .iter()
                    .enumerate()
                    .map(|(i, p)| tc.step(p.detect, i))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(Error::stage("predict"))?;
                run.preds = Some(preds);
                run.times = Some(times);
            }
            Ok(())
        })?;

        timer.run("recover", || {
            for (ch, run) in labeled.channels.iter().zip(&mut runs) {
                let stats = data.norm.get(ch.channel).map_err(Error::data)?;
                let raw: Vec<f64> = ch.corrupted.iter().map(|v| v * stats.std + stats.mean).collect();
                let outs = run_channel(&bundle, ch.channel, &raw).map_err(Error::stage("recover"))?;
                let preds = run.preds.as_ref().expect("predicted above");
                let times = run.times.as_ref().expect("predicted above");
                if let Some(i) = (0..n).find(|&i| outs[i].prediction.detect != preds[i].detect || outs[i].time_type != times[i]) {
                    return Err(Error::Stage {
                        stage: "recover",
                        message: format!("{}: streaming and batch detections differ at step {i}", ch.channel),
                    });
                }
                run.stream = Some(outs);
            }
            Ok(())
        })?;

        let mut pred = Vec::new();
        let mut truth = Vec::new();
        let (mut bias_pred, mut bias_truth, mut time_pred, mut time_truth) = (vec![], vec![], vec![], vec![]);
        let mut rec = RecoveryStats::default();
        let (mut err_c, mut err_r, mut err_n) = (0.0, 0.0, 0usize);
        for (ch, run) in labeled.channels.iter().zip(&runs) {
            let preds = run.preds.as_ref().expect("predicted above");
            let times = run.times.as_ref().expect("predicted above");
            let outs = run.stream.as_ref().expect("recovered above");
            let stats = data.norm.get(ch.channel).map_err(Error::data)?;
            for i in test.clone() {
                let l = ch.labels[i];
                pred.push(preds[i].detect);
                truth.push(l.is_anomaly());
                if l.is_anomaly() && preds[i].detect {
                    bias_truth.push(bias_class(l.bias_type).expect("anomaly has a bias type"));
                    bias_pred.push(bias_class(preds[i].bias_type.unwrap_or(BiasType::Noise)).expect("flagged"));
                    time_truth.push(time_class(l.time_type).expect("anomaly has a time type"));
                    time_pred.push(time_class(times[i]).expect("flagged step is typed"));
                }
            }
            let short_jump = |l: &grad_core::inject::AnomalyLabel| {
                l.bias_type == BiasType::Jump && matches!(l.time_type, TimeType::Transient | TimeType::Intermittent)
            };
            for ep in episodes(&ch.labels, test.clone(), short_jump) {
                rec.episodes += 1;
                for i in ep {
                    let recovered = (outs[i].recovery.value - stats.mean) / stats.std;
                    err_c += (ch.corrupted[i] - ch.clean[i]).abs();
                    err_r += (recovered - ch.clean[i]).abs();
                    err_n += 1;
                }
            }
            rec.alerts += outs[test.clone()].iter().filter(|o| o.alert.is_some()).count();
            let permanent = |l: &grad_core::inject::AnomalyLabel| l.time_type == TimeType::Permanent;
            for ep in episodes(&ch.labels, test.clone(), permanent) {
                rec.permanent_episodes += 1;
                // An episode straddling the test boundary may have alerted before it.
                let mut start = ep.start;
                while start > 0 && permanent(&ch.labels[start - 1]) {
                    start -= 1;
                }
                let alerts = outs[start..ep.end].iter().filter(|o| o.alert.is_some()).count();
                rec.permanent_single_alert += (alerts == 1) as usize;
                rec.permanent_missed += (alerts == 0) as usize;
            }
        }
        if err_n > 0 {
            rec.mae_corrupted = err_c / err_n as f64;
            rec.mae_recovered = err_r / err_n as f64;
        }
        let detection = score_detection(&pred, &truth).map_err(Error::stage("score"))?;
        let mask = vec![true; bias_truth.len()];
        let bias = score_classification(&bias_pred, &bias_truth, &mask, 2).ok();
        let time = score_classification(&time_pred, &time_truth, &mask, 3).ok();

        grad_metrics = detection_metrics("", &detection);
        if let Some(r) = &bias {
            grad_metrics.extend(classification_metrics("bias_", &["noise", "jump"], r));
        }
        if let Some(r) = &time {
            grad_metrics.extend(classification_metrics("time_", &["transient", "intermittent", "permanent"], r));
        }
        grad_metrics.extend([
            ("recovery_episodes".to_string(), rec.episodes as f64),
            ("recovery_mae_corrupted".to_string(), rec.mae_corrupted),
            ("recovery_mae_recovered".to_string(), rec.mae_recovered),
            ("alerts".to_string(), rec.alerts as f64),
            ("permanent_episodes".to_string(), rec.permanent_episodes as f64),
            ("permanent_single_alert".to_string(), rec.permanent_single_alert as f64),
            ("permanent_missed".to_string(), rec.permanent_missed as f64),
            ("detector_epochs".to_string(), bundle.detector.meta.epochs_run as f64),
            ("detector_best_epoch".to_string(), bundle.detector.meta.best_epoch as f64),
            ("classifier_epochs".to_string(), bundle.classifier.meta.epochs_run as f64),
        ]);
        grad = Some(GradResult { detection, bias, time, recovery: rec, bundle });
    }

    for (ch, run) in labeled.channels.iter().zip(&runs) {
        write_plot(&out.join("plots").join(format!("{tag}_{}.csv", ch.channel)), &labeled, ch, run, test.clone(), data)?;
    }

    let summary = RunSummary {
        scenario: scenario.name().to_string(),
        seed,
        test_steps: test,
        labeled,
        raw: data.raw.clone(),
        params,
        rema: rema_scores,
        grad,
    };
    Ok((summary, rema_metrics, grad_metrics))
}

fn write_plot(
    path: &Path,
    labeled: &LabeledSeries,
    ch: &LabeledChannel,
    run: &ChannelRun,
    steps: Range<usize>,
    data: &PreparedData,
) -> Result<()> {
    let stats = data.norm.get(ch.channel).map_err(Error::data)?;
    let mut text = String::from(
        "step,timestamp,clean,corrupted,truth,bias_truth,time_truth,rema_flag,grad_flag,p_anomaly,time_type,recovered,action\n",
    );
    for i in steps {
        let l = ch.labels[i];
        let flag = |v: Option<bool>| v.map(|b| (b as u8).to_string()).unwrap_or_default();
        let rema = run.rema_flags.as_ref().map(|f| f[i]);
        let pred = run.preds.as_ref().map(|p| p[i]);
        let time = run.times.as_ref().map(|t| t[i].as_str()).unwrap_or("");
        let (recovered, action) = run
            .stream
            .as_ref()
            .map(|s| (((s[i].recovery.value - stats.mean) / stats.std).to_string(), s[i].recovery.action.as_str()))
            .unwrap_or_default();
        text.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{time},{recovered},{action}\n",
            labeled.timestamps[i],
            ch.clean[i],
            ch.corrupted[i],
            l.is_anomaly() as u8,
            l.bias_type.as_str(),
            l.time_type.as_str(),
            flag(rema),
            flag(pred.map(|p| p.detect)),
            pred.map(|p| p.p_anomaly.to_string()).unwrap_or_default(),
        ));
    }
    io::write_text(path, &text)
}

fn report_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "seed", "method", "metric", "value"]).expect("in-memory write");
    for r in rows {
        w.write_record([&r.scenario, &r.seed, &r.method, &r.metric, &r.value]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 output")
}

fn timings_csv(timings: &[Timing]) -> String {
    let mut text = String::from("scenario,seed,stage,seconds\n");
    for t in timings {
        text.push_str(&format!("{},{},{},{:.6}\n", t.scenario, t.seed, t.stage, t.seconds));
    }
    text
}

fn note(metric: &str, value: &str) -> ReportRow {
    ReportRow { scenario: "*".into(), seed: "*".into(), method: "note".into(), metric: metric.into(), value: value.into() }
}

/// Runs every scenario for every seed and writes the report bundle to `out`.
///
/// A failing stage is recorded in the report as a `failed` row, the partial
/// bundle is written, and the error is returned.
pub fn run_experiment(manifest: &Manifest, manifest_text: &str, out: &Path) -> Result<Outcome> {
    manifest.validate()?;
    std::fs::create_dir_all(out).map_err(Error::io(out))?;
    io::write_text(&out.join("manifest.resolved"), &manifest.resolved())?;

    let mut hashes = format!("{}  manifest\n", sha256_hex(manifest_text.as_bytes()));
    let mut rows = vec![note("overall_f1", OVERALL_F1), note("class_mask", CLASS_MASK)];
    let mut values: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    let mut order: Vec<(String, String, String)> = Vec::new();
    let mut runs = Vec::new();
    let mut timings = Vec::new();
    let mut failure = None;

    'seeds: for &seed in &manifest.seeds {
        let data = match prepare_data(manifest, seed) {
            Ok(d) => d,
            Err(e) => {
                failure = Some(("*".to_string(), seed, "data", e));
                break 'seeds;
            }
        };
        hashes.push_str(&format!("{}  {}\n", data.digest, data.label));
        for scenario in &manifest.scenarios {
            let mut timer = Timer { timings: &mut timings, scenario: scenario.name().to_string(), seed };
            match run_one(manifest, scenario, seed, &data, out, &mut timer) {
                Ok((summary, rema, grad)) => {
                    for (method, metrics) in [("rema", rema), ("grad", grad)] {
                        for (metric, v) in metrics {
                            rows.push(ReportRow {
                                scenario: summary.scenario.clone(),
                                seed: seed.to_string(),
                                method: method.into(),
                                metric: metric.clone(),
                                value: v.to_string(),
                            });
                            let key = (summary.scenario.clone(), method.to_string(), metric);
                            if !values.contains_key(&key) {
                                order.push(key.clone());
                            }
                            values.entry(key).or_default().push(v);
                        }
                    }
                    runs.push(summary);
                }
                Err(e) => {
                    let stage = match &e {
                        Error::Stage { stage, .. } => *stage,
                        _ => "data",
                    };
                    failure = Some((scenario.name().to_string(), seed, stage, e));
                    break 'seeds;
                }
            }
        }
    }

    let seeds = manifest.seeds.len();
    for key in &order {
        let v = &values[key];
        if v.len() == seeds {
            rows.push(ReportRow {
                scenario: key.0.clone(),
                seed: "mean".into(),
                method: key.1.clone(),
                metric: key.2.clone(),
                value: (v.iter().sum::<f64>() / seeds as f64).to_string(),
            });
        }
    }
    if let Some((scenario, seed, stage, e)) = &failure {
        rows.push(ReportRow {
            scenario: scenario.clone(),
            seed: seed.to_string(),
            method: "failed".into(),
            metric: stage.to_string(),
            value: e.to_string(),
        });
    }
    io::write_text(&out.join("report.csv"), &report_csv(&rows))?;
    io::write_text(&out.join("timings.csv"), &timings_csv(&timings))?;
    io::write_text(&out.join("hashes.txt"), &hashes)?;
    if let Some((_, _, _, e)) = failure {
        return Err(e);
    }
    Ok(Outcome { runs, rows, timings })
}

/// One row of the window-size study.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub window: usize,
    pub detection: DetectionScores,
    pub median_latency: f64,
    pub p99_latency: f64,
}

/// Retrains and rescores the first scenario and seed of `manifest` for each
/// feed window length, and times the streaming pipeline at each length.
pub fn window_size_study(manifest: &Manifest, sizes: &[usize], out: &Path) -> Result<Vec<WindowRow>> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Usage("window sizes must be a non-empty list of positive lengths".into()));
    }
    let seed = manifest.seeds[0];
    let scenario = &manifest.scenarios[0];
    let data = prepare_data(manifest, seed)?;
    let mut rows = Vec::new();
    let mut text = String::from("window,f1_anomaly,f1_normal,overall_f1,median_latency_s,p99_latency_s\n");
    for &w in sizes {
        let mut m = manifest.clone();
        m.train.window = w;
        m.methods.rema = false;
        m.methods.grad = true;
        let mut timings = Vec::new();
        let mut timer = Timer { timings: &mut timings, scenario: scenario.name().to_string(), seed };
        let run_dir = out.join(format!("window{w}"));
        let (summary, _, _) = run_one(&m, scenario, seed, &data, &run_dir, &mut timer)?;
        let grad = summary.grad.expect("grad method enabled");
        let ch = &summary.labeled.channels[0];
        let stats = data.norm.get(ch.channel).map_err(Error::data)?;
        let raw: Vec<f64> = ch.corrupted.iter().map(|v| v * stats.std + stats.mean).collect();
        let test = summary.test_steps.clone();
        let end = test.end.min(test.start + 2000);
        let lat = crate::bench::bench_latency(&grad.bundle, ch.channel, &raw[..test.start], &raw[test.start..end], 3)?;
        text.push_str(&format!(
            "{w},{},{},{},{},{}\n",
            grad.detection.anomaly.f1,
            grad.detection.normal.f1,
            grad.detection.overall_f1(),
            lat.median,
            lat.p99
        ));
        rows.push(WindowRow { window: w, detection: grad.detection, median_latency: lat.median, p99_latency: lat.p99 });
    }
    io::write_text(&out.join("window_study.csv"), &text)?;
    Ok(rows)
}

/// Default location for a bundle directory inside `out`.
pub fn bundle_dir(out: &Path, scenario: &str, seed: u64) -> PathBuf {
    out.join("models").join(format!("{scenario}_seed{seed}"))
}
