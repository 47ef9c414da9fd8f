//! Command-line interface.
//!
//! Every subcommand reads its inputs from files and writes into `--out`.
//! `--config` points at an experiment manifest; subcommands other than
//! `evaluate` and `study-window` only take its split, grid, window, training
//! and threshold settings, falling back to the defaults without one.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use grad_core::features::WindowConfig;
use grad_core::inject::{build_labeled_dataset, InjectionKind, Profile, SchedulePlan};
use grad_core::pipeline::{channel_features, detect_offline, ChannelPipeline};
use grad_core::recover::TimeThresholds;
use grad_core::rema::RemaGrid;
use grad_core::trace::{normalize, NormSource, Series};
use grad_core::Channel;

use crate::bundle::{self, train_bundle, TrainPlan};
use crate::config::{GridPreset, Manifest, RemaSection, Split, TrainSection};
use crate::error::{Error, Result};
use crate::experiment::{self, clean_trace};
use crate::io::{self, ColumnMap, TunedChannel, TunedParams};

#[derive(Debug, Parser)]
#[command(name = "grad", version, about = "GPS anomaly detection and recovery")]
pub struct Cli {
    /// Experiment manifest (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for injection and training; replaces the manifest seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sort, merge and gap-fill a raw trace and fit normalization statistics.
    Preprocess(PreprocessArgs),
    /// Corrupt a clean trace with labeled anomalies.
    Inject(InjectArgs),
    /// Grid-search detector parameters per channel on the training block.
    TuneRema(TuneArgs),
    /// Extract unscaled feature frames.
    Features(FeaturesArgs),
    /// Train the detector and bias classifier.
    Train(TrainArgs),
    /// Batch predictions over a labeled dataset.
    Predict(PredictArgs),
    /// Stream a trace through the full pipeline and write recovered values.
    Recover(RecoverArgs),
    /// Run every scenario and seed of the manifest and write the report.
    Evaluate,
    /// Per-point streaming latency.
    Bench(BenchArgs),
    /// Retrain and rescore over several feed window lengths.
    StudyWindow(StudyArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw trace CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Fit normalization on this leading fraction instead of the whole trace.
    #[arg(long)]
    pub fit_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    /// Clean trace CSV from `preprocess`.
    #[arg(long)]
    pub input: PathBuf,
    /// Normalization statistics from `preprocess`.
    #[arg(long)]
    pub norm: PathBuf,
    /// Reference profile (mmitss or zurich). Excludes `--kind`.
    #[arg(long, value_parser = parse_enum::<Profile>, conflicts_with = "kind")]
    pub profile: Option<Profile>,
    /// Single injection kind: instant, constant, bias or drift.
    #[arg(long, value_parser = parse_enum::<InjectionKind>, requires = "magnitude")]
    pub kind: Option<InjectionKind>,
    #[arg(long)]
    pub magnitude: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub duration: usize,
    /// Fraction of points to corrupt.
    #[arg(long, default_value_t = 0.05)]
    pub rate: f64,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Labeled dataset from `inject`.
    #[arg(long)]
    pub labeled: PathBuf,
    /// Grid preset; overrides the manifest.
    #[arg(long, value_parser = parse_enum::<GridPreset>)]
    pub preset: Option<GridPreset>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    /// Tuned parameters from `tune-rema`.
    #[arg(long)]
    pub params: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub norm: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Bundle directory from `train`.
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub labeled: PathBuf,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Trace CSV in raw units.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Trace CSV in raw units.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "latitude")]
    pub channel: Channel,
    /// Untimed leading points.
    #[arg(long, default_value_t = 200)]
    pub warmup: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Comma-separated feed window lengths.
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
    pub sizes: Vec<usize>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).map_err(|e| e.to_string())
}

/// Settings shared by the file-based subcommands.
#[derive(Debug, Clone, Default)]
struct Settings {
    split: Split,
    rema: RemaSection,
    features: WindowConfig,
    train: TrainSection,
    thresholds: TimeThresholds,
    seed: u64,
}

impl Settings {
    fn grid(&self, preset: Option<GridPreset>) -> RemaGrid {
        match preset {
            Some(p) => RemaSection { preset: p, grid: None }.resolve(),
            None => self.rema.resolve(),
        }
    }
}

fn manifest(cli: &Cli) -> Result<Manifest> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Usage("this subcommand needs --config".into()))?;
    let mut m = Manifest::load(path)?;
    if let Some(seed) = cli.seed {
        m.seeds = vec![seed];
    }
    Ok(m)
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::default();
    if cli.config.is_some() {
        let m = manifest(cli)?;
        s = Settings {
            split: m.split,
            rema: m.rema,
            features: m.features,
            train: m.train,
            thresholds: m.thresholds,
            seed: m.seeds[0],
        };
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn load_clean(path: &Path) -> Result<Series> {
    let (trace, rejects) = io::read_trace(path, &ColumnMap::default())?;
    if !rejects.is_empty() {
        log::warn!("{}: {} rows rejected", path.display(), rejects.len());
    }
    Series::from_trace(&clean_trace(trace)?).map_err(Error::data)
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Preprocess(a) => {
            let (trace, rejects) = io::read_trace(&a.input, &ColumnMap::default())?;
            let clean = clean_trace(trace)?;
            let series = Series::from_trace(&clean).map_err(Error::data)?;
            let fit = match a.fit_fraction {
                None => series.clone(),
                Some(f) if f > 0.0 && f <= 1.0 => series.slice(0, ((series.len() as f64 * f).round() as usize).max(2)),
                Some(f) => return Err(Error::Usage(format!("fit fraction {f} is outside (0, 1]"))),
            };
            let (_, norm) = normalize(&fit, NormSource::Fit).map_err(Error::data)?;
            io::write_trace(&out.join("clean.csv"), &clean)?;
            io::write_rejects(&out.join("rejects.csv"), &rejects)?;
            io::write_norm_stats(&out.join("norm_stats.csv"), &norm)?;
            log::info!("{} readings kept, {} rejected", clean.len(), rejects.len());
        }
        Command::Inject(a) => {
            let s = settings(cli)?;
            let plan = match (a.profile, a.kind) {
                (Some(p), None) => SchedulePlan::profile(p),
                (None, Some(k)) => SchedulePlan::scenario(k, a.magnitude.expect("required by clap"), a.duration, a.rate),
                _ => return Err(Error::Usage("give either --profile or --kind".into())),
            };
            plan.validate().map_err(|e| Error::Usage(e.to_string()))?;
            let series = load_clean(&a.input)?;
            let norm = io::read_norm_stats(&a.norm)?;
            let (normalized, _) = normalize(&series, NormSource::Use(&norm)).map_err(Error::data)?;
            let labeled = build_labeled_dataset(&normalized, &plan, s.seed).map_err(Error::stage("inject"))?;
            io::write_labeled(&out.join("labeled.csv"), &labeled)?;
        }
        Command::TuneRema(a) => {
            let s = settings(cli)?;
            let labeled = io::read_labeled(&a.labeled)?;
            let (train_end, _) = s.split.bounds(labeled.len());
            let block = labeled.slice(0, train_end);
            let tuned = experiment::tune_channels(&block.channels, &s.grid(a.preset))?;
            let mut params = TunedParams::default();
            for (channel, result) in &tuned {
                io::write_scores(&out.join(format!("grid_{channel}.csv")), &result.table)?;
                params.channel.push(TunedChannel::new(*channel, &result.best));
            }
            io::write_params(&out.join("params.toml"), &params)?;
        }
        Command::Features(a) => {
            let s = settings(cli)?;
            let labeled = io::read_labeled(&a.labeled)?;
            let params = io::read_params(&a.params)?.params();
            let mut rows = Vec::new();
            for ch in &labeled.channels {
                let p = params
                    .iter()
                    .find(|(c, _)| *c == ch.channel)
                    .ok_or_else(|| Error::Data(format!("no parameters for channel {}", ch.channel)))?
                    .1;
                let (_, frames) = channel_features(&ch.corrupted, &p, &s.features).map_err(Error::stage("features"))?;
                let offset = s.features.regression_window;
                rows.extend(frames.into_iter().enumerate().map(|(i, f)| (i + offset, ch.channel, f)));
            }
            io::write_features(&out.join("features.csv"), &rows)?;
        }
        Command::Train(a) => {
            let s = settings(cli)?;
            let labeled = io::read_labeled(&a.labeled)?;
            let (train_end, val_end) = s.split.bounds(labeled.len());
            let bundle = train_bundle(&TrainPlan {
                labeled: &labeled,
                params: io::read_params(&a.params)?.params(),
                norm: io::read_norm_stats(&a.norm)?,
                windows: s.features,
                config: s.train.config(s.seed),
                thresholds: s.thresholds,
                train_steps: 0..train_end,
                val_steps: train_end..val_end,
            })?;
            let dir = out.join("model");
            bundle::save(&dir, &bundle)?;
            io::write_training_log(&dir.join("detector_log.csv"), &bundle.detector.meta.log)?;
            io::write_training_log(&dir.join("classifier_log.csv"), &bundle.classifier.meta.log)?;
        }
        Command::Predict(a) => {
            let bundle = bundle::load(&a.bundle)?;
            let labeled = io::read_labeled(&a.labeled)?;
            let mut rows = Vec::new();
            for ch in &labeled.channels {
                let preds = detect_offline(&bundle, ch.channel, &ch.corrupted).map_err(Error::stage("predict"))?;
                rows.extend(labeled.timestamps.iter().zip(preds).map(|(&t, p)| (t, ch.channel, p)));
            }
            io::write_predictions(&out.join("predictions.csv"), &rows)?;
        }
        Command::Recover(a) => {
            let bundle = bundle::load(&a.bundle)?;
            let series = load_clean(&a.input)?;
            std::fs::create_dir_all(out).map_err(Error::io(out))?;
            let path = out.join("recovered.csv");
            let file = std::fs::File::create(&path).map_err(Error::io(&path))?;
            let mut writer = io::RecoveryWriter::new(std::io::BufWriter::new(file))?;
            let mut alerts = Vec::new();
            for (channel, _) in &bundle.rema {
                let Some(values) = series.column(*channel) else {
                    return Err(Error::Data(format!("trace has no {channel} column")));
                };
                let mut pipeline = ChannelPipeline::new(&bundle, *channel).map_err(Error::stage("recover"))?;
                for (&t, &x) in series.timestamps.iter().zip(values) {
                    let o = pipeline.push(x).map_err(Error::stage("recover"))?;
                    writer.push(t, *channel, &o.recovery)?;
                    if let Some(alert) = o.alert {
                        log::warn!("{channel}: permanent fault at t={t}");
                        alerts.push((t, alert));
                    }
                }
            }
            writer.finish()?;
            io::write_alerts(&out.join("alerts.csv"), &alerts)?;
        }
        Command::Evaluate => {
            let m = manifest(cli)?;
            let path = cli.config.as_deref().expect("checked by manifest()");
            let text = io::read_text(path)?;
            let outcome = experiment::run_experiment(&m, &text, out)?;
            for row in outcome.rows.iter().filter(|r| r.seed == "mean" && r.metric == "overall_f1") {
                println!("{} {} overall_f1={}", row.scenario, row.method, row.value);
            }
        }
        Command::Bench(a) => {
            let bundle = bundle::load(&a.bundle)?;
            let series = load_clean(&a.input)?;
            let values =
                series.column(a.channel).ok_or_else(|| Error::Data(format!("trace has no {} column", a.channel)))?;
            if values.len() <= a.warmup {
                return Err(Error::Data(format!("trace has {} points, warm-up needs more than {}", values.len(), a.warmup)));
            }
            let (warm, stream) = values.split_at(a.warmup);
            let stats = crate::bench::bench_latency(&bundle, a.channel, warm, stream, a.repetitions)?;
            let json = serde_json::to_string_pretty(&stats).expect("stats serialize");
            io::write_text(&out.join("latency.json"), &json)?;
            println!("median {:.3e} s, p99 {:.3e} s over {} points", stats.median, stats.p99, stats.samples.len());
        }
        Command::StudyWindow(a) => {
            let m = manifest(cli)?;
            for row in experiment::window_size_study(&m, &a.sizes, out)? {
                println!(
                    "window {}: overall_f1 {:.4}, median latency {:.3e} s",
                    row.window,
                    row.detection.overall_f1(),
                    row.median_latency
                );
            }
        }
    }
    Ok(())
}
