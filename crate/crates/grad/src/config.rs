//! Experiment manifests.
//!
//! A manifest is a TOML document. Everything except `name`, `data` and the
//! scenario list has a default; `schema_version` must equal
//! [`SCHEMA_VERSION`].
//!
//! ```toml
//! schema_version = 1
//! name = "magnitude-sweep"
//! seeds = [0, 1, 2]
//!
//! [data]
//! source = "synthetic"      # or "csv" with `path` and optional [data.columns]
//! model = "vehicle"
//! points = 20000
//!
//! [[scenarios]]
//! type = "injection"
//! name = "instant-100"
//! kind = "instant"
//! magnitude = 100.0
//! duration = 1
//! rate = 0.05
//!
//! [[scenarios]]
//! type = "profile"
//! name = "mmitss"
//! profile = "mmitss"
//! ```

use std::path::{Path, PathBuf};

use grad_core::features::WindowConfig;
use grad_core::gru::TrainConfig;
use grad_core::inject::{InjectionKind, Profile, SchedulePlan};
use grad_core::recover::TimeThresholds;
use grad_core::rema::RemaGrid;
use grad_core::synth::MotionModel;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ColumnMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub data: DataSource,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub rema: RemaSection,
    #[serde(default)]
    pub features: WindowConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub thresholds: TimeThresholds,
    #[serde(default)]
    pub methods: Methods,
    pub scenarios: Vec<Scenario>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Generated trajectory; each seed gets its own trace.
    Synthetic { model: MotionModel, points: usize },
    /// Recorded trace, relative paths resolved against the manifest.
    Csv {
        path: PathBuf,
        #[serde(default)]
        columns: ColumnMap,
    },
}

/// Which part of the clean trace the normalization statistics are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormFit {
    /// Whole trace. Position channels drift far outside the training block
    /// on long trips, and level-dependent features then leave the range the
    /// networks were trained on.
    Full,
    /// Training block only.
    Train,
}

/// Contiguous train/validation/test blocks; test takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Split {
    pub train: f64,
    pub validation: f64,
    pub norm_fit: NormFit,
}

impl Default for Split {
    fn default() -> Self {
        Self { train: 0.6, validation: 0.2, norm_fit: NormFit::Full }
    }
}

impl Split {
    pub fn validate(&self) -> Result<()> {
        let ok = self.train > 0.0 && self.validation > 0.0 && self.train + self.validation < 1.0;
        if !ok {
            return Err(Error::Usage(format!("split {}/{} leaves no test block", self.train, self.validation)));
        }
        Ok(())
    }

    /// `(train_end, validation_end)` for a series of length `n`.
    pub fn bounds(&self, n: usize) -> (usize, usize) {
        let a = (n as f64 * self.train).round() as usize;
        let b = (n as f64 * (self.train + self.validation)).round() as usize;
        (a, b.max(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    Default,
    Wide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemaSection {
    pub preset: GridPreset,
    /// Replaces the preset when given.
    pub grid: Option<RemaGrid>,
}

impl Default for RemaSection {
    fn default() -> Self {
        Self { preset: GridPreset::Default, grid: None }
    }
}

impl RemaSection {
    pub fn resolve(&self) -> RemaGrid {
        match (&self.grid, self.preset) {
            (Some(g), _) => g.clone(),
            (None, GridPreset::Default) => RemaGrid::default(),
            (None, GridPreset::Wide) => RemaGrid::wide(),
        }
    }
}

/// Training settings; the seed comes from the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub hidden: [usize; 2],
    pub window: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        Self {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            patience: c.patience,
            clip_norm: c.clip_norm,
            hidden: c.hidden,
            window: c.window,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            class_weights: None,
            clip_norm: self.clip_norm,
            seed,
            patience: self.patience,
            hidden: self.hidden,
            window: self.window,
        }
    }
}

/// Which detectors are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Methods {
    pub rema: bool,
    pub grad: bool,
}

impl Default for Methods {
    fn default() -> Self {
        Self { rema: true, grad: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Scenario {
    /// Category rates of a reference profile.
    Profile { name: String, profile: Profile },
    /// Isolated episodes of one injection kind.
    Injection { name: String, kind: InjectionKind, magnitude: f64, duration: usize, rate: f64 },
}

impl Scenario {
    pub fn name(&self) -> &str {
        match self {
            Scenario::Profile { name, .. } | Scenario::Injection { name, .. } => name,
        }
    }

    pub fn plan(&self) -> SchedulePlan {
        match *self {
            Scenario::Profile { profile, .. } => SchedulePlan::profile(profile),
            Scenario::Injection { kind, magnitude, duration, rate, .. } => {
                SchedulePlan::scenario(kind, magnitude, duration, rate)
            }
        }
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::Usage(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let mut m = Self::parse(&text)?;
        if let DataSource::Csv { path: data, .. } = &mut m.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |s: String| Err(Error::Usage(s));
        if self.schema_version != SCHEMA_VERSION {
            return usage(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.seeds.is_empty() {
            return usage("at least one seed is required".into());
        }
        if self.scenarios.is_empty() {
            return usage("at least one scenario is required".into());
        }
        let mut names: Vec<&str> = self.scenarios.iter().map(|s| s.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return usage("scenario names must be unique".into());
        }
        if let Some(bad) = names.iter().find(|n| n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))) {
            return usage(format!("scenario name {bad:?} must be non-empty ASCII letters, digits, '-', '_' or '.'"));
        }
        if !self.methods.rema && !self.methods.grad {
            return usage("no method enabled".into());
        }
        self.split.validate()?;
        self.features.validate().map_err(|e| Error::Usage(e.to_string()))?;
        self.train.config(0).validate().map_err(|e| Error::Usage(e.to_string()))?;
        self.thresholds.validate().map_err(|e| Error::Usage(e.to_string()))?;
        if self.rema.resolve().combinations().is_empty() {
            return usage("REMA grid has no valid combination".into());
        }
        for s in &self.scenarios {
            s.plan().validate().map_err(|e| Error::Usage(format!("scenario {}: {e}", s.name())))?;
        }
        if let DataSource::Synthetic { points, .. } = self.data {
            if points < 200 {
                return usage("synthetic data needs at least 200 points".into());
            }
        }
        Ok(())
    }

    /// Canonical TOML with every default filled in.
    pub fn resolved(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}
