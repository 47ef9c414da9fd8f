//! Training the detector stack and storing it as a directory:
//! `bundle.json` for the preprocessing state plus one model file per network.

use std::ops::Range;
use std::path::Path;

use grad_core::features::{schema_hash, FeatureScaler, WindowConfig, FEATURE_COUNT};
use grad_core::gru::{train, GruModel, TrainConfig, TrainError};
use grad_core::inject::LabeledSeries;
use grad_core::pipeline::{fit_scaler_in, prepare_frames, sequence_set_in, DetectorBundle, Task};
use grad_core::recover::TimeThresholds;
use grad_core::rema::RemaParams;
use grad_core::trace::NormStats;
use grad_core::Channel;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{io, model_file};

pub const DETECTOR_FILE: &str = "detector.gru";
pub const CLASSIFIER_FILE: &str = "classifier.gru";
pub const STATE_FILE: &str = "bundle.json";

/// Everything in a bundle except the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleState {
    windows: WindowConfig,
    rema: Vec<(Channel, RemaParams)>,
    norm: NormStats,
    scaler: FeatureScaler,
    thresholds: TimeThresholds,
}

pub fn save(dir: &Path, bundle: &DetectorBundle) -> Result<()> {
    let state = BundleState {
        windows: bundle.windows,
        rema: bundle.rema.clone(),
        norm: bundle.norm.clone(),
        scaler: bundle.scaler.clone(),
        thresholds: bundle.thresholds,
    };
    let json = serde_json::to_string_pretty(&state).expect("bundle state serializes");
    io::write_text(&dir.join(STATE_FILE), &json)?;
    model_file::save(&dir.join(DETECTOR_FILE), &bundle.detector)?;
    model_file::save(&dir.join(CLASSIFIER_FILE), &bundle.classifier)
}

pub fn load(dir: &Path) -> Result<DetectorBundle> {
    let path = dir.join(STATE_FILE);
    let state: BundleState = serde_json::from_str(&io::read_text(&path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let bundle = DetectorBundle {
        windows: state.windows,
        rema: state.rema,
        norm: state.norm,
        scaler: state.scaler,
        detector: model_file::load(&dir.join(DETECTOR_FILE))?,
        classifier: model_file::load(&dir.join(CLASSIFIER_FILE))?,
        thresholds: state.thresholds,
    };
    bundle.validate().map_err(|e| Error::Data(format!("{}: {e}", dir.display())))?;
    Ok(bundle)
}

/// Inputs for [`train_bundle`]. Step ranges index the labeled series.
#[derive(Debug, Clone)]
pub struct TrainPlan<'a> {
    pub labeled: &'a LabeledSeries,
    pub params: Vec<(Channel, RemaParams)>,
    pub norm: NormStats,
    pub windows: WindowConfig,
    pub config: TrainConfig,
    pub thresholds: TimeThresholds,
    pub train_steps: Range<usize>,
    pub val_steps: Range<usize>,
}

/// Classifier that ignores its input and always outputs `class`.
fn constant_classifier(config: &TrainConfig, class: usize) -> GruModel {
    let mut m = GruModel::init(FEATURE_COUNT, config.hidden, 2, config.window, config.seed);
    m.weights.head_w.fill(0.0);
    m.weights.head_b = vec![0.0; 2];
    m.weights.head_b[class] = 20.0;
    m
}

/// Trains the detector and the bias classifier on one labeled series.
pub fn train_bundle(plan: &TrainPlan<'_>) -> Result<DetectorBundle> {
    let stage = Error::stage::<String>;
    let w = &plan.windows;
    let sets = prepare_frames(&plan.labeled.channels, &plan.params, w).map_err(|e| stage("features")(e.to_string()))?;
    let scaler = fit_scaler_in(&sets, w, plan.train_steps.clone()).map_err(|e| stage("features")(e.to_string()))?;
    let set = |task, steps: &Range<usize>| sequence_set_in(&sets, &scaler, w, task, steps.clone());
    let hash = schema_hash(w);

    let mut detector = train(&set(Task::Detect, &plan.train_steps), &set(Task::Detect, &plan.val_steps), &plan.config, 2)
        .map_err(|e| stage("train")(format!("detector: {e}")))?;
    detector.role = "detector".into();
    detector.schema_hash = hash;

    let mut classifier = match train(&set(Task::Bias, &plan.train_steps), &set(Task::Bias, &plan.val_steps), &plan.config, 2) {
        Ok(m) => m,
        Err(TrainError::MissingClass(missing)) => {
            log::warn!("training anomalies are all of one bias type; the classifier always predicts it");
            constant_classifier(&plan.config, 1 - missing)
        }
        Err(e) => return Err(stage("train")(format!("bias classifier: {e}"))),
    };
    classifier.role = "bias-classifier".into();
    classifier.schema_hash = hash;

    let bundle = DetectorBundle {
        windows: *w,
        rema: plan.params.clone(),
        norm: plan.norm.clone(),
        scaler,
        detector,
        classifier,
        thresholds: plan.thresholds,
    };
    bundle.validate().map_err(|e| stage("train")(e.to_string()))?;
    Ok(bundle)
}
