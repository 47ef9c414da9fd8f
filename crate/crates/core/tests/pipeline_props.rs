//! The streaming pipeline against its composed parts: offline detection,
//! the time classifier, and the recovery rule fed by its own EMA.

use std::sync::OnceLock;

use grad_core::features::{schema_hash, FeatureScaler, WindowConfig, FEATURE_COUNT};
use grad_core::gru::{predict_stream, train, GruModel, GruWeights, TrainConfig};
use grad_core::inject::{inject_constant, inject_instant, AnomalyLabel, LabeledChannel, TimeType};
use grad_core::pipeline::{
    detect_offline, fit_scaler, prepare_frames, run_channel, sequence_set, DetectorBundle, Task,
};
use grad_core::recover::{Action, TimeClassifier, TimeThresholds};
use grad_core::rema::{Rema, RemaParams};
use grad_core::trace::{ChannelStats, Channel, NormStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CH: Channel = Channel::Latitude;

fn params() -> RemaParams {
    RemaParams {
        alpha: 0.5,
        alpha_min: 0.1,
        alpha_max: 0.9,
        punish: 0.1,
        reward: 0.02,
        slide_size: 12,
        sensitivity: 3.0,
    }
}

fn windows() -> WindowConfig {
    WindowConfig { regression_window: 10, stat_window: 5, rsi_window: 5 }
}

fn stats() -> NormStats {
    NormStats { channels: vec![ChannelStats { channel: CH, mean: 40.0, std: 0.5, degenerate: false }] }
}

fn smooth(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let phase = rng.random_range(0.0..6.0);
    (0..n).map(|i| (i as f64 / 60.0 + phase).sin() + rng.random_range(-0.01..0.01)).collect()
}

/// Normalized channel with isolated five-step stuck-at jumps and single spikes.
fn fixture(seed: u64, n: usize) -> LabeledChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clean = smooth(&mut rng, n);
    let mut corrupted = clean.clone();
    let mut labels = vec![AnomalyLabel::NORMAL; n];
    let mut at = 40;
    while at + 5 < n {
        let got = if rng.random_bool(0.5) {
            inject_constant(&mut corrupted, 3.0, at, 5, TimeType::Transient, &mut rng).unwrap()
        } else {
            inject_instant(&mut corrupted, 30.0, at, TimeType::Transient, &mut rng).unwrap()
        };
        labels[at..at + got.len()].copy_from_slice(&got);
        at += rng.random_range(40..80);
    }
    LabeledChannel { channel: CH, clean, corrupted, labels }
}

fn trained() -> &'static DetectorBundle {
    static BUNDLE: OnceLock<DetectorBundle> = OnceLock::new();
    BUNDLE.get_or_init(|| {
        let w = windows();
        let rema = vec![(CH, params())];
        let sets = prepare_frames(&[fixture(50, 3000)], &rema, &w).unwrap();
        let val = prepare_frames(&[fixture(51, 800)], &rema, &w).unwrap();
        let scaler = fit_scaler(&sets).unwrap();
        let config = TrainConfig { epochs: 15, hidden: [8, 4], window: 4, learning_rate: 1e-2, ..TrainConfig::default() };
        let fit = |task| {
            let mut m = train(&sequence_set(&sets, &scaler, &w, task), &sequence_set(&val, &scaler, &w, task), &config, 2)
                .unwrap();
            m.schema_hash = schema_hash(&w);
            m
        };
        let (detector, classifier) = (fit(Task::Detect), fit(Task::Bias));
        DetectorBundle { windows: w, rema, norm: stats(), scaler, detector, classifier, thresholds: TimeThresholds::default() }
    })
}

/// Zero-weight models whose outputs are fixed by the head bias.
fn constant_bundle(anomaly_logit: f64, jump_logit: f64, window: usize) -> DetectorBundle {
    let w = windows();
    let model = |logit: f64| {
        let mut weights = GruWeights::zeros(FEATURE_COUNT, [3, 2], 2);
        weights.head_b = vec![0.0, logit];
        GruModel::new(weights, window, schema_hash(&w))
    };
    DetectorBundle {
        windows: w,
        rema: vec![(CH, params())],
        norm: stats(),
        scaler: FeatureScaler::identity(),
        detector: model(anomaly_logit),
        classifier: model(jump_logit),
        thresholds: TimeThresholds::default(),
    }
}

fn raw(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v * 0.5 + 40.0).collect()
}

#[test]
fn stream_equals_composed_oracle() {
    let bundle = trained();
    let test = fixture(52, 1500);
    let input = raw(&test.corrupted);
    let out = run_channel(bundle, CH, &input).unwrap();
    let normalized: Vec<f64> = out.iter().map(|o| o.normalized).collect();
    let offline = detect_offline(bundle, CH, &normalized).unwrap();
    assert!(offline.iter().any(|p| p.detect), "trained detector flags nothing");

    let mut time = TimeClassifier::new(bundle.thresholds).unwrap();
    let mut ema = Rema::new(params()).unwrap();
    let (mut last_emitted, mut held) = (0.0, None);
    for (t, o) in out.iter().enumerate() {
        assert_eq!(o.prediction, offline[t], "step {t}");
        let tt = time.step(offline[t].detect, t).unwrap();
        assert_eq!(o.time_type, tt, "step {t}");
        let estimate = if ema.is_warming_up() {
            last_emitted
        } else {
            ema.fit().unwrap();
            *ema.state().ema.back().unwrap()
        };
        let r = o.recovery;
        match tt {
            TimeType::None => {
                assert_eq!(r.action, Action::Passthrough);
                assert_eq!(r.value, input[t]);
            }
            TimeType::Transient | TimeType::Intermittent => {
                assert_eq!(r.action, Action::Replaced);
                assert_eq!(r.value, estimate * 0.5 + 40.0, "step {t}");
            }
            TimeType::Permanent => {
                assert_eq!(r.action, Action::Alert);
                assert_eq!(r.value, held.unwrap_or(input[t]));
            }
        }
        if r.action != Action::Alert {
            held = Some(r.value);
        }
        let emitted = (r.value - 40.0) / 0.5;
        if ema.is_warming_up() {
            ema.step(emitted);
        } else {
            ema.check(emitted).unwrap();
        }
        last_emitted = emitted;
    }
}

#[test]
fn recovery_beats_corruption_on_stuck_jumps() {
    let bundle = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let clean = smooth(&mut rng, 2000);
    let mut corrupted = clean.clone();
    let starts: Vec<usize> = (100..1950).step_by(75).collect();
    for &at in &starts {
        let level = clean[at - 1] + rng.random_range(1.0..3.0);
        corrupted[at..at + 5].fill(level);
    }
    let out = run_channel(bundle, CH, &raw(&corrupted)).unwrap();
    let (clean, corrupted) = (raw(&clean), raw(&corrupted));
    for at in starts {
        let err = |v: &dyn Fn(usize) -> f64| (at..at + 5).map(|i| (v(i) - clean[i]).abs()).sum::<f64>() / 5.0;
        let before = err(&|i| corrupted[i]);
        let after = err(&|i| out[i].recovery.value);
        assert!(after < before, "episode at {at}: recovered {after} vs corrupted {before}");
    }
}

#[test]
fn silent_detector_never_classifies() {
    let bundle = constant_bundle(-20.0, 20.0, 3);
    let input = raw(&fixture(54, 400).corrupted);
    for (o, x) in run_channel(&bundle, CH, &input).unwrap().iter().zip(&input) {
        assert!(!o.prediction.detect && o.prediction.bias_type.is_none() && o.prediction.p_jump == 0.0);
        assert_eq!((o.recovery.action, o.recovery.value), (Action::Passthrough, *x));
    }
}

#[test]
fn flag_everything_classifies_every_full_window() {
    for (k, w) in [(1, 1), (7, 3), (50, 10), (200, 4)] {
        let bundle = constant_bundle(20.0, 20.0, w);
        let frames = vec![0.25; k * FEATURE_COUNT];
        let preds = predict_stream(&bundle.detector, &bundle.classifier, &frames).unwrap();
        assert_eq!(preds.iter().filter(|p| p.bias_type.is_some()).count(), k + 1 - w);

        let n = k + bundle.windows.regression_window;
        let out = run_channel(&bundle, CH, &raw(&fixture(55, n.max(60)).corrupted[..n])).unwrap();
        assert_eq!(out.iter().filter(|o| o.prediction.bias_type.is_some()).count(), k + 1 - w);
        let first = out.iter().position(|o| o.prediction.detect).unwrap();
        let permanent = out.iter().filter(|o| o.time_type == TimeType::Permanent).count();
        assert_eq!(permanent, (n - first).saturating_sub(bundle.thresholds.permanent_min - 1));
        assert_eq!(out.iter().filter(|o| o.alert.is_some()).count(), (permanent > 0) as usize);
    }
}
