//! Shape of each injection kind and moments of the normalized series.

use grad_core::inject::{inject_bias, inject_constant, inject_drift, inject_instant, seeded_rng, TimeType};
use grad_core::trace::{normalize, Channel, Column, NormSource, Series};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pop_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

#[test]
fn instant_offsets_have_the_stated_spread() {
    let mut rng = seeded_rng(80);
    let diffs: Vec<f64> = (0..10_000)
        .map(|_| {
            let mut s = [0.0];
            inject_instant(&mut s, 25.0, 0, TimeType::Transient, &mut rng).unwrap();
            s[0]
        })
        .collect();
    let n = diffs.len() as f64;
    let m = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd - 2.5).abs() / 2.5 < 0.05, "sample std {sd}");
}

#[test]
fn constant_window_is_flat() {
    let mut data = ChaCha8Rng::seed_from_u64(81);
    for seed in 0..200 {
        let mut s: Vec<f64> = (0..20).map(|_| data.random_range(-3.0..3.0)).collect();
        let clean = s.clone();
        inject_constant(&mut s, 2.0, 8, 3, TimeType::Transient, &mut seeded_rng(seed)).unwrap();
        assert!(s[8] == s[9] && s[9] == s[10]);
        assert!(s[8] > clean[7] && s[8] < clean[7] + 2.0);
        assert_eq!(s[..8], clean[..8]);
        assert_eq!(s[11..], clean[11..]);
    }
}

#[test]
fn bias_keeps_first_differences() {
    let mut data = ChaCha8Rng::seed_from_u64(82);
    for seed in 0..200 {
        let mut s: Vec<f64> = (0..30).map(|_| data.random_range(-3.0..3.0)).collect();
        let clean = s.clone();
        let (at, d) = (data.random_range(1..15), data.random_range(2..15));
        inject_bias(&mut s, 4.0, at, d, TimeType::Transient, &mut seeded_rng(seed)).unwrap();
        for i in at + 1..at + d {
            let (a, b) = (s[i] - s[i - 1], clean[i] - clean[i - 1]);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn drift_offsets_are_linear() {
    let mut data = ChaCha8Rng::seed_from_u64(83);
    for _ in 0..200 {
        let mut s: Vec<f64> = (0..40).map(|_| data.random_range(-3.0..3.0)).collect();
        let clean = s.clone();
        let (at, d, e) = (data.random_range(0..10), data.random_range(3..30), data.random_range(0.1..10.0));
        inject_drift(&mut s, e, at, d, TimeType::Transient).unwrap();
        let off: Vec<f64> = (at..at + d).map(|i| s[i] - clean[i]).collect();
        for w in off.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() < 1e-12);
        }
        assert!(off[0].abs() < 1e-12 && (off[d - 1] - e).abs() < 1e-12);
    }
}

#[test]
fn normalized_channel_has_zero_mean_unit_std() {
    let mut rng = ChaCha8Rng::seed_from_u64(84);
    let values: Vec<f64> = (0..1000).map(|_| 33.0 + rng.random_range(-0.01..0.01)).collect();
    let series = Series {
        source_id: "fixture".into(),
        timestamps: (0..1000).map(|i| i as f64).collect(),
        columns: vec![Column { channel: Channel::Latitude, values }],
    };
    let (out, _) = normalize(&series, NormSource::Fit).unwrap();
    let (m, sd) = pop_moments(&out.columns[0].values);
    assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9, "{m} {sd}");
}
