//! Feature frames against a normal-equations fit, a hand-worked window, and
//! the shift and causality properties of the assembled frames.

use grad_core::features::{assemble_frames, regression_features, stat_features, WindowConfig};
use grad_core::rema::{rema_stream, RemaParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves the 2x2 normal equations for `y = a + b i` by Cramer's rule.
fn normal_equations(y: &[f64]) -> (f64, f64, f64) {
    let n = y.len() as f64;
    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, &v) in y.iter().enumerate() {
        let x = i as f64;
        sx += x;
        sxx += x * x;
        sy += v;
        sxy += x * v;
    }
    let det = n * sxx - sx * sx;
    let intercept = (sy * sxx - sx * sxy) / det;
    let slope = (n * sxy - sx * sy) / det;
    let ssr: f64 = y.iter().enumerate().map(|(i, &v)| (v - intercept - slope * i as f64).powi(2)).sum();
    (slope, intercept, (ssr / (n - 2.0)).sqrt())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn regression_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..1000 {
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-10.0..10.0)).collect();
        let (s, i, e) = regression_features(&y).unwrap();
        let (os, oi, oe) = normal_equations(&y);
        assert!(rel(s, os) < 1e-10 && rel(i, oi) < 1e-10 && rel(e, oe) < 1e-10, "{s} {i} {e} vs {os} {oi} {oe}");
    }
}

#[test]
fn exact_and_constant_lines() {
    assert_eq!(regression_features(&[0.0, 1.0, 2.0]).unwrap(), (1.0, 0.0, 0.0));
    let (s, i, e) = regression_features(&[7.5; 4]).unwrap();
    assert_eq!((s, i, e), (0.0, 7.5, 0.0));
}

#[test]
fn hand_worked_window() {
    // mean 2.75, squared deviations 3.0625 0.0625 0.5625 5.0625
    let std = (8.75f64 / 4.0).sqrt();
    // gains 2 + 3, losses 1, RS 5
    let rsi = 100.0 - 100.0 / 6.0;
    let (s, r, range, variation) = stat_features(&[1.0, 3.0, 2.0, 5.0], 4.0).unwrap();
    assert!((s - std).abs() < 1e-12);
    assert!((r - rsi).abs() < 1e-12);
    assert_eq!(range, 4.0);
    assert_eq!(variation, -1.0);
}

#[test]
fn constant_and_rising_windows() {
    let (s, r, range, variation) = stat_features(&[3.0; 5], 4.5).unwrap();
    assert_eq!((s, r, range, variation), (0.0, 50.0, 0.0, 1.5));
    let (_, r, _, _) = stat_features(&[1.0, 2.0, 4.0, 8.0], 9.0).unwrap();
    assert_eq!(r, 100.0);
}

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

fn series(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = 0.0;
    (0..n)
        .map(|i| {
            level += rng.random_range(-0.1..0.1);
            level + if i % 29 == 0 { rng.random_range(-2.0..2.0) } else { 0.0 }
        })
        .collect()
}

fn frames(x: &[f64], config: &WindowConfig) -> Vec<grad_core::features::FeatureFrame> {
    assemble_frames(x, &rema_stream(x, &params()).unwrap(), config).unwrap()
}

#[test]
fn frame_count_is_length_minus_window() {
    let config = WindowConfig::default();
    for n in [21, 50, 333] {
        assert_eq!(frames(&series(41, n), &config).len(), n - config.regression_window);
    }
}

#[test]
fn shifting_the_series_shifts_only_level_features() {
    let config = WindowConfig::default();
    let x = series(42, 400);
    let shifted: Vec<f64> = x.iter().map(|v| v + 10.0).collect();
    let (a, b) = (frames(&x, &config), frames(&shifted, &config));
    let close = |p: f64, q: f64| (p - q).abs() < 1e-8;
    for (f, g) in a.iter().zip(&b) {
        assert!(close(f.slope, g.slope) && close(f.se, g.se));
        assert!(close(f.std, g.std) && close(f.range, g.range) && close(f.variation, g.variation));
        assert!((f.rsi - g.rsi).abs() < 1e-6);
        assert!(close(f.intercept + 10.0, g.intercept));
        assert!(close(f.ema + 10.0, g.ema));
    }
}

#[test]
fn frames_are_causal() {
    let config = WindowConfig { regression_window: 10, stat_window: 5, rsi_window: 6 };
    let x = series(43, 300);
    let full = frames(&x, &config);
    for cut in [13, 40, 157, 299] {
        let prefix = frames(&x[..cut], &config);
        assert_eq!(prefix[..], full[..prefix.len()], "cut {cut}");
    }
}
