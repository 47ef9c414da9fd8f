//! Array-indexed REMA reference written directly from the update rules, with
//! random parameter and series generators. Shared by test targets.

use grad_core::rema::RemaParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Reference {
    pub outlier: Vec<bool>,
    pub ema: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn pop_mean_std(xs: &[f64]) -> (f64, f64) {
    let mut sum = 0.0;
    for &x in xs {
        sum += x;
    }
    let m = sum / xs.len() as f64;
    let mut sq = 0.0;
    for &x in xs {
        sq += (x - m) * (x - m);
    }
    (m, (sq / xs.len() as f64).sqrt())
}

/// Whole-series evaluation indexed by absolute step.
pub fn reference(x: &[f64], p: &RemaParams) -> Reference {
    let ss = p.slide_size;
    let n = x.len();
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut outlier = vec![false; n];
    let mut alpha_trace = vec![0.0; n];
    let mut alpha = p.alpha;
    let mut run = 0;
    let mut warm_until = ss;
    for t in 0..n {
        if t < warm_until {
            e[t] = x[t];
            y[t] = x[t];
            alpha_trace[t] = alpha;
            continue;
        }
        let pv = (e[t - ss] + e[t - ss / 2] + e[t - ss / 3]) / 3.0;
        let pred = alpha * y[t - 1] + (1.0 - alpha) * pv;
        let (m, sd) = pop_mean_std(&e[t - ss..t - 1]);
        let band = sd.max(1e-9) * p.sensitivity;
        if x[t] < pred - band || x[t] > pred + band {
            outlier[t] = true;
            e[t] = m;
            y[t] = m;
            alpha = (alpha - p.punish).max(p.alpha_min);
            run += 1;
        } else {
            e[t] = pred;
            y[t] = x[t];
            alpha = (alpha + p.reward).min(p.alpha_max);
            run = 0;
        }
        if run >= ss {
            run = 0;
            alpha = p.alpha;
            warm_until = t + 1 + ss;
        }
        alpha_trace[t] = alpha;
    }
    Reference { outlier, ema: e, alpha: alpha_trace }
}

pub fn random_params(rng: &mut ChaCha8Rng) -> RemaParams {
    let alpha_min = rng.random_range(0.001..0.3);
    let alpha_max = rng.random_range(0.7..1.0);
    RemaParams {
        alpha: rng.random_range(alpha_min..=alpha_max),
        alpha_min,
        alpha_max,
        punish: rng.random_range(0.001..0.5),
        reward: rng.random_range(0.001..0.1),
        slide_size: rng.random_range(3..30),
        sensitivity: rng.random_range(0.5..6.0),
    }
}

pub fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut level: f64 = rng.random_range(-5.0..5.0);
    let step = rng.random_range(0.0..0.2);
    (0..n)
        .map(|_| {
            level += rng.random_range(-step..=step);
            match rng.random_range(0..20) {
                0 => level + rng.random_range(-8.0..8.0),
                1 => level.round(),
                _ => level + rng.random_range(-0.05..0.05),
            }
        })
        .collect()
}
