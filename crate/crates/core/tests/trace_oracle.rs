//! Ordering, merging, gap filling and normalization against direct
//! reference computations.

use std::collections::BTreeMap;

use grad_core::trace::{denormalize, interpolate_missing, normalize, sort_merge, GpsReading, NormSource, Series, Trace};
use grad_core::Channel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_trace(rng: &mut ChaCha8Rng, n: usize, missing: f64) -> Trace {
    let readings = (0..n)
        .map(|_| {
            let t = rng.random_range(0..n as u32 / 2 + 1) as f64 * 0.5;
            let mut v = |lo: f64, hi: f64| (!rng.random_bool(missing)).then(|| rng.random_range(lo..hi));
            GpsReading::new(t, v(40.0, 41.0), v(-84.0, -83.0), v(0.0, 30.0)).unwrap()
        })
        .collect();
    Trace::new("t", readings)
}

#[test]
fn sort_merge_matches_grouped_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..300 {
        let n = rng.random_range(1..60);
        let trace = random_trace(&mut rng, n, 0.2);
        let mut groups: BTreeMap<u64, Vec<GpsReading>> = BTreeMap::new();
        for r in &trace.readings {
            groups.entry(r.timestamp.to_bits()).or_default().push(*r);
        }
        let merged = sort_merge(trace).unwrap();
        assert_eq!(merged.len(), groups.len());
        for (r, (bits, members)) in merged.readings.iter().zip(&groups) {
            assert_eq!(r.timestamp.to_bits(), *bits);
            for ch in Channel::ALL {
                let vals: Vec<f64> = members.iter().filter_map(|m| m.get(ch)).collect();
                let want = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
                match (r.get(ch), want) {
                    (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0)),
                    (a, b) => assert_eq!(a, b),
                }
            }
        }
    }
}

#[test]
fn interpolation_matches_line_between_neighbours() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..300 {
        let n = rng.random_range(3..80);
        let mut readings = Vec::with_capacity(n);
        let mut t = 0.0;
        for _ in 0..n {
            t += rng.random_range(0.05..2.0);
            readings.push(GpsReading::new(t, Some(rng.random_range(-10.0..10.0)), Some(1.0), None).unwrap());
        }
        let keep: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        if keep.iter().filter(|&&k| k).count() < 2 {
            continue;
        }
        let original = readings.clone();
        for (r, &k) in readings.iter_mut().zip(&keep) {
            if !k {
                r.latitude = None;
            }
        }
        let (filled, report) = interpolate_missing(Trace::new("t", readings)).unwrap();
        assert_eq!(report.get(Channel::Latitude), keep.iter().filter(|&&k| !k).count());
        let valid: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
        for i in 0..n {
            let got = filled.readings[i].latitude.unwrap();
            let want = if keep[i] {
                original[i].latitude.unwrap()
            } else if i < valid[0] {
                original[valid[0]].latitude.unwrap()
            } else if i > *valid.last().unwrap() {
                original[*valid.last().unwrap()].latitude.unwrap()
            } else {
                let a = *valid.iter().filter(|&&v| v < i).last().unwrap();
                let b = *valid.iter().find(|&&v| v > i).unwrap();
                let (ta, tb, ti) = (original[a].timestamp, original[b].timestamp, original[i].timestamp);
                let (ya, yb) = (original[a].latitude.unwrap(), original[b].latitude.unwrap());
                ya + (yb - ya) * (ti - ta) / (tb - ta)
            };
            assert!((got - want).abs() < 1e-9, "step {i}: {got} vs {want}");
        }
    }
}

#[test]
fn normalize_then_denormalize_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let trace = random_trace(&mut rng, 200, 0.0);
    let trace = sort_merge(trace).unwrap();
    let series = Series::from_trace(&trace).unwrap();
    let (z, stats) = normalize(&series, NormSource::Fit).unwrap();
    for (col, zcol) in series.columns.iter().zip(&z.columns) {
        let mean = zcol.values.iter().sum::<f64>() / zcol.values.len() as f64;
        let var = zcol.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / zcol.values.len() as f64;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        for (x, v) in col.values.iter().zip(&zcol.values) {
            let back = denormalize(*v, &stats, col.channel).unwrap();
            assert!((back - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
