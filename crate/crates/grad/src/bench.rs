//! Per-point latency of the full streaming pipeline.

use std::time::{Duration, Instant};

use grad_core::pipeline::{ChannelPipeline, DetectorBundle};
use grad_core::Channel;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyStats {
    pub repetitions: usize,
    /// Timed points per repetition.
    pub points: usize,
    /// One sample per timed point per repetition, in seconds.
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub median: f64,
    pub p99: f64,
    pub mean: f64,
    /// Wall-clock of each repetition's timed stream, in seconds.
    pub totals: Vec<f64>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

/// Times REMA, features, both networks and recovery for every point of
/// `stream`. Each repetition starts a fresh pipeline and feeds `warmup`
/// untimed first, so the timed points all run the full stack.
pub fn bench_latency(
    bundle: &DetectorBundle,
    channel: Channel,
    warmup: &[f64],
    stream: &[f64],
    repetitions: usize,
) -> Result<LatencyStats> {
    if stream.is_empty() {
        return Err(Error::Data("benchmark stream is empty".into()));
    }
    if repetitions < 3 {
        return Err(Error::Usage("benchmark needs at least 3 repetitions".into()));
    }
    let stage = Error::stage("bench");
    let mut samples = Vec::with_capacity(stream.len() * repetitions);
    let mut totals = Vec::with_capacity(repetitions);
    let mut pipeline = ChannelPipeline::new(bundle, channel).map_err(stage)?;
    for rep in 0..repetitions {
        if rep > 0 {
            pipeline = ChannelPipeline::new(bundle, channel).expect("bundle validated above");
        }
        for &x in warmup {
            pipeline.push(x).map_err(Error::stage("bench"))?;
        }
        let mut total = Duration::ZERO;
        for &x in stream {
            let start = Instant::now();
            let out = pipeline.push(x);
            let elapsed = start.elapsed();
            std::hint::black_box(out.map_err(Error::stage("bench"))?);
            total += elapsed;
            samples.push(elapsed.as_secs_f64());
        }
        totals.push(total.as_secs_f64());
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        repetitions,
        points: stream.len(),
        median: percentile(&sorted, 0.5),
        p99: percentile(&sorted, 0.99),
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        samples,
        totals,
    })
}
