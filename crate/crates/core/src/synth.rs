//! Synthetic GPS trajectories for experiments when recorded traces are not
//! at hand.
//!
//! Two motion models are provided. `Vehicle` is a 1 Hz road vehicle with
//! speed set-points, bounded acceleration and occasional right-angle turns.
//! `Aerial` is a small multirotor with hover phases, slow speeds and smooth
//! turn-rate changes. Positions are integrated in a local metric frame,
//! perturbed with Gaussian receiver noise and converted to degrees.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::inject::seeded_rng;
use crate::trace::{GpsReading, Trace};

const METERS_PER_DEGREE: f64 = 111_320.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionModel {
    Vehicle,
    Aerial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub model: MotionModel,
    pub points: usize,
    /// Seconds between samples.
    pub dt: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Standard deviation of horizontal receiver noise, metres.
    pub gps_noise_m: f64,
    pub start_time: f64,
}

impl TrajectoryConfig {
    /// Urban road vehicle near an intersection test bed.
    pub fn vehicle(points: usize) -> Self {
        Self {
            model: MotionModel::Vehicle,
            points,
            dt: 1.0,
            origin_lat: 33.845,
            origin_lon: -112.135,
            gps_noise_m: 1.5,
            start_time: 0.0,
        }
    }

    /// Low-altitude multirotor flight over a city.
    pub fn aerial(points: usize) -> Self {
        Self {
            model: MotionModel::Aerial,
            points,
            dt: 1.0,
            origin_lat: 47.3769,
            origin_lon: 8.5417,
            gps_noise_m: 1.0,
            start_time: 0.0,
        }
    }
}

struct Motion {
    speed_targets: &'static [f64],
    accel_limit: f64,
    retarget_prob: f64,
    turn_prob: f64,
    heading_jitter: f64,
    /// Turn-rate random walk step and bound, rad/s.
    turn_rate_step: f64,
    turn_rate_max: f64,
}

fn motion(model: MotionModel) -> Motion {
    match model {
        MotionModel::Vehicle => Motion {
            speed_targets: &[0.0, 8.0, 12.0, 15.0, 20.0],
            accel_limit: 2.0,
            retarget_prob: 0.01,
            turn_prob: 0.01,
            heading_jitter: 0.01,
            turn_rate_step: 0.0,
            turn_rate_max: 0.0,
        },
        MotionModel::Aerial => Motion {
            speed_targets: &[0.0, 2.0, 4.0, 6.0],
            accel_limit: 1.0,
            retarget_prob: 0.02,
            turn_prob: 0.0,
            heading_jitter: 0.005,
            turn_rate_step: 0.01,
            turn_rate_max: 0.15,
        },
    }
}

/// Generates a trace; the same seed and config give the same trace.
pub fn generate(config: &TrajectoryConfig, seed: u64) -> Trace {
    let mut rng = seeded_rng(seed);
    let m = motion(config.model);
    let noise = Normal::new(0.0, config.gps_noise_m.max(0.0)).expect("finite std");
    let jitter = Normal::new(0.0, m.heading_jitter).expect("finite std");
    let speed_noise = Normal::new(0.0, 0.1).expect("finite std");
    let (mut x, mut y, mut v) = (0.0f64, 0.0f64, 0.0f64);
    let mut heading = rng.random_range(0.0..core::f64::consts::TAU);
    let mut turn_rate = 0.0f64;
    let mut target = m.speed_targets[1];
    let lat_scale = 1.0 / METERS_PER_DEGREE;
    let lon_scale = 1.0 / (METERS_PER_DEGREE * libm::cos(config.origin_lat.to_radians()));
    let mut readings = Vec::with_capacity(config.points);
    for i in 0..config.points {
        if rng.random::<f64>() < m.retarget_prob {
            target = *m.speed_targets.choose(&mut rng).expect("non-empty");
        }
        let dv = (target - v).clamp(-m.accel_limit * config.dt, m.accel_limit * config.dt);
        v += dv;
        if rng.random::<f64>() < m.turn_prob {
            heading += if rng.random::<bool>() { 1.0 } else { -1.0 } * core::f64::consts::FRAC_PI_2;
        }
        if m.turn_rate_max > 0.0 {
            turn_rate += rng.random_range(-m.turn_rate_step..=m.turn_rate_step);
            turn_rate = turn_rate.clamp(-m.turn_rate_max, m.turn_rate_max);
            heading += turn_rate * config.dt;
        }
        heading += jitter.sample(&mut rng);
        x += v * libm::cos(heading) * config.dt;
        y += v * libm::sin(heading) * config.dt;
        let east = x + noise.sample(&mut rng);
        let north = y + noise.sample(&mut rng);
        let speed = (v + speed_noise.sample(&mut rng)).max(0.0);
        let lat = config.origin_lat + north * lat_scale;
        let lon = config.origin_lon + east * lon_scale;
        let t = config.start_time + i as f64 * config.dt;
        readings.push(
            GpsReading::new(t, Some(lat), Some(lon), Some(speed)).expect("coordinates stay near origin"),
        );
    }
    let name = match config.model {
        MotionModel::Vehicle => "vehicle",
        MotionModel::Aerial => "aerial",
    };
    Trace::new(format!("synthetic-{name}-{seed}"), readings)
}
