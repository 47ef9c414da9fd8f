//! Streaming anomaly detection for GPS sensor traces.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! pipeline: trace preprocessing, labeled fault injection, the reinforced EMA
//! screen, multi-window feature extraction, a small stacked GRU with its
//! trainer, temporal typing with EMA recovery, and detection metrics. File
//! formats, the CLI and experiment orchestration live in the `grad` crate.
//!
//! A typical offline flow is
//!
//! 1. [`trace`]: `sort_merge` → `interpolate_missing` → `normalize`
//! 2. [`inject`]: `build_labeled_dataset` with a [`inject::SchedulePlan`]
//! 3. [`rema`]: `grid_search` on the training split, then `rema_stream`
//! 4. [`features`]: `assemble_frames` + [`features::FeatureScaler`]
//! 5. [`gru`]: `train` a detector and a bias classifier
//! 6. [`pipeline`]: per-point streaming inference with recovery

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod features;
pub mod gru;
pub mod inject;
pub mod math;
pub mod metrics;
pub mod pipeline;
pub mod recover;
pub mod rema;
pub mod synth;
pub mod trace;

pub use trace::Channel;
