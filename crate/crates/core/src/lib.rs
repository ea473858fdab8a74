//! Continual anomaly detection on frozen encoder feature grids.
//!
//! A frozen image encoder yields feature grids at [`NUM_STAGES`] depths. Each
//! task trains a small bottleneck adapter per stage; at inference every task's
//! adapters are averaged and the blended features are scored by cosine
//! similarity against a normal/anomaly text-vector pair.
//!
//! * [`numcore`] — dense matrices, seeded random streams, map resampling.
//! * [`featio`] — binary feature/mask/text-bank formats and JSON manifests.
//! * [`adapters`] — adapters, residual blend, anomaly synthesis, banks.
//! * [`scoring`] — per-stage probability maps, fusion, image scores.
//! * [`training`] — losses, analytic gradients, Adam loop.
//! * [`metrics`] — exact AUROC/AP, ACC and forgetting, report files.
//! * [`harness`] — synthetic data, scenario runs, CLI plumbing.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Stage loops index several parallel per-stage arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod adapters;
pub mod error;
pub mod featio;
pub mod harness;
pub mod metrics;
pub mod numcore;
pub mod scoring;
pub mod training;

pub use error::{Error, FormatError, Result};

/// Encoder stages tapped for features.
pub const NUM_STAGES: usize = 4;
