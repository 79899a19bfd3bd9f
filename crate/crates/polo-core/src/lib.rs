//! Object-goal search sandbox built around probable-object-location scoring.
//!
//! The crate provides the full stack needed to benchmark view-selection
//! policies for object search in voxelized indoor scenes:
//!
//! * [`voxelmap`] — 3D occupancy + object-probability maps with Bayesian
//!   log-odds fusion, 2D projection, egocentric cropping and snapshot I/O.
//! * [`visibility`] — exact voxel ray traversal, line of sight, and the
//!   panoramic visible-set sweep the scoring kernel is built on.
//! * [`scoring`] — probable-object-location (POLo) scores: single
//!   configurations, dense per-cell fields, sampled evaluation, and the
//!   2D variant, plus coverage gain.
//! * [`detector`] — simulated object detections with distance-dependent
//!   recall, score noise and false positives, and the likelihood combiner
//!   that turns detections into fusible evidence.
//! * [`scene`] / [`scenegen`] — ground-truth scenes and the seeded
//!   procedural generator (multi-room floor plans with receptacles and
//!   target objects).
//! * [`sim`] — discrete-action agent simulation, episode execution and
//!   trace recording.
//! * [`policies`] — the POLo policy plus frontier, coverage and
//!   probability-argmax baselines sharing one controller.
//! * [`metrics`] — success, SPL, exploration/checking efficiency and
//!   accumulation curves.
//! * [`config`] / [`runner`] — run configuration and the batch benchmark
//!   harness behind the CLI.

pub mod config;
pub mod detector;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod pathing;
pub mod policies;
mod ray;
pub mod runner;
pub mod scene;
pub mod scenegen;
pub mod scoring;
pub mod sim;
pub mod visibility;
pub mod voxelmap;

pub use error::{Error, Result};
