//! Joint reconstruction laboratory: coupled flow-matching reconstruction of
//! repeated object instances, at a scale that trains and evaluates on a CPU.
//!
//! The crate is organized around a small number of subsystems:
//!
//! - [`corpus`] — a parametric family of toy 3D shapes (static and
//!   articulated) with canonical surface samples and rotation-invariant
//!   geometric descriptors.
//! - [`scene`] — procedural scene layout, rescans, camera trajectories,
//!   partial per-instance observations, and the three synthetic benchmarks
//!   (spatial repetition, temporal repetition, articulation).
//! - [`pairing`] — positive/negative training-pair sampling and descriptor
//!   threshold calibration.
//! - [`autodiff`] — a minimal reverse-mode tape over dense `f64` matrices;
//!   everything the denoiser needs and nothing more.
//! - [`model`] — the velocity network: point-set condition encoder and
//!   alternating single-stream / coupled fusion attention blocks with
//!   weights shared across objects.
//! - [`flow`] — rectified flow-matching paths, losses, the training step,
//!   joint Euler sampling, and checkpoints.
//! - [`align`] — the explicit baseline: instance matching, rigid
//!   registration, observation fusion, and controlled error injection.
//! - [`metrics`] — Chamfer distance, normal consistency and F-score with a
//!   brute-force oracle-compatible nearest-neighbor index.
//! - [`cli`] — the `jointrec` command-line front end (corpus/scenes/train/
//!   eval/sweep/report).

pub mod align;
pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod flow;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pairing;
pub mod rng;
pub mod scene;
pub mod stats;

pub use error::{Error, Result};
