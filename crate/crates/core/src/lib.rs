//! Fault-tolerant orchestration of iterative, embarrassingly parallel Monte
//! Carlo computations.
//!
//! A run provisions a fleet on a [`platform`] backend, drives bursts of map
//! tasks through the [`scheduler`] with retry and reschedule handling,
//! reduces them with a [`mapreduce`] connector running the [`hrmc`]
//! structure-fitting payload, and optionally curates every iteration into a
//! [`curation`] catalog. [`sweep`] fans a spec out over parameter ranges.

pub mod curation;
pub mod hrmc;
pub mod mapreduce;
pub mod model;
pub mod platform;
pub mod rng;
pub mod scheduler;
pub mod sweep;

pub use model::{RunSpec, Stage, StageState};
pub use rng::{derive_task_seed, SplitMix64};
