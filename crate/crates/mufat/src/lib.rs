//! mufat — a discrete-event simulator for FAT-style file management on
//! NAND flash under multi-stream, radar-like workloads.
//!
//! The crate models how much of a storage medium's time goes to file
//! management (FAT and FDT updates, pre-allocation traffic, and the address
//! jumps management causes) versus actually writing data. The ratio of the
//! two is the overhead metric `mu`; the lower, the faster the effective
//! storage rate.
//!
//! It ships four classic file-management strategies (plain per-cluster FAT
//! upkeep, all-clusters pre-allocation, whole-FAT pre-allocation, and
//! post-allocation batching), a workload generator for seven airborne data
//! types, an event-driven simulation engine with an exact closed-form fast
//! path, and a small feed-forward network that learns to pick a strategy
//! per stream from oracle-labeled simulations.
//!
//! See the `book/` guide for the concepts and the accounting rules, and the
//! `mufat` CLI for the end-to-end pipeline.

pub mod error;
pub mod policy;
pub mod sim;
pub mod strategy;
pub mod timing;
pub mod volume;
pub mod workload;

pub use error::{Error, Result};
pub use sim::{run_simulation, RunConfig, SimulationReport, StrategyChoice};
pub use strategy::{applicable, preset, BaselinePreset, StrategyTuple};
pub use timing::FlashTimingParams;
pub use volume::Volume;
pub use workload::{
    generate_training_grid, preprocess, synthesize_events, FeatureVector, HardwareContext,
    StreamSpec, TrainingSample, WorkloadSpec,
};
