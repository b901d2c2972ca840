//! Simulation harness: the event-driven engine, the closed-form fast path,
//! calibration, the benchmark table runner, and config-file parsing.

pub mod bench;
pub mod calibrate;
pub mod config;
mod engine;
mod fast;
mod report;


pub use bench::{benchmark_suite, table_rows, BenchmarkTable};
pub use calibrate::{calibrate, CalibrationTargets, Calibration};
pub use engine::{run_simulation, RunConfig, StrategyChoice};
pub use report::SimulationReport;
