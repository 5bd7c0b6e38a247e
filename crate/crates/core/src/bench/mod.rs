//! Problem library, experiment drivers and report output behind the `lodgpe` binary.

pub mod config;
pub mod problems;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, FormChoice, Level, Problem};
pub use problems::{exact_soliton, exact_soliton_with_derivative, potential};
pub use report::{DynamicsRow, GroundStateRow, TraceRow};
pub use run::{exit_code, lod_info, run_coupled, run_evolve, run_groundstate, CoupledRun, LodInfo};
