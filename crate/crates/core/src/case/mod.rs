//! Case files, run orchestration and run artifacts.

pub mod config;
pub mod io;
pub mod run;
pub mod summary;

pub use config::{parse_config, CaseConfig, InitialCondition, SolverKind, VtkFormat};
pub use run::{post_process, run_case, Case, Checkpoint, FlowState, RunOptions, RunOutcome, RunStatus};
pub use summary::{render_report, reference_for, Summary};
