//! Data ingestion, reports, the Monte Carlo harness and the command line
//! for `rdmulti-core`.

pub mod cli;
pub mod inference;
pub mod io;
pub mod montecarlo;
pub mod report;

pub use io::{load_table, read_csv, InputError, Loaded, ModelKind, Schema, TreatmentColumns};
pub use montecarlo::{run_study, ParamSummary, SimResult, StudyConfig, StudyError};
pub use report::{DiagnoseReport, FitReport};
