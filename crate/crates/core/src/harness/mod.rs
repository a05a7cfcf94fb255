//! Experiment orchestration: matrix files, configuration documents and the
//! command runner behind the CLI.

pub mod config;
pub mod io;
pub mod run;

pub use config::{Command, ExperimentConfig, FamilyChoice};
pub use io::{read_matrix, write_matrix};
pub use run::{run_experiment, Report, Table};
