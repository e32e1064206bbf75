//! Scenario configuration, batch runs, force-displacement CSV output, VTU
//! field export and timing comparisons.

mod config;
mod output;
mod run;
mod vtu;

use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::MeshError;
use crate::solver::SolverError;

pub use config::{
    FormulationConfig, MeshConfig, OutputConfig, PlaneTag, Scenario, ScenarioConfig,
    ENV_OUTPUT_DIR, ENV_THREADS,
};
pub use output::{read_curve, read_header, CurveRow, CurveWriter};
pub use run::{
    run_scenario, solve_scenario, timing_comparison, RunArtifacts, RunTiming, TimingComparison,
};
pub use vtu::{export_fields, read_vtu, vtu_string, FieldSnapshot, VtuData};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },
    #[error("invalid argument: {0}")]
    Mismatch(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv(e.to_string())
    }
}
