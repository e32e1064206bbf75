//! Global dof management, sparse assembly of the condensed system, the
//! active-set Newton loop and load stepping.

mod dofs;
mod formulation;
pub mod linear;
mod newton;
mod program;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::ElementError;

pub use dofs::{BoundaryConditions, DirichletCondition, DofMap, ExternalLoads};
pub use formulation::{Elastic, Formulation, LagrangeMixed, MixedInternal, Penalty};
pub use newton::{gauss_l2_distance, Assembly, IterationInfo, Solver, SolverState, StepStats};
pub use program::{
    run_program, AbortRecord, LoadProgram, SolveReport, StepRecord, CYCLIC_DURATION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: ElementError,
    },
    #[error("sparse factorization failed: {0}; run the count test and check c > 0")]
    Factorization(String),
    #[error(
        "Newton loop did not converge in {iterations} iterations (last increment {increment:e})"
    )]
    NonConvergence { iterations: usize, increment: f64 },
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
}

impl SolverError {
    /// Failures that a smaller load step may cure.
    pub fn is_recoverable(&self) -> bool {
        match self {
            SolverError::Element { source, .. } => {
                matches!(
                    source,
                    ElementError::InvertedState { .. } | ElementError::SingularInternal(_)
                )
            }
            SolverError::Factorization(_) | SolverError::NonConvergence { .. } => true,
            SolverError::InvalidSetup(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    /// Exit when the Euclidean norm of the increment drops below this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_bisections: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
            max_bisections: 6,
        }
    }
}
