//! Verification tools: the discrete count test, a rank probe of the
//! damage-multiplier coupling block, finite-difference oracles for the
//! constitutive and element derivatives, and a dense uncondensed Newton solver
//! used to check the static condensation.

mod count;
mod equivalence;
mod oracles;
mod probe;

use thiserror::Error;

use crate::element::ElementError;
use crate::solver::SolverError;

pub use count::{count_test, cube_count_report, CountEntry, CountReport};
pub use equivalence::{
    condensation_equivalence, two_tet_fixture, DenseIteration, EquivalenceReport,
    IterationComparison, UncondensedSolver,
};
pub use oracles::{fd_oracle_suite, OracleCheck, OracleReport, OracleSuite, StressModel};
pub use probe::{coupling_block, coupling_block_probe, ProbeReport, PROBE_DOF_LIMIT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("dense probe limited to {limit} damage dofs, mesh has {size}")]
    TooLarge { size: usize, limit: usize },
    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: ElementError,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("dense system is singular at step {step}, iteration {iteration}")]
    Singular { step: usize, iteration: usize },
}
