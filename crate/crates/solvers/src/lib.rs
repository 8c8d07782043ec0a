//! Dense interior-point solvers for the small convex programs that show up in
//! reflective-beamforming design.
//!
//! Two solvers are provided:
//!
//! * [`solve_convex`]: a log-barrier method for convex problems with quadratic,
//!   second-order-cone and box constraints ([`ConvexQP`]).
//! * [`solve_sdp`]: a primal-dual path-following method (HKM direction with
//!   Mehrotra correction) for semidefinite programs over a single real PSD
//!   matrix variable ([`SDProblem`]).
//!
//! Complex Hermitian programs are mapped onto real ones with the helpers in
//! [`embed`].

pub mod embed;
pub mod qp;
pub mod sdp;

pub use embed::{complex_embed, complex_extract, hermitian_from_embedding};
pub use qp::{solve_convex, Constraint, ConvexQP, QpSolution, QuadForm, Quadratic};
pub use sdp::{solve_sdp, Sense, SdpConstraint, SdpSolution, SDProblem, SymMatrix};

use thiserror::Error;

/// Largest matrix order accepted by [`solve_sdp`].
pub const MAX_SDP_ORDER: usize = 200;

/// Outcome of a solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "max_iterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("problem of order {order} exceeds the supported maximum of {max}")]
    TooLarge { order: usize, max: usize },
    #[error("solver finished with status {0}")]
    NotOptimal(SolveStatus),
}
