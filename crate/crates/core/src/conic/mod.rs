//! Self-contained convex conic solver for the small dense subproblems of the
//! alternating optimizer: log-barrier Newton over positive-semidefinite
//! matrix variables, convex-quadratic and linear constraints, maximizing
//! objectives built from linear and concave perspective-log terms. Complex
//! Hermitian programs are handled through their real symmetric embedding.

mod dd;
mod hermitian;
mod problem;
mod solver;

#[cfg(test)]
mod tests;

pub use hermitian::{
    embed_complex, embed_hermitian, extract_rank_one, hermitian_eigenvalues,
    reconstruct_hermitian,
};
pub use problem::{ConicProblem, Constraint, LinExpr, MatCoef, ObjTerm, Point, QuadForm};
pub use solver::{solve, SolveOptions, SolveStatus, Solved, SolverReport};

use thiserror::Error;

/// Errors from problem validation and the solver's hard failure paths;
/// soft outcomes (infeasibility, iteration limits) are reported through
/// [`SolveStatus`] instead.
#[derive(Debug, Error)]
pub enum ConicError {
    #[error("matrix is not Hermitian: {0}")]
    NotHermitian(String),
    #[error("matrix is not symmetric: {0}")]
    NotSymmetric(String),
    #[error("dimension error: {0}")]
    BadDimension(String),
    #[error("quadratic form is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("malformed problem: {0}")]
    BadProblem(String),
    #[error("matrix indefinite beyond the eigenvalue floor (min eig {min_eig:.3e})")]
    Indefinite { min_eig: f64 },
    #[error("constraint {0} is trivially infeasible")]
    TriviallyInfeasible(usize),
    #[error(
        "a strictly feasible start is required (equality-constrained problems have no phase-I)"
    )]
    StartRequired,
}
