//! Dense linear algebra: matrices, real Schur decomposition and a
//! Bartels–Stewart Sylvester solver, plus slow reference oracles.

mod matrix;
pub mod oracle;
mod schur;
mod sylvester;

pub use matrix::{dot, norm, Matrix};
pub(crate) use matrix::axpy;
pub use oracle::{jacobi_eigenvalues, sylvester_oracle};
pub use schur::{schur_decompose, SchurForm, ITERATIONS_PER_DIM};
pub use sylvester::{
    eigenvalue_gap, solve_sylvester, solve_sylvester_factored, solve_sylvester_zero_left, sylvester_residual, OperatorSide,
    RESIDUAL_TOL,
};
