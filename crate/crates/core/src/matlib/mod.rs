//! Dense real matrix kernel.
//!
//! Everything is column-major; `vec` stacks columns so that
//! `vec(A X Bᵀ) = (B ⊗ A) vec(X)`. Every Kronecker-lifted formula in the crate
//! relies on this orientation.

mod lu;
mod matrix;
mod spectral;
mod symeig;

use thiserror::Error;

pub use lu::{backward_subst_transpose, cholesky, forward_subst, inverse, lower_inverse, solve_linear, Lu};
pub use matrix::{kron, unvec, vec, Matrix, SymMatrix};
pub use spectral::{eigenvalue_moduli, eigenvalues, spectral_radius};
pub use symeig::{sym_eig, SymEigen};

pub(crate) use symeig::{sym_eig_matrix, sym_eigvals_matrix};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MatError {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("non-finite entry")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row},{col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("matrix is singular to working precision (rcond = {rcond:e})")]
    Singular { rcond: f64 },
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: crate::Scalar>(s: &SymMatrix<T>) -> Result<T, MatError> {
    Ok(sym_eig(s)?.min())
}
