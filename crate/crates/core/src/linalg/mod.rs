//! Dense complex linear algebra for small Hermitian problems.
//!
//! Dimensions here are a few dozen at most, so every routine is an unblocked
//! `O(d^3)` loop over row-major `(re, im)` storage.

mod eigen;
mod factor;
mod matrix;

pub use eigen::{clip_eigenvalues, eigenvalues, hermitian_eigen, HermitianEigen};
pub use factor::{cholesky, gram, inverse_hpd, logdet, solve_hpd, HermitianPd, HERMITIAN_TOL};
pub use matrix::{inner, norm_sq, ComplexMatrix, C64};
