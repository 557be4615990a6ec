//! Small dense kernels used on `l × l` matrices (`l ≤ 2m`).

mod sym_indef;
mod triangular;

pub use sym_indef::SymIndefinite;
pub use triangular::{lower_inverse, solve_lower, solve_upper_transpose};

use nalgebra::DMatrix;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute row sum.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Relative pivot tolerance for the middle-matrix factorizations.
pub fn sym_indef_tol() -> f64 {
    sym_indef::DEFAULT_PIVOT_TOL
}
