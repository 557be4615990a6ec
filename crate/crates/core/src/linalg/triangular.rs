use nalgebra::{DMatrix, DVector};

/// Solves `L x = b` for lower-triangular `L` by forward substitution.
/// Entries above the diagonal are ignored.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = b.len();
    debug_assert_eq!(l.shape(), (n, n));
    let mut x = b.clone();
    for i in 0..n {
        let mut acc = x[i];
        for j in 0..i {
            acc -= l[(i, j)] * x[j];
        }
        x[i] = acc / l[(i, i)];
    }
    x
}

/// Solves `Rᵀ x = b` for upper-triangular `R` by forward substitution,
/// reading `R` column-wise so the transpose is never formed.
pub fn solve_upper_transpose(r: &DMatrix<f64>, b: &[f64]) -> DVector<f64> {
    let n = b.len();
    debug_assert_eq!(r.shape(), (n, n));
    let mut x = DVector::from_column_slice(b);
    for i in 0..n {
        let col = r.column(i);
        let mut acc = x[i];
        for j in 0..i {
            acc -= col[j] * x[j];
        }
        x[i] = acc / col[i];
    }
    x
}

/// `L⁻¹` for lower-triangular `L`, one forward substitution per column.
pub fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        inv.set_column(j, &solve_lower(l, &e));
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn forward_substitution() {
        let l = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 1.0, 4.0, 0.0, -1.0, 3.0, 5.0]);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &l * &x;
        assert_relative_eq!(solve_lower(&l, &b), x, epsilon = 1e-14);
    }

    #[test]
    fn transpose_solve_matches_explicit() {
        let r = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, -2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 1.5]);
        let x = DVector::from_vec(vec![0.25, 1.0, -3.0]);
        let b = r.transpose() * &x;
        assert_relative_eq!(solve_upper_transpose(&r, b.as_slice()), x, epsilon = 1e-14);
    }

    #[test]
    fn inverse_of_lower() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 4.0]);
        let inv = lower_inverse(&l);
        assert_relative_eq!(&l * &inv, DMatrix::identity(2, 2), epsilon = 1e-15);
        assert_eq!(inv[(0, 1)], 0.0);
    }
}
