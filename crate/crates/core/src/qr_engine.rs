//! Triangular factor of `Ψ̂ = Q [R₁; 0]`, maintained without `Q`.
//!
//! The factor supports three operations:
//!
//! * a from-scratch Householder factorization, `O(n l²)`;
//! * appending a column `c`, which needs only `Ψ̂ᵀc` and `‖c‖²`: solve
//!   `R₁ᵀu = Ψ̂ᵀc` and set `η = √(‖c‖² − ‖u‖²)`, `O(n l + l²)`;
//! * dropping leading columns, after which Givens rotations restore the
//!   triangular shape of the banded remainder, `O(l²)`.
//!
//! Diagonals are kept nonnegative so that maintained and recomputed factors
//! of a full-rank matrix agree entrywise.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::linalg::solve_upper_transpose;
use crate::{Error, Result};

/// A diagonal entry below this fraction of the largest one marks the factor
/// as ill-conditioned.
pub const CONDITION_TOL: f64 = 1e-8;

/// Relative slack allowed for `‖c‖² − ‖u‖²` going negative on append.
pub const APPEND_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankStatus {
    FullRank,
    /// Diagonal entry at this index is zero to working precision.
    Deficient(usize),
    /// Smallest over largest diagonal magnitude.
    IllConditioned(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinQR {
    r1: DMatrix<f64>,
    diag_floor: f64,
    normalized: bool,
}

impl Default for ThinQR {
    fn default() -> Self {
        Self::empty()
    }
}

impl ThinQR {
    /// Factor of a matrix with no columns.
    pub fn empty() -> Self {
        Self {
            r1: DMatrix::zeros(0, 0),
            diag_floor: 1.0,
            normalized: true,
        }
    }

    /// Wraps an upper-triangular matrix; entries below the diagonal are
    /// cleared.
    pub fn from_triangular(r: DMatrix<f64>) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::Dimension(format!(
                "factor is {:?}, not square",
                r.shape()
            )));
        }
        let mut r = r;
        for j in 0..r.ncols() {
            for i in j + 1..r.nrows() {
                r[(i, j)] = 0.0;
            }
        }
        let normalized = r.diagonal().iter().all(|&d| d >= 0.0);
        Ok(Self::finish(r, normalized))
    }

    /// Householder QR of `psi_hat`, keeping only `R₁` with a nonnegative
    /// diagonal. Zero columns give zero diagonal entries. When `n < l` the
    /// missing rows of `R₁` are zero.
    pub fn from_scratch(psi_hat: &DMatrix<f64>) -> Self {
        Self::from_scratch_owned(psi_hat.clone())
    }

    /// [`ThinQR::from_scratch`] reusing the storage of `psi_hat`.
    pub fn from_scratch_owned(psi_hat: DMatrix<f64>) -> Self {
        let (n, l) = psi_hat.shape();
        let mut a = psi_hat;
        let steps = n.min(l);
        for j in 0..steps {
            let norm = a.column(j).rows(j, n - j).norm();
            if norm == 0.0 {
                continue;
            }
            let x0 = a[(j, j)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            // Reflector v = x − αe₁ maps x to αe₁. It is built in place in
            // column j, which is overwritten below.
            a[(j, j)] -= alpha;
            let (head, mut tail) = a.columns_range_pair_mut(j, j + 1..);
            let v = head.rows(j, n - j);
            let vtv = v.norm_squared();
            if vtv > 0.0 {
                for c in 0..tail.ncols() {
                    let mut col = tail.column_mut(c);
                    let mut col = col.rows_mut(j, n - j);
                    let w = 2.0 * v.dot(&col) / vtv;
                    col.axpy(-w, &v, 1.0);
                }
            }
            a[(j, j)] = alpha;
        }
        let mut r = DMatrix::zeros(l, l);
        for j in 0..l {
            for i in 0..steps.min(j + 1) {
                r[(i, j)] = a[(i, j)];
            }
        }
        normalize_signs(&mut r);
        Self::finish(r, true)
    }

    fn finish(r1: DMatrix<f64>, normalized: bool) -> Self {
        let diag_floor = diag_ratio(&r1);
        Self {
            r1,
            diag_floor,
            normalized,
        }
    }

    pub fn r1(&self) -> &DMatrix<f64> {
        &self.r1
    }

    pub fn into_r1(self) -> DMatrix<f64> {
        self.r1
    }

    /// Number of columns of `Ψ̂`.
    pub fn l(&self) -> usize {
        self.r1.ncols()
    }

    /// `min |r_ii| / max |r_ii|`.
    pub fn diag_floor(&self) -> f64 {
        self.diag_floor
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn rank_status(&self) -> RankStatus {
        let l = self.l();
        if l == 0 {
            return RankStatus::FullRank;
        }
        let diag = self.r1.diagonal();
        let max = diag.amax();
        let floor = f64::EPSILON * max * l as f64;
        if let Some(i) = diag.iter().position(|d| *d == 0.0 || d.abs() < floor) {
            return RankStatus::Deficient(i);
        }
        let ratio = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs())) / max;
        if ratio > CONDITION_TOL {
            RankStatus::FullRank
        } else {
            RankStatus::IllConditioned(ratio)
        }
    }

    /// Appends column `c` to `psi_hat_old`, whose factor `self` is.
    pub fn append_column(&self, psi_hat_old: &DMatrix<f64>, c: &DVector<f64>) -> Result<Self> {
        if psi_hat_old.ncols() != self.l() || psi_hat_old.nrows() != c.len() {
            return Err(Error::Dimension(format!(
                "factor has {} columns, matrix is {:?}, column has length {}",
                self.l(),
                psi_hat_old.shape(),
                c.len()
            )));
        }
        let products = psi_hat_old.tr_mul(c);
        self.append_from_products(products.as_slice(), c.norm_squared())
    }

    /// Appends a column given only `Ψ̂ᵀc` and `‖c‖²`.
    pub fn append_from_products(&self, psi_t_c: &[f64], c_norm_sq: f64) -> Result<Self> {
        let l = self.l();
        if psi_t_c.len() != l {
            return Err(Error::Dimension(format!(
                "{} products for {} columns",
                psi_t_c.len(),
                l
            )));
        }
        match self.rank_status() {
            RankStatus::FullRank => {}
            status => return Err(Error::Rank(status)),
        }
        let u = solve_upper_transpose(&self.r1, psi_t_c);
        let eta_sq = c_norm_sq - u.norm_squared();
        if eta_sq < -APPEND_TOL * c_norm_sq {
            return Err(Error::Numerical(format!(
                "‖c‖² − ‖u‖² = {eta_sq:e} with ‖c‖² = {c_norm_sq:e}; the factor is stale"
            )));
        }
        let eta = eta_sq.max(0.0).sqrt();
        let mut r = self.r1.clone().resize(l + 1, l + 1, 0.0);
        for i in 0..l {
            r[(i, l)] = u[i];
        }
        r[(l, l)] = eta;
        Ok(Self::finish(r, self.normalized))
    }

    /// Drops the first `count` columns and re-triangularizes with Givens
    /// rotations, column by column and bottom-up within each column.
    pub fn delete_leading_columns(&self, count: usize) -> Result<Self> {
        let l = self.l();
        if count == 0 || count >= l {
            return Err(Error::Dimension(format!(
                "cannot delete {count} leading columns of a factor with {l} columns"
            )));
        }
        let width = l - count;
        let mut t = self.r1.columns(count, width).into_owned();
        for j in 0..width {
            for i in (j + 1..=(j + count).min(l - 1)).rev() {
                let b = t[(i, j)];
                if b == 0.0 {
                    continue;
                }
                let a = t[(i - 1, j)];
                let r = a.hypot(b);
                let (c, s) = (a / r, b / r);
                for col in j..width {
                    let (x, y) = (t[(i - 1, col)], t[(i, col)]);
                    t[(i - 1, col)] = c * x + s * y;
                    t[(i, col)] = c * y - s * x;
                }
                t[(i, j)] = 0.0;
            }
        }
        let mut r = t.rows(0, width).into_owned();
        normalize_signs(&mut r);
        Ok(Self::finish(r, true))
    }
}

impl ThinQR {
    /// Brings the factor in line with `psi_hat` after the history changed:
    /// the first `dropped` columns are deleted, then every column of
    /// `psi_hat` past the surviving ones is appended. Falls back to a
    /// from-scratch factorization when an append hits a rank or numerical
    /// error. The flag reports whether that happened.
    pub fn track_history(&self, dropped: usize, psi_hat: &DMatrix<f64>) -> Result<(Self, bool)> {
        let mut qr = match dropped {
            0 => self.clone(),
            d if d >= self.l() => ThinQR::empty(),
            d => self.delete_leading_columns(d)?,
        };
        if qr.l() > psi_hat.ncols() {
            return Err(Error::Dimension(format!(
                "factor keeps {} columns but the new matrix has {}",
                qr.l(),
                psi_hat.ncols()
            )));
        }
        for j in qr.l()..psi_hat.ncols() {
            let c = psi_hat.column(j);
            let products = psi_hat.columns(0, j).tr_mul(&c);
            match qr.append_from_products(products.as_slice(), c.norm_squared()) {
                Ok(next) => qr = next,
                Err(err @ (Error::Rank(_) | Error::Numerical(_))) => {
                    warn!("incremental QR update failed ({err}); refactoring from scratch");
                    return Ok((ThinQR::from_scratch(psi_hat), true));
                }
                Err(err) => return Err(err),
            }
        }
        Ok((qr, false))
    }
}

fn normalize_signs(r: &mut DMatrix<f64>) {
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            for j in i..r.ncols() {
                r[(i, j)] = -r[(i, j)];
            }
        }
    }
}

fn diag_ratio(r: &DMatrix<f64>) -> f64 {
    if r.ncols() == 0 {
        return 1.0;
    }
    let diag = r.diagonal();
    let max = diag.amax();
    if max == 0.0 {
        return 0.0;
    }
    diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs())) / max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cols(n: usize, data: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(n, data.len(), |i, j| data[j][i])
    }

    #[test]
    fn single_column_is_its_norm() {
        let qr = ThinQR::from_scratch(&cols(3, &[&[3.0, 4.0, 0.0]]));
        assert_relative_eq!(qr.r1()[(0, 0)], 5.0, epsilon = 1e-15);
    }

    #[test]
    fn orthonormal_columns_give_identity() {
        let qr = ThinQR::from_scratch(&cols(4, &[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]]));
        assert_relative_eq!(qr.r1().clone(), DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn two_columns_by_hand() {
        let qr = ThinQR::from_scratch(&cols(3, &[&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]]));
        assert_relative_eq!(
            qr.r1().clone(),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            epsilon = 1e-15
        );
        assert!(qr.is_normalized());
        assert_eq!(qr.r1()[(1, 0)], 0.0);
    }

    #[test]
    fn append_by_hand() {
        let first = cols(3, &[&[1.0, 0.0, 0.0]]);
        let qr = ThinQR::from_scratch(&first);
        let next = qr
            .append_column(&first, &DVector::from_vec(vec![1.0, 1.0, 0.0]))
            .unwrap();
        assert_relative_eq!(
            next.r1().clone(),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn append_orthogonal_column() {
        let first = cols(3, &[&[2.0, 0.0, 0.0], &[1.0, 3.0, 0.0]]);
        let qr = ThinQR::from_scratch(&first);
        let next = qr
            .append_column(&first, &DVector::from_vec(vec![0.0, 0.0, -7.0]))
            .unwrap();
        assert_eq!(next.r1()[(0, 2)], 0.0);
        assert_eq!(next.r1()[(1, 2)], 0.0);
        assert_relative_eq!(next.r1()[(2, 2)], 7.0);
    }

    #[test]
    fn append_in_span_is_deficient() {
        let first = cols(3, &[&[1.0, 2.0, 0.0], &[0.0, 1.0, 1.0]]);
        let qr = ThinQR::from_scratch(&first);
        let next = qr
            .append_column(&first, &DVector::from_vec(vec![2.0, 5.0, 1.0]))
            .unwrap();
        assert!(next.r1()[(2, 2)] < 1e-7);
        assert!(matches!(
            next.rank_status(),
            RankStatus::Deficient(2) | RankStatus::IllConditioned(_)
        ));
        let c = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let psi = cols(3, &[&[1.0, 2.0, 0.0], &[0.0, 1.0, 1.0], &[2.0, 5.0, 1.0]]);
        let exact =
            ThinQR::from_triangular(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(exact.rank_status(), RankStatus::Deficient(1));
        assert!(matches!(
            exact.append_column(&psi.columns(0, 2).into_owned(), &c),
            Err(Error::Rank(_))
        ));
    }

    #[test]
    fn stale_factor_detected() {
        let qr = ThinQR::from_triangular(DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(matches!(
            qr.append_from_products(&[2.0], 1.0),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn delete_by_hand() {
        let qr =
            ThinQR::from_triangular(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).unwrap();
        let d = qr.delete_leading_columns(1).unwrap();
        assert_relative_eq!(d.r1()[(0, 0)], 2f64.sqrt(), epsilon = 1e-15);

        let diag =
            ThinQR::from_triangular(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).unwrap();
        assert_eq!(diag.delete_leading_columns(1).unwrap().r1()[(0, 0)], 3.0);

        let t =
            ThinQR::from_triangular(DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 4.0])).unwrap();
        assert_relative_eq!(
            t.delete_leading_columns(1).unwrap().r1()[(0, 0)],
            5.0,
            epsilon = 1e-15
        );

        assert!(matches!(
            t.delete_leading_columns(2),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rank_status_cases() {
        let f = |d: &[f64]| {
            ThinQR::from_triangular(DMatrix::from_diagonal(&DVector::from_row_slice(d))).unwrap()
        };
        assert_eq!(f(&[1.0, 1.0, 1.0]).rank_status(), RankStatus::FullRank);
        assert_eq!(f(&[1.0, 0.0]).rank_status(), RankStatus::Deficient(1));
        assert_eq!(
            f(&[1.0, 1e-12]).rank_status(),
            RankStatus::IllConditioned(1e-12)
        );
        assert_eq!(f(&[0.0, 0.0]).rank_status(), RankStatus::Deficient(0));
        assert_eq!(ThinQR::empty().rank_status(), RankStatus::FullRank);
    }

    #[test]
    fn zero_column_gives_zero_diagonal() {
        let qr = ThinQR::from_scratch(&cols(
            3,
            &[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0]],
        ));
        assert_eq!(qr.r1()[(1, 1)], 0.0);
        assert_eq!(qr.rank_status(), RankStatus::Deficient(1));
    }

    fn gram_err(qr: &ThinQR, psi: &DMatrix<f64>) -> f64 {
        (qr.r1().tr_mul(qr.r1()) - psi.tr_mul(psi)).amax() / psi.norm_squared().max(1.0)
    }

    proptest! {
        #[test]
        fn scratch_gram_identity(n in 6usize..30, l in 1usize..6, v in proptest::collection::vec(-1.0f64..1.0, 180)) {
            let psi = DMatrix::from_fn(n, l, |i, j| v[i * 6 + j]);
            let qr = ThinQR::from_scratch(&psi);
            prop_assert!(gram_err(&qr, &psi) < 1e-14);
            prop_assert!(qr.r1().diagonal().iter().all(|d| *d >= 0.0));
        }

        #[test]
        fn delete_then_append_matches_scratch(
            n in 12usize..30,
            l in 3usize..7,
            count in 1usize..3,
            v in proptest::collection::vec(-1.0f64..1.0, 240),
        ) {
            let psi = DMatrix::from_fn(n, l + count, |i, j| v[i * 8 + j]);
            let qr = ThinQR::from_scratch(&psi.columns(0, l).into_owned());
            let mut cur = qr.delete_leading_columns(count).unwrap();
            let mut kept = psi.columns(count, l - count).into_owned();
            for j in l..l + count {
                let c = psi.column(j).into_owned();
                cur = cur.append_column(&kept, &c).unwrap();
                let width = kept.ncols();
                kept = kept.insert_column(width, 0.0);
                kept.set_column(width, &c);
            }
            let scratch = ThinQR::from_scratch(&kept);
            prop_assert!((cur.r1() - scratch.r1()).amax() < 1e-12 * kept.norm());
            prop_assert!(gram_err(&cur, &kept) < 1e-13);
        }
    }
}
