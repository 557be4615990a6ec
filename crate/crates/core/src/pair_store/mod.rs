//! Limited-memory history of quasi-Newton pairs.
//!
//! The buffer keeps at most `m` pairs `(s_i, y_i)`, oldest first, and keeps
//! the Gram matrices `SᵀY` and `SᵀS` current as pairs come and go. Each push
//! touches one new row and column of each Gram matrix, so it costs `O(n l)`
//! rather than the `O(n l²)` of a recomputation.

mod text;

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::compact::UpdateFamily;
use crate::{Error, Result};

pub use text::{load_pairs, read_matrix, write_matrix};

/// Default number of stored pairs.
pub const DEFAULT_MEMORY: usize = 5;

/// One quasi-Newton pair: `s = x_{i+1} − x_i`, `y = ∇f(x_{i+1}) − ∇f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    s: DVector<f64>,
    y: DVector<f64>,
}

impl Pair {
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::from_vectors(DVector::from_vec(s), DVector::from_vec(y))
    }

    pub fn from_vectors(s: DVector<f64>, y: DVector<f64>) -> Result<Self> {
        if s.len() != y.len() {
            return Err(Error::Dimension(format!(
                "s has length {} but y has length {}",
                s.len(),
                y.len()
            )));
        }
        if s.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "pair contains a non-finite entry".into(),
            ));
        }
        Ok(Self { s, y })
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn sy(&self) -> f64 {
        self.s.dot(&self.y)
    }
}

/// `SᵀY = L + D + R`, split by index, together with `SᵀS`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlocks {
    /// Strictly lower triangular part of `SᵀY`.
    pub lower: DMatrix<f64>,
    /// Diagonal part of `SᵀY`, as a full matrix.
    pub diag: DMatrix<f64>,
    /// Strictly upper triangular part of `SᵀY`.
    pub upper: DMatrix<f64>,
    pub sts: DMatrix<f64>,
}

impl GramBlocks {
    pub fn dim(&self) -> usize {
        self.sts.nrows()
    }

    /// The diagonal entries `s_iᵀy_i`.
    pub fn diag_vec(&self) -> DVector<f64> {
        self.diag.diagonal()
    }
}

/// Result of [`PairBuffer::curvature_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureStatus {
    Ok,
    /// Pair `index` has `s_iᵀy_i = sy ≤ 0`.
    Violation {
        index: usize,
        sy: f64,
    },
}

impl CurvatureStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CurvatureStatus::Ok)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            CurvatureStatus::Ok => Ok(()),
            CurvatureStatus::Violation { index, sy } => Err(Error::Curvature { index, sy }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBuffer {
    pairs: VecDeque<Pair>,
    n: usize,
    capacity: usize,
    gram_sy: DMatrix<f64>,
    gram_ss: DMatrix<f64>,
}

impl PairBuffer {
    /// Empty history for vectors of length `n` holding at most `capacity`
    /// pairs.
    ///
    /// # Panics
    ///
    /// If `capacity` is zero.
    pub fn new(n: usize, capacity: usize) -> Self {
        assert!(capacity >= 1, "pair buffer capacity must be at least one");
        Self {
            pairs: VecDeque::with_capacity(capacity),
            n,
            capacity,
            gram_sy: DMatrix::zeros(0, 0),
            gram_ss: DMatrix::zeros(0, 0),
        }
    }

    /// Builds a buffer by pushing the columns of `s` and `y` in order.
    pub fn from_matrices(s: &DMatrix<f64>, y: &DMatrix<f64>, capacity: usize) -> Result<Self> {
        if s.shape() != y.shape() {
            return Err(Error::Dimension(format!(
                "S is {:?} but Y is {:?}",
                s.shape(),
                y.shape()
            )));
        }
        let mut buf = Self::new(s.nrows(), capacity);
        for j in 0..s.ncols() {
            buf.push_pair(Pair::from_vectors(s.column(j).into(), y.column(j).into())?)?;
        }
        Ok(buf)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.pairs.len() == self.capacity
    }

    pub fn pair(&self, i: usize) -> &Pair {
        &self.pairs[i]
    }

    pub fn pairs(&self) -> impl ExactSizeIterator<Item = &Pair> + '_ {
        self.pairs.iter()
    }

    pub fn newest(&self) -> Option<&Pair> {
        self.pairs.back()
    }

    /// `SᵀY`, entry `(i, j)` is `s_iᵀy_j`.
    pub fn gram_sy(&self) -> &DMatrix<f64> {
        &self.gram_sy
    }

    pub fn gram_ss(&self) -> &DMatrix<f64> {
        &self.gram_ss
    }

    /// `S` as an `n × l_p` matrix.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.len(), |r, c| self.pairs[c].s[r])
    }

    /// `Y` as an `n × l_p` matrix.
    pub fn y_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.len(), |r, c| self.pairs[c].y[r])
    }

    /// Appends `pair`, first evicting the oldest pair when the buffer is full.
    /// Returns the evicted pair, if any.
    pub fn push_pair(&mut self, pair: Pair) -> Result<Option<Pair>> {
        if pair.dim() != self.n {
            return Err(Error::Dimension(format!(
                "pair has length {} but the buffer holds vectors of length {}",
                pair.dim(),
                self.n
            )));
        }

        let evicted = if self.is_full() {
            self.pop_oldest()
        } else {
            None
        };

        let l = self.pairs.len();
        let s_new_y: Vec<f64> = self.pairs.iter().map(|p| pair.s.dot(&p.y)).collect();
        let s_y_new: Vec<f64> = self.pairs.iter().map(|p| p.s.dot(&pair.y)).collect();
        let s_s_new: Vec<f64> = self.pairs.iter().map(|p| p.s.dot(&pair.s)).collect();
        let sy = pair.s.dot(&pair.y);
        let ss = pair.s.dot(&pair.s);

        let old_sy = &self.gram_sy;
        self.gram_sy = DMatrix::from_fn(l + 1, l + 1, |i, j| match (i == l, j == l) {
            (false, false) => old_sy[(i, j)],
            (false, true) => s_y_new[i],
            (true, false) => s_new_y[j],
            (true, true) => sy,
        });
        let old_ss = &self.gram_ss;
        self.gram_ss = DMatrix::from_fn(l + 1, l + 1, |i, j| match (i == l, j == l) {
            (false, false) => old_ss[(i, j)],
            (false, true) => s_s_new[i],
            (true, false) => s_s_new[j],
            (true, true) => ss,
        });

        self.pairs.push_back(pair);
        Ok(evicted)
    }

    /// Removes the oldest pair and its Gram row and column.
    pub fn pop_oldest(&mut self) -> Option<Pair> {
        let old = self.pairs.pop_front()?;
        self.gram_sy = std::mem::take(&mut self.gram_sy)
            .remove_row(0)
            .remove_column(0);
        self.gram_ss = std::mem::take(&mut self.gram_ss)
            .remove_row(0)
            .remove_column(0);
        Some(old)
    }

    /// Index split of `SᵀY` into `L + D + R`, with `SᵀS`.
    pub fn gram_blocks(&self) -> Result<GramBlocks> {
        if self.is_empty() {
            return Err(Error::EmptyHistory);
        }
        let l = self.len();
        let g = &self.gram_sy;
        Ok(GramBlocks {
            lower: DMatrix::from_fn(l, l, |i, j| if i > j { g[(i, j)] } else { 0.0 }),
            diag: DMatrix::from_fn(l, l, |i, j| if i == j { g[(i, j)] } else { 0.0 }),
            upper: DMatrix::from_fn(l, l, |i, j| if i < j { g[(i, j)] } else { 0.0 }),
            sts: self.gram_ss.clone(),
        })
    }

    /// Checks `s_iᵀy_i > 0` for every stored pair. SR1 has no such
    /// requirement and always passes here.
    pub fn curvature_check(&self, family: UpdateFamily) -> CurvatureStatus {
        if family.is_sr1() {
            return CurvatureStatus::Ok;
        }
        for i in 0..self.len() {
            let sy = self.gram_sy[(i, i)];
            if sy.is_nan() || sy <= 0.0 {
                return CurvatureStatus::Violation { index: i, sy };
            }
        }
        CurvatureStatus::Ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(s: &[f64], y: &[f64]) -> Pair {
        Pair::new(s.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn single_pair_gram() {
        let mut buf = PairBuffer::new(2, 5);
        buf.push_pair(pair(&[1.0, 0.0], &[2.0, 0.0])).unwrap();
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.gram_sy(), &DMatrix::from_element(1, 1, 2.0));
        assert_eq!(buf.gram_ss(), &DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn eviction_is_fifo() {
        let mut buf = PairBuffer::new(1, 5);
        for i in 0..5 {
            buf.push_pair(pair(&[i as f64 + 1.0], &[1.0])).unwrap();
        }
        let second = buf.pair(1).clone();
        let evicted = buf.push_pair(pair(&[9.0], &[1.0])).unwrap();
        assert_eq!(buf.len(), 5);
        assert_eq!(buf.pair(0), &second);
        assert_eq!(evicted.unwrap().s()[0], 1.0);
        assert_eq!(buf.gram_ss()[(4, 4)], 81.0);
        assert_eq!(buf.gram_ss()[(0, 4)], 18.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut buf = PairBuffer::new(3, 2);
        let err = buf.push_pair(pair(&[1.0, 0.0], &[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        assert!(Pair::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(Pair::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn gram_blocks_single_pair() {
        let mut buf = PairBuffer::new(2, 5);
        buf.push_pair(pair(&[1.0, 0.0], &[2.0, 0.0])).unwrap();
        let g = buf.gram_blocks().unwrap();
        assert_eq!(g.lower, DMatrix::zeros(1, 1));
        assert_eq!(g.upper, DMatrix::zeros(1, 1));
        assert_eq!(g.diag, DMatrix::from_element(1, 1, 2.0));
    }

    #[test]
    fn gram_blocks_index_split() {
        // S = [e1 e2], Y = [(2,3) (5,7)] gives SᵀY = [[2,5],[3,7]].
        let s = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let y = DMatrix::from_column_slice(2, 2, &[2.0, 3.0, 5.0, 7.0]);
        let buf = PairBuffer::from_matrices(&s, &y, 5).unwrap();
        let g = buf.gram_blocks().unwrap();
        assert_eq!(
            g.lower,
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 0.0])
        );
        assert_eq!(g.diag, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 7.0]));
        assert_eq!(
            g.upper,
            DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 0.0, 0.0])
        );
    }

    #[test]
    fn gram_blocks_three_dimensional() {
        let mut buf = PairBuffer::new(3, 5);
        buf.push_pair(pair(&[1.0, 0.0, 0.0], &[1.0, 1.0, 0.0]))
            .unwrap();
        buf.push_pair(pair(&[0.0, 1.0, 0.0], &[0.0, 2.0, 0.0]))
            .unwrap();
        let g = buf.gram_blocks().unwrap();
        assert_eq!(
            buf.gram_sy(),
            &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 2.0])
        );
        assert_eq!(
            g.lower,
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])
        );
        assert_eq!(g.diag_vec().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn empty_history_has_no_blocks() {
        assert_eq!(
            PairBuffer::new(4, 3).gram_blocks(),
            Err(Error::EmptyHistory)
        );
    }

    #[test]
    fn curvature_by_family() {
        let mut buf = PairBuffer::new(2, 3);
        buf.push_pair(pair(&[1.0, 0.0], &[1.0, 0.0])).unwrap();
        assert!(buf.curvature_check(UpdateFamily::Bfgs).is_ok());
        buf.push_pair(pair(&[1.0, 0.0], &[-1.0, 0.0])).unwrap();
        assert_eq!(
            buf.curvature_check(UpdateFamily::Dfp),
            CurvatureStatus::Violation { index: 1, sy: -1.0 }
        );
        assert!(buf.curvature_check(UpdateFamily::Sr1).is_ok());
        assert!(matches!(
            buf.curvature_check(UpdateFamily::broyden(0.5).unwrap())
                .into_result(),
            Err(Error::Curvature { index: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn incremental_gram_matches_recomputation(
            n in 1usize..12,
            cap in 1usize..6,
            seeds in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 24), 1..15),
        ) {
            let mut buf = PairBuffer::new(n, cap);
            for v in &seeds {
                buf.push_pair(pair(&v[..n], &v[12..12 + n])).unwrap();
                prop_assert!(buf.len() <= cap);
            }
            let s = buf.s_matrix();
            let y = buf.y_matrix();
            let sty = s.transpose() * &y;
            let sts = s.transpose() * &s;
            let smax = s.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
            let ymax = y.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
            let tol = 10.0 * f64::EPSILON * n as f64 * smax * smax.max(ymax);
            prop_assert!((buf.gram_sy() - &sty).amax() <= tol);
            prop_assert!((buf.gram_ss() - &sts).amax() <= tol);
            prop_assert_eq!(buf.gram_ss(), &buf.gram_ss().transpose());

            let g = buf.gram_blocks().unwrap();
            prop_assert_eq!(&(&g.lower + &g.diag + &g.upper), buf.gram_sy());
        }
    }
}
