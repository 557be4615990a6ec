//! Symmetric indefinite factorization `P A Pᵀ = L D Lᵀ` with `1×1` and
//! `2×2` diagonal pivots chosen by complete (Bunch–Parlett) pivoting.
//!
//! Only ever applied to the small middle matrices, so the `O(l³)` pivot
//! search is irrelevant next to the `O(n l)` work elsewhere.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Growth-balancing constant `(1 + √17) / 8`.
const ALPHA: f64 = 0.640_388_203_202_207_6;

/// Pivots below this multiple of `max |a_ij|` count as zero.
pub const DEFAULT_PIVOT_TOL: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy)]
enum Pivot {
    One(f64),
    Two { a11: f64, a21: f64, a22: f64 },
}

#[derive(Debug, Clone)]
pub struct SymIndefinite {
    /// Position `i` of the permuted system holds original index `perm[i]`.
    perm: Vec<usize>,
    /// Unit lower triangular.
    l: DMatrix<f64>,
    blocks: Vec<(usize, Pivot)>,
}

impl SymIndefinite {
    /// Factors the symmetric matrix `a`. A pivot whose magnitude is at most
    /// `rel_tol · max |a_ij|` is reported as [`Error::SingularM`].
    pub fn factor(a: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, not square",
                n,
                a.ncols()
            )));
        }
        let tol = rel_tol * a.amax();
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = DMatrix::<f64>::identity(n, n);
        let mut blocks = Vec::new();

        let swap = |w: &mut DMatrix<f64>, l: &mut DMatrix<f64>, perm: &mut Vec<usize>, k, q| {
            if k == q {
                return;
            }
            w.swap_rows(k, q);
            w.swap_columns(k, q);
            perm.swap(k, q);
            for c in 0..k {
                l.swap((k, c), (q, c));
            }
        };

        let mut k = 0;
        while k < n {
            let (mut q, mut dmax) = (k, 0.0);
            for i in k..n {
                if w[(i, i)].abs() > dmax {
                    (q, dmax) = (i, w[(i, i)].abs());
                }
            }
            let (mut r, mut s, mut omax) = (k, k, 0.0);
            for j in k..n {
                for i in j + 1..n {
                    if w[(i, j)].abs() > omax {
                        (r, s, omax) = (i, j, w[(i, j)].abs());
                    }
                }
            }
            let biggest = f64::max(dmax, omax);
            if biggest <= tol || biggest == 0.0 {
                return Err(Error::SingularM {
                    index: k,
                    pivot: biggest,
                });
            }

            if dmax >= ALPHA * omax {
                swap(&mut w, &mut l, &mut perm, k, q);
                let d = w[(k, k)];
                for i in k + 1..n {
                    l[(i, k)] = w[(i, k)] / d;
                }
                for j in k + 1..n {
                    let wkj = w[(k, j)];
                    for i in k + 1..n {
                        w[(i, j)] -= l[(i, k)] * wkj;
                    }
                }
                blocks.push((k, Pivot::One(d)));
                k += 1;
            } else {
                // r > s ≥ k, so the first swap never moves row r.
                swap(&mut w, &mut l, &mut perm, k, s);
                swap(&mut w, &mut l, &mut perm, k + 1, r);
                let (a11, a21, a22) = (w[(k, k)], w[(k + 1, k)], w[(k + 1, k + 1)]);
                let det = a11 * a22 - a21 * a21;
                for i in k + 2..n {
                    let (x, y) = (w[(i, k)], w[(i, k + 1)]);
                    l[(i, k)] = (x * a22 - y * a21) / det;
                    l[(i, k + 1)] = (y * a11 - x * a21) / det;
                }
                for j in k + 2..n {
                    let (wkj, wk1j) = (w[(k, j)], w[(k + 1, j)]);
                    for i in k + 2..n {
                        w[(i, j)] -= l[(i, k)] * wkj + l[(i, k + 1)] * wk1j;
                    }
                }
                blocks.push((k, Pivot::Two { a11, a21, a22 }));
                k += 2;
            }
        }
        Ok(Self { perm, l, blocks })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut z = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut acc = z[i];
            for j in 0..i {
                acc -= self.l[(i, j)] * z[j];
            }
            z[i] = acc;
        }
        for &(k, piv) in &self.blocks {
            match piv {
                Pivot::One(d) => z[k] /= d,
                Pivot::Two { a11, a21, a22 } => {
                    let det = a11 * a22 - a21 * a21;
                    let (x, y) = (z[k], z[k + 1]);
                    z[k] = (a22 * x - a21 * y) / det;
                    z[k + 1] = (a11 * y - a21 * x) / det;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in i + 1..n {
                acc -= self.l[(j, i)] * z[j];
            }
            z[i] = acc;
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = z[i];
        }
        x
    }

    /// Explicit inverse, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        super::symmetrize(&inv)
    }
}
