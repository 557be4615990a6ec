//! Dense reference path, for verification only.
//!
//! `dense_build` forms `B` explicitly by applying the rank-two (or
//! rank-one) update formulas pair by pair starting from `γI`, and
//! `dense_eigenvalues` runs a general dense symmetric eigensolver on it.
//! Neither shares code with the compact or QR paths.

use nalgebra::{DMatrix, DVector};
use twofloat::TwoFloat;

use crate::compact::{UpdateFamily, SR1_SKIP_TOL};
use crate::linalg::symmetrize;
use crate::pair_store::PairBuffer;
use crate::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Largest dimension the dense path accepts.
pub const MAX_DENSE_DIM: usize = 5000;

/// `B` in double-double precision, upper triangle row-major. The lower
/// triangle is implied, so every step is exactly symmetric.
struct Accumulator {
    n: usize,
    upper: Vec<TwoFloat>,
}

impl Accumulator {
    fn scaled_identity(n: usize, gamma: f64) -> Self {
        let mut acc = Self {
            n,
            upper: vec![TwoFloat::from(0.0); n * (n + 1) / 2],
        };
        for i in 0..n {
            *acc.at(i, i) = TwoFloat::from(gamma);
        }
        acc
    }

    fn from_dense(b: &DenseMatrix) -> Self {
        let n = b.nrows();
        let mut acc = Self::scaled_identity(n, 0.0);
        for i in 0..n {
            for j in i..n {
                *acc.at(i, j) = TwoFloat::from(0.5 * b[(i, j)] + 0.5 * b[(j, i)]);
            }
        }
        acc
    }

    /// Start of row `i`, which holds columns `i..n`.
    fn offset(&self, i: usize) -> usize {
        i * self.n - i * (i.saturating_sub(1)) / 2
    }

    fn at(&mut self, i: usize, j: usize) -> &mut TwoFloat {
        let k = self.offset(i) + j - i;
        &mut self.upper[k]
    }

    fn times(&self, v: &[TwoFloat]) -> Vec<TwoFloat> {
        let n = self.n;
        let mut out = vec![TwoFloat::from(0.0); n];
        for i in 0..n {
            let row = &self.upper[self.offset(i)..self.offset(i) + n - i];
            out[i] += row[0] * v[i];
            for (d, &b) in row.iter().enumerate().skip(1) {
                out[i] += b * v[i + d];
                out[i + d] += b * v[i];
            }
        }
        out
    }

    /// `B += Σ_t c_t (u_t v_tᵀ + v_t u_tᵀ) / 2` over the given terms.
    fn add_symmetric(&mut self, terms: &[(TwoFloat, &[TwoFloat], &[TwoFloat])]) {
        let n = self.n;
        for i in 0..n {
            let base = self.offset(i);
            for j in i..n {
                let mut delta = TwoFloat::from(0.0);
                for &(c, u, v) in terms {
                    delta += c * (u[i] * v[j] + v[i] * u[j]) * 0.5;
                }
                self.upper[base + j - i] += delta;
            }
        }
    }

    fn to_dense(&self) -> DenseMatrix {
        let n = self.n;
        let mut b = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f64::from(self.upper[self.offset(i) + j - i]);
                b[(i, j)] = v;
                b[(j, i)] = v;
            }
        }
        b
    }

    /// One update of the given family. `Err` carries the SR1 denominator
    /// when the safeguard rejects the pair.
    fn update(
        &mut self,
        s: &DVector<f64>,
        y: &DVector<f64>,
        family: UpdateFamily,
    ) -> Result<(), f64> {
        let s: Vec<TwoFloat> = s.iter().map(|&v| TwoFloat::from(v)).collect();
        let y: Vec<TwoFloat> = y.iter().map(|&v| TwoFloat::from(v)).collect();
        let bs = self.times(&s);
        let dot = |a: &[TwoFloat], b: &[TwoFloat]| {
            a.iter()
                .zip(b)
                .fold(TwoFloat::from(0.0), |acc, (&x, &z)| acc + x * z)
        };
        let one = TwoFloat::from(1.0);
        let sy = dot(&s, &y);
        let sbs = dot(&s, &bs);
        match family {
            UpdateFamily::Bfgs => self.add_symmetric(&[(-one / sbs, &bs, &bs), (one / sy, &y, &y)]),
            UpdateFamily::Dfp => {
                // (I − ysᵀ/ρ) B (I − syᵀ/ρ) + yyᵀ/ρ, expanded.
                let rho = sy;
                let c = (one + sbs / rho) / rho;
                self.add_symmetric(&[(-TwoFloat::from(2.0) / rho, &y, &bs), (c, &y, &y)]);
            }
            UpdateFamily::Broyden { phi } => {
                let w: Vec<TwoFloat> = y
                    .iter()
                    .zip(&bs)
                    .map(|(&yi, &bi)| yi / sy - bi / sbs)
                    .collect();
                let phi_sbs = sbs * phi;
                self.add_symmetric(&[
                    (-one / sbs, &bs, &bs),
                    (one / sy, &y, &y),
                    (phi_sbs, &w, &w),
                ]);
            }
            UpdateFamily::Sr1 => {
                let r: Vec<TwoFloat> = y.iter().zip(&bs).map(|(&yi, &bi)| yi - bi).collect();
                let denom = f64::from(dot(&s, &r));
                let s_norm = f64::from(dot(&s, &s)).sqrt();
                let r_norm = f64::from(dot(&r, &r)).sqrt();
                if denom == 0.0 || denom.abs() < SR1_SKIP_TOL * s_norm * r_norm {
                    return Err(denom.abs());
                }
                self.add_symmetric(&[(one / denom, &r, &r)]);
            }
        }
        Ok(())
    }
}

/// One update of `b` by the pair `(s, y)`, carried out in double-double
/// precision and rounded once. `Err` carries the SR1 denominator when the
/// safeguard rejects the pair.
pub fn dense_update(
    b: &DenseMatrix,
    s: &DVector<f64>,
    y: &DVector<f64>,
    family: UpdateFamily,
) -> Result<DenseMatrix, f64> {
    let mut acc = Accumulator::from_dense(b);
    acc.update(s, y, family)?;
    Ok(acc.to_dense())
}

/// Explicit `B` after applying every stored pair, oldest first, to `γI`.
///
/// The recursion is accumulated in double-double precision and rounded once
/// at the end, so the reference stays accurate to roughly `ε‖B‖` even when
/// individual updates cancel heavily.
pub fn dense_build(buf: &PairBuffer, gamma: f64, family: UpdateFamily) -> Result<DenseMatrix> {
    let n = buf.dim();
    if n > MAX_DENSE_DIM {
        return Err(Error::InvalidArgument(format!(
            "dense reference limited to n <= {MAX_DENSE_DIM}, got {n}"
        )));
    }
    buf.curvature_check(family).into_result()?;
    let mut acc = Accumulator::scaled_identity(n, gamma);
    for (index, pair) in buf.pairs().enumerate() {
        acc.update(pair.s(), pair.y(), family)
            .map_err(|denominator| Error::SkippedUpdate { index, denominator })?;
    }
    Ok(acc.to_dense())
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn dense_eigenvalues(b: &DenseMatrix) -> Result<Vec<f64>> {
    if !b.is_square() {
        return Err(Error::Dimension(format!(
            "matrix is {:?}, not square",
            b.shape()
        )));
    }
    // Tridiagonalization followed by implicit-shift QR.
    let mut values: Vec<f64> = b.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Convergence { sweeps: 0 });
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `‖computed − reference‖∞ / ‖reference‖∞` between two ascending spectra.
pub fn relative_error(computed: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(computed.len(), reference.len(), "spectra differ in length");
    let diff = computed
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Characteristic polynomial of the single BFGS update of `(1/θ)I`,
/// `θ = sᵀs / sᵀy`:
///
/// `p(λ) = (λ² − (λ/θ)(1 + θ yᵀy/sᵀy) + 1/θ²) (λ − 1/θ)^{n−2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharPoly1 {
    pub theta: f64,
    /// Coefficients of `λ²`, `λ`, `1` in the quadratic factor.
    pub quad_coeffs: [f64; 3],
    /// Root `1/θ` of the linear factor.
    pub base_root: f64,
}

impl CharPoly1 {
    pub fn new(s: &DVector<f64>, y: &DVector<f64>) -> Result<Self> {
        if s.len() != y.len() {
            return Err(Error::Dimension(format!(
                "s has length {}, y has {}",
                s.len(),
                y.len()
            )));
        }
        let sy = s.dot(y);
        if sy.is_nan() || sy <= 0.0 {
            return Err(Error::Curvature { index: 0, sy });
        }
        let theta = s.norm_squared() / sy;
        let yy = y.norm_squared();
        let quad_coeffs = [
            1.0,
            -(1.0 / theta) * (1.0 + theta * yy / sy),
            1.0 / (theta * theta),
        ];
        Ok(Self {
            theta,
            quad_coeffs,
            base_root: 1.0 / theta,
        })
    }

    /// Roots of the quadratic factor, ascending.
    pub fn quadratic_roots(&self) -> [f64; 2] {
        let [_, b, c] = self.quad_coeffs;
        // Real for sᵀy > 0; clamp roundoff below zero.
        let disc = (b * b - 4.0 * c).max(0.0);
        let q = -0.5 * (b - disc.sqrt()); // b < 0, so no cancellation
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q, c / q) };
        [r1.min(r2), r1.max(r2)]
    }
}

/// Spectrum of the one-update BFGS matrix of dimension `n` from its
/// characteristic polynomial, ascending.
pub fn single_update_spectrum(s: &DVector<f64>, y: &DVector<f64>, n: usize) -> Result<Vec<f64>> {
    if n < 2 || s.len() != n {
        return Err(Error::Dimension(format!(
            "need n >= 2 and |s| = n, got n = {n}, |s| = {}",
            s.len()
        )));
    }
    let poly = CharPoly1::new(s, y)?;
    let mut out = Vec::with_capacity(n);
    out.extend(poly.quadratic_roots());
    out.extend(std::iter::repeat_n(poly.base_root, n - 2));
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// `(1/θ)I − (1/θ) ssᵀ/sᵀs + yyᵀ/sᵀy`, formed explicitly.
pub fn one_update_matrix(s: &DVector<f64>, y: &DVector<f64>) -> DenseMatrix {
    let n = s.len();
    let sy = s.dot(y);
    let ss = s.norm_squared();
    let inv_theta = sy / ss;
    let mut b = DenseMatrix::identity(n, n) * inv_theta;
    b.ger(-inv_theta / ss, s, s, 1.0);
    b.ger(1.0 / sy, y, y, 1.0);
    symmetrize(&b)
}
