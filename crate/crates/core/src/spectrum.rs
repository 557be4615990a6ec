//! Full spectrum of `B = γI + ΨMΨᵀ` from the triangular factor of `Ψ̂`.
//!
//! With `Ψ̂ = Q[R₁; 0]`, `B = Q V (γI + D) Vᵀ Qᵀ` where `V₁D₁V₁ᵀ` is the
//! eigendecomposition of the `l × l` matrix `R₁ PᵀMP R₁ᵀ`. So `B` has
//! eigenvalue `γ` with multiplicity `n − l` and the `l` eigenvalues
//! `γ + d_i`. Neither `Q` nor `V` is needed for the values.

use nalgebra::DMatrix;

use crate::compact::CompactForm;
use crate::linalg::symmetrize;
use crate::qr_engine::ThinQR;
use crate::{Error, Result};

/// Sweep cap for the Jacobi eigensolver.
pub const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub gamma: f64,
    pub base_multiplicity: usize,
    /// `γ + d_i`, ascending.
    pub shifted: Vec<f64>,
    pub n: usize,
}

impl Spectrum {
    /// All `n` eigenvalues, ascending.
    pub fn sorted(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.n);
        all.extend_from_slice(&self.shifted);
        all.extend(std::iter::repeat_n(self.gamma, self.base_multiplicity));
        all.sort_by(f64::total_cmp);
        all
    }

    /// `max |λ| / min |λ|` over all `n` eigenvalues.
    pub fn condition_number(&self) -> Result<f64> {
        let abs = self.shifted.iter().map(|v| v.abs());
        let abs: Vec<f64> = if self.base_multiplicity > 0 {
            abs.chain(std::iter::once(self.gamma.abs())).collect()
        } else {
            abs.collect()
        };
        let max = abs.iter().copied().fold(0.0, f64::max);
        let min = abs.iter().copied().fold(f64::INFINITY, f64::min);
        if min.is_nan() || min <= f64::EPSILON * max {
            return Err(Error::SingularMatrix { min_abs: min });
        }
        Ok(max / min)
    }

    /// `|λ_i|`, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.sorted().into_iter().map(f64::abs).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

/// Eigenpairs of a small symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `i` belongs to `values[i]`; present only when requested.
    pub vectors: Option<DMatrix<f64>>,
}

/// `R₁ PᵀMP R₁ᵀ`.
pub fn small_problem(compact: &CompactForm, qr: &ThinQR) -> Result<DMatrix<f64>> {
    if qr.l() != compact.l() {
        return Err(Error::Dimension(format!(
            "factor has {} columns but M is {}x{}",
            qr.l(),
            compact.l(),
            compact.l()
        )));
    }
    let r1 = qr.r1();
    Ok(symmetrize(&(r1 * compact.shuffled_m() * r1.transpose())))
}

/// Spectrum of `γI + ΨMΨᵀ` in ambient dimension `n`.
///
/// `qr` must factor `compact.psi_hat(..)`. A rank-deficient factor is fine:
/// its zero rows only contribute shifts `d_i = 0`.
pub fn eigenvalues(compact: &CompactForm, qr: &ThinQR, n: usize) -> Result<Spectrum> {
    Ok(eigen_decompose(compact, qr, n, false)?.0)
}

/// As [`eigenvalues`], also returning the small eigenproblem, with `V₁`
/// when `keep_vectors` is set.
pub fn eigen_decompose(
    compact: &CompactForm,
    qr: &ThinQR,
    n: usize,
    keep_vectors: bool,
) -> Result<(Spectrum, SmallEig)> {
    let l = compact.l();
    if l > n {
        return Err(Error::Dimension(format!("l = {l} exceeds n = {n}")));
    }
    let a = small_problem(compact, qr)?;
    let small = symmetric_eig_small(&a, keep_vectors)?;
    let gamma = compact.gamma;
    let mut shifted: Vec<f64> = small.values.iter().map(|d| gamma + d).collect();
    shifted.sort_by(f64::total_cmp);
    let spectrum = Spectrum {
        gamma,
        base_multiplicity: n - l,
        shifted,
        n,
    };
    Ok((spectrum, small))
}

/// Cyclic Jacobi eigensolver for small symmetric matrices. The input is
/// symmetrized first. Values come back ascending.
pub fn symmetric_eig_small(a: &DMatrix<f64>, keep_vectors: bool) -> Result<SmallEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "matrix is {:?}, not square",
            a.shape()
        )));
    }
    let mut a = symmetrize(a);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let eps = f64::EPSILON;
    let floor = eps * scale / (n * n).max(1) as f64;

    let mut converged = n <= 1 || scale == 0.0;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence { sweeps });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                if apq.abs() <= floor || apq.abs() <= eps * (app * aqq).abs().sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + theta.hypot(1.0))
                };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;

                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let (arp, arq) = (a[(r, p)], a[(r, q)]);
                    let new_p = c * arp - s * arq;
                    let new_q = s * arp + c * arq;
                    a[(r, p)] = new_p;
                    a[(p, r)] = new_p;
                    a[(r, q)] = new_q;
                    a[(q, r)] = new_q;
                }
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                if keep_vectors {
                    for r in 0..n {
                        let (vrp, vrq) = (v[(r, p)], v[(r, q)]);
                        v[(r, p)] = c * vrp - s * vrq;
                        v[(r, q)] = s * vrp + c * vrq;
                    }
                }
            }
        }
        converged = !rotated;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = keep_vectors.then(|| DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]));
    Ok(SmallEig { values, vectors })
}
