//! Compact representations `B = γI + Ψ M Ψᵀ`.
//!
//! BFGS, DFP and the Broyden convex class share `Ψ = [γS, Y]` with
//! `l = 2(k+1)` columns; SR1 uses `Ψ = Y − γS` with `l = k+1`. Every
//! builder works from the cached Gram blocks of the [`PairBuffer`], so no
//! length-`n` arithmetic happens here except in the SR1 safeguard and in
//! the helpers that materialize `Ψ`.
//!
//! For the Broyden class the middle matrix is built by a recursion over the
//! pairs that only needs inner products already held in `SᵀY` and `SᵀS`:
//!
//! ```text
//! p_j      = M_{j−1} (Ψ_{j−1}ᵀ s_j)
//! s_jᵀB_js_j = γ s_jᵀs_j + (Ψ_{j−1}ᵀ s_j)ᵀ p_j
//! α_j = −(1−φ)/s_jᵀB_js_j,  β_j = −φ/s_jᵀy_j,  δ_j = (1 + φ s_jᵀB_js_j / s_jᵀy_j) / s_jᵀy_j
//!
//!            ⎡ M_{j−1} + α ppᵀ   α p   β p ⎤
//! M_j = Πᵀ   ⎢ α pᵀ              α     β   ⎥ Π
//!            ⎣ β pᵀ              β     δ   ⎦
//! ```
//!
//! where `Π` moves the two new columns into place in `[γS_j, Y_j]`. The
//! permutation is applied as an index map.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, DVectorViewMut};

use crate::linalg::{self, SymIndefinite};
use crate::pair_store::PairBuffer;
use crate::{Error, Result};

/// An SR1 update is rejected when `|sᵀ(y − Bs)| < SR1_SKIP_TOL · ‖s‖ · ‖y − Bs‖`.
pub const SR1_SKIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateFamily {
    Bfgs,
    Dfp,
    Sr1,
    /// Convex combination `(1−φ)·BFGS + φ·DFP`, `φ ∈ [0, 1]`.
    Broyden {
        phi: f64,
    },
}

impl UpdateFamily {
    pub fn broyden(phi: f64) -> Result<Self> {
        check_phi(phi)?;
        Ok(UpdateFamily::Broyden { phi })
    }

    pub fn is_sr1(&self) -> bool {
        matches!(self, UpdateFamily::Sr1)
    }

    /// Position in the convex class, `None` for SR1.
    pub fn phi(&self) -> Option<f64> {
        match *self {
            UpdateFamily::Bfgs => Some(0.0),
            UpdateFamily::Dfp => Some(1.0),
            UpdateFamily::Broyden { phi } => Some(phi),
            UpdateFamily::Sr1 => None,
        }
    }

    /// Columns of `Ψ` contributed by each pair.
    pub fn columns_per_pair(&self) -> usize {
        if self.is_sr1() {
            1
        } else {
            2
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateFamily::Bfgs => "bfgs",
            UpdateFamily::Dfp => "dfp",
            UpdateFamily::Sr1 => "sr1",
            UpdateFamily::Broyden { .. } => "broyden",
        }
    }
}

impl fmt::Display for UpdateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateFamily::Broyden { phi } => write!(f, "broyden(phi={phi})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for UpdateFamily {
    type Err = Error;

    /// Accepts `bfgs`, `dfp`, `sr1` and `broyden` (φ = 0.5).
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bfgs" => Ok(UpdateFamily::Bfgs),
            "dfp" => Ok(UpdateFamily::Dfp),
            "sr1" => Ok(UpdateFamily::Sr1),
            "broyden" => Ok(UpdateFamily::Broyden { phi: 0.5 }),
            other => Err(Error::InvalidArgument(format!(
                "unknown update family {other:?}"
            ))),
        }
    }
}

/// How the columns of `Ψ` are formed from the stored pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiLayout {
    /// `[γs_0 … γs_k, y_0 … y_k]`.
    ScaledSThenY,
    /// `[y_0 − γs_0, …, y_k − γs_k]`.
    Sr1Difference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactForm {
    pub family: UpdateFamily,
    pub gamma: f64,
    pub layout: PsiLayout,
    /// Dense symmetric `l × l` middle matrix, columns in the unshuffled order.
    pub m: DMatrix<f64>,
    pairs: usize,
}

/// Quantities produced along the Broyden recursion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BroydenRecursionState {
    pub phi: f64,
    /// `s_iᵀB_is_i` for each stored pair.
    pub sbs: Vec<f64>,
    /// `λ_i = 1 / (α_i + β_i)`.
    pub lambda: Vec<f64>,
}

impl CompactForm {
    fn new(family: UpdateFamily, gamma: f64, m: DMatrix<f64>, pairs: usize) -> Self {
        let layout = if family.is_sr1() {
            PsiLayout::Sr1Difference
        } else {
            PsiLayout::ScaledSThenY
        };
        Self {
            family,
            gamma,
            layout,
            m,
            pairs,
        }
    }

    /// Column count of `Ψ`.
    pub fn l(&self) -> usize {
        self.m.nrows()
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    fn check_buffer(&self, buf: &PairBuffer) -> Result<()> {
        if buf.len() != self.pairs {
            return Err(Error::Dimension(format!(
                "compact form built from {} pairs, buffer holds {}",
                self.pairs,
                buf.len()
            )));
        }
        Ok(())
    }

    /// Column `j` of the unshuffled `Ψ`.
    pub fn psi_column(&self, buf: &PairBuffer, j: usize) -> DVector<f64> {
        let mut col = DVector::zeros(buf.dim());
        self.write_psi_column(buf, j, col.column_mut(0));
        col
    }

    fn write_psi_column(&self, buf: &PairBuffer, j: usize, mut dest: DVectorViewMut<'_, f64>) {
        let k1 = self.pairs;
        match self.layout {
            PsiLayout::ScaledSThenY if j < k1 => dest.axpy(self.gamma, buf.pair(j).s(), 0.0),
            PsiLayout::ScaledSThenY => dest.copy_from(buf.pair(j - k1).y()),
            PsiLayout::Sr1Difference => {
                let p = buf.pair(j);
                dest.copy_from(p.y());
                dest.axpy(-self.gamma, p.s(), 1.0);
            }
        }
    }

    /// `Ψ` with columns in the order `M` uses.
    pub fn psi(&self, buf: &PairBuffer) -> Result<DMatrix<f64>> {
        self.check_buffer(buf)?;
        let mut psi = DMatrix::zeros(buf.dim(), self.l());
        for j in 0..self.l() {
            self.write_psi_column(buf, j, psi.column_mut(j));
        }
        Ok(psi)
    }

    /// Map from shuffled column index to unshuffled column index. The
    /// identity for SR1.
    pub fn column_order(&self) -> Vec<usize> {
        match self.layout {
            PsiLayout::ScaledSThenY if self.pairs > 0 => shuffle_permutation(self.pairs - 1),
            _ => (0..self.l()).collect(),
        }
    }

    /// `Ψ̂ = ΨP`: `[γs_0, y_0, γs_1, y_1, …]` for the Broyden class, `Ψ`
    /// itself for SR1.
    ///
    /// # Panics
    ///
    /// If `buf` does not hold the pairs this form was built from.
    pub fn psi_hat(&self, buf: &PairBuffer) -> DMatrix<f64> {
        assert_eq!(buf.len(), self.pairs, "buffer does not match compact form");
        let order = self.column_order();
        let mut psi = DMatrix::zeros(buf.dim(), self.l());
        for (i, &j) in order.iter().enumerate() {
            self.write_psi_column(buf, j, psi.column_mut(i));
        }
        psi
    }

    /// `PᵀMP`, the middle matrix in shuffled column order.
    pub fn shuffled_m(&self) -> DMatrix<f64> {
        let order = self.column_order();
        let l = self.l();
        DMatrix::from_fn(l, l, |a, b| self.m[(order[a], order[b])])
    }

    /// `B v = γv + Ψ(M(Ψᵀv))` in `O(n l)`.
    pub fn apply(&self, buf: &PairBuffer, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_buffer(buf)?;
        if v.len() != buf.dim() {
            return Err(Error::Dimension(format!(
                "vector length {} vs n = {}",
                v.len(),
                buf.dim()
            )));
        }
        let cols: Vec<DVector<f64>> = (0..self.l()).map(|j| self.psi_column(buf, j)).collect();
        let proj = DVector::from_iterator(self.l(), cols.iter().map(|c| c.dot(v)));
        let coef = &self.m * proj;
        let mut out = v * self.gamma;
        for (c, a) in cols.iter().zip(coef.iter()) {
            out.axpy(*a, c, 1.0);
        }
        Ok(out)
    }

    /// Explicit `n × n` matrix `γI + ΨMΨᵀ`.
    pub fn to_dense(&self, buf: &PairBuffer) -> Result<DMatrix<f64>> {
        let psi = self.psi(buf)?;
        let n = buf.dim();
        let mut b = &psi * &self.m * psi.transpose();
        for i in 0..n {
            b[(i, i)] += self.gamma;
        }
        Ok(linalg::symmetrize(&b))
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!(
            "phi = {phi} is outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_positive_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    Ok(())
}

fn convex_preconditions(buf: &PairBuffer, gamma: f64, family: UpdateFamily) -> Result<()> {
    check_positive_gamma(gamma)?;
    buf.curvature_check(family).into_result()
}

/// Builds the compact form for any family.
pub fn build(buf: &PairBuffer, gamma: f64, family: UpdateFamily) -> Result<CompactForm> {
    match family {
        UpdateFamily::Bfgs => build_bfgs(buf, gamma),
        UpdateFamily::Dfp => build_dfp(buf, gamma),
        UpdateFamily::Sr1 => build_sr1(buf, gamma),
        UpdateFamily::Broyden { phi } => Ok(build_broyden(buf, gamma, phi)?.0),
    }
}

/// BFGS: `M = Γ⁻¹`, `Γ = [[−γSᵀS, −L], [−Lᵀ, D]]`.
pub fn build_bfgs(buf: &PairBuffer, gamma: f64) -> Result<CompactForm> {
    convex_preconditions(buf, gamma, UpdateFamily::Bfgs)?;
    if buf.is_empty() {
        return Ok(CompactForm::new(
            UpdateFamily::Bfgs,
            gamma,
            DMatrix::zeros(0, 0),
            0,
        ));
    }
    let g = buf.gram_blocks()?;
    let k1 = g.dim();
    let mut inner = DMatrix::zeros(2 * k1, 2 * k1);
    inner
        .view_mut((0, 0), (k1, k1))
        .copy_from(&(&g.sts * -gamma));
    inner.view_mut((0, k1), (k1, k1)).copy_from(&-&g.lower);
    inner
        .view_mut((k1, 0), (k1, k1))
        .copy_from(&-g.lower.transpose());
    inner.view_mut((k1, k1), (k1, k1)).copy_from(&g.diag);
    let m = SymIndefinite::factor(&inner, linalg::sym_indef_tol())?.inverse();
    Ok(CompactForm::new(UpdateFamily::Bfgs, gamma, m, k1))
}

/// DFP: `M = [[0, −L̄⁻ᵀ], [−L̄⁻¹, L̄⁻¹(D + γSᵀS)L̄⁻ᵀ]]` with `L̄ = L + D`.
pub fn build_dfp(buf: &PairBuffer, gamma: f64) -> Result<CompactForm> {
    convex_preconditions(buf, gamma, UpdateFamily::Dfp)?;
    if buf.is_empty() {
        return Ok(CompactForm::new(
            UpdateFamily::Dfp,
            gamma,
            DMatrix::zeros(0, 0),
            0,
        ));
    }
    let g = buf.gram_blocks()?;
    let k1 = g.dim();
    let lbar_inv = linalg::lower_inverse(&(&g.lower + &g.diag));
    let inner = &g.diag + &g.sts * gamma;
    let m22 = linalg::symmetrize(&(&lbar_inv * inner * lbar_inv.transpose()));
    let mut m = DMatrix::zeros(2 * k1, 2 * k1);
    m.view_mut((0, k1), (k1, k1))
        .copy_from(&-lbar_inv.transpose());
    m.view_mut((k1, 0), (k1, k1)).copy_from(&-&lbar_inv);
    m.view_mut((k1, k1), (k1, k1)).copy_from(&m22);
    Ok(CompactForm::new(UpdateFamily::Dfp, gamma, m, k1))
}

/// SR1: `Ψ = Y − γS`, `M = (D + L + Lᵀ − γSᵀS)⁻¹`.
pub fn build_sr1(buf: &PairBuffer, gamma: f64) -> Result<CompactForm> {
    if !(gamma != 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma = {gamma} must be nonzero"
        )));
    }
    if buf.is_empty() {
        return Ok(CompactForm::new(
            UpdateFamily::Sr1,
            gamma,
            DMatrix::zeros(0, 0),
            0,
        ));
    }
    sr1_safeguard(buf, gamma)?;
    let m = SymIndefinite::factor(&sr1_inner(buf, gamma), linalg::sym_indef_tol())?.inverse();
    Ok(CompactForm::new(UpdateFamily::Sr1, gamma, m, buf.len()))
}

fn sr1_inner(buf: &PairBuffer, gamma: f64) -> DMatrix<f64> {
    let sy = buf.gram_sy();
    let ss = buf.gram_ss();
    let k1 = buf.len();
    // Entry (i, j) is s_max(i,j)ᵀ y_min(i,j) − γ s_iᵀ s_j.
    DMatrix::from_fn(k1, k1, |i, j| sy[(i.max(j), i.min(j))] - gamma * ss[(i, j)])
}

/// Checks, pair by pair, that the SR1 denominator `s_jᵀ(y_j − B_js_j)` is
/// safely away from zero, where `B_j` is built from the pairs before `j`.
/// Fails with [`Error::SingularM`] at the first offending pair.
pub fn sr1_safeguard(buf: &PairBuffer, gamma: f64) -> Result<()> {
    let inner = sr1_inner(buf, gamma);
    let cols: Vec<DVector<f64>> = buf.pairs().map(|p| p.y() - p.s() * gamma).collect();
    for j in 0..buf.len() {
        // The leading block of the inner matrix is M_{j−1}⁻¹ and the j-th row
        // holds Ψ_{j−1}ᵀ s_j.
        let w = DVector::from_fn(j, |i, _| inner[(j, i)]);
        let p = if j == 0 {
            DVector::zeros(0)
        } else {
            let lead = inner.view((0, 0), (j, j)).into_owned();
            SymIndefinite::factor(&lead, linalg::sym_indef_tol())?.solve(&w)
        };
        let mut resid = cols[j].clone();
        for (i, pi) in p.iter().enumerate() {
            resid.axpy(-pi, &cols[i], 1.0);
        }
        let s = buf.pair(j).s();
        let denom = s.dot(&resid);
        if denom.abs() < SR1_SKIP_TOL * s.norm() * resid.norm() || denom == 0.0 {
            return Err(Error::SingularM {
                index: j,
                pivot: denom.abs(),
            });
        }
    }
    Ok(())
}

/// Broyden convex class member `φ`, by the pair recursion.
pub fn build_broyden(
    buf: &PairBuffer,
    gamma: f64,
    phi: f64,
) -> Result<(CompactForm, BroydenRecursionState)> {
    check_phi(phi)?;
    let family = UpdateFamily::Broyden { phi };
    convex_preconditions(buf, gamma, family)?;
    let k1 = buf.len();
    let mut state = BroydenRecursionState {
        phi,
        sbs: Vec::with_capacity(k1),
        lambda: Vec::with_capacity(k1),
    };
    let sy_gram = buf.gram_sy();
    let ss_gram = buf.gram_ss();
    let mut m = DMatrix::<f64>::zeros(0, 0);

    for j in 0..k1 {
        // w = Ψ_{j−1}ᵀ s_j = [γ S_{j−1}ᵀ s_j ; Y_{j−1}ᵀ s_j]
        let w = DVector::from_fn(2 * j, |a, _| {
            if a < j {
                gamma * ss_gram[(a, j)]
            } else {
                sy_gram[(j, a - j)]
            }
        });
        let p = &m * &w;
        let sbs = gamma * ss_gram[(j, j)] + w.dot(&p);
        if sbs.is_nan() || sbs <= 0.0 {
            return Err(Error::Positivity {
                index: j,
                value: sbs,
            });
        }
        let sy = sy_gram[(j, j)];
        let alpha = -(1.0 - phi) / sbs;
        let beta = -phi / sy;
        let delta = (1.0 + phi * sbs / sy) / sy;

        // Position of each row of the bordered matrix in [γS_j, Y_j].
        let dest = |a: usize| -> usize {
            match a {
                a if a < j => a,
                a if a < 2 * j => a + 1,
                a if a == 2 * j => j,
                _ => 2 * j + 1,
            }
        };
        let size = 2 * j + 2;
        let mut next = DMatrix::zeros(size, size);
        for a in 0..size {
            for b in 0..size {
                let v = match (a < 2 * j, b < 2 * j) {
                    (true, true) => m[(a, b)] + alpha * p[a] * p[b],
                    (true, false) => p[a] * if b == 2 * j { alpha } else { beta },
                    (false, true) => p[b] * if a == 2 * j { alpha } else { beta },
                    (false, false) => match (a == 2 * j, b == 2 * j) {
                        (true, true) => alpha,
                        (false, false) => delta,
                        _ => beta,
                    },
                };
                next[(dest(a), dest(b))] = v;
            }
        }
        m = next;
        state.sbs.push(sbs);
        state.lambda.push(1.0 / (alpha + beta));
    }

    let form = CompactForm::new(family, gamma, linalg::symmetrize(&m), k1);
    Ok((form, state))
}

/// `M⁻¹ = [[−γSᵀS + φΛ, −L + φΛ], [−Lᵀ + φΛ, D + φΛ]]`, assembled directly
/// from the Gram blocks. `lambda` comes from [`build_broyden`].
pub fn broyden_m_inverse(
    buf: &PairBuffer,
    gamma: f64,
    phi: f64,
    lambda: &[f64],
) -> Result<DMatrix<f64>> {
    let g = buf.gram_blocks()?;
    let k1 = g.dim();
    if lambda.len() != k1 {
        return Err(Error::Dimension(format!(
            "{} lambdas for {} pairs",
            lambda.len(),
            k1
        )));
    }
    let phi_lambda =
        DMatrix::from_diagonal(&DVector::from_iterator(k1, lambda.iter().map(|v| phi * v)));
    let mut inv = DMatrix::zeros(2 * k1, 2 * k1);
    inv.view_mut((0, 0), (k1, k1))
        .copy_from(&(&g.sts * -gamma + &phi_lambda));
    inv.view_mut((0, k1), (k1, k1))
        .copy_from(&(-&g.lower + &phi_lambda));
    inv.view_mut((k1, 0), (k1, k1))
        .copy_from(&(-g.lower.transpose() + &phi_lambda));
    inv.view_mut((k1, k1), (k1, k1))
        .copy_from(&(&g.diag + &phi_lambda));
    Ok(inv)
}

/// Perfect shuffle for `k+1` pairs: entry `i` is the column of
/// `[B₀S, Y]` that becomes column `i` of `[B₀s_0, y_0, B₀s_1, y_1, …]`.
pub fn shuffle_permutation(k: usize) -> Vec<usize> {
    let k1 = k + 1;
    (0..2 * k1)
        .map(|i| if i % 2 == 0 { i / 2 } else { k1 + (i - 1) / 2 })
        .collect()
}
