//! Limited-memory quasi-Newton matrices in compact form and their spectra.
//!
//! A limited-memory quasi-Newton matrix built from the pairs
//! `(s_i, y_i)` is stored as
//!
//! ```text
//! B = γI + Ψ M Ψᵀ,      Ψ ∈ ℝ^{n×l},  M ∈ ℝ^{l×l},  l ≪ n
//! ```
//!
//! for BFGS, DFP, SR1 and every member of the Broyden convex class
//! `φ ∈ [0, 1]`. The full spectrum of `B` follows from a thin QR factor of
//! (a column permutation of) `Ψ`: `B` has the eigenvalue `γ` with
//! multiplicity `n − l`, and `l` eigenvalues `γ + d_i` where `d_i` are the
//! eigenvalues of the small matrix `R₁ PᵀMP R₁ᵀ`. The triangular factor is
//! maintained under pair insertion and FIFO eviction without ever storing
//! `Q`, so the whole spectrum costs `O(n l²)`.
//!
//! ```
//! use lmqn::{compact, qr_engine::ThinQR, spectrum, Pair, PairBuffer, UpdateFamily};
//!
//! let mut history = PairBuffer::new(2, 5);
//! history.push_pair(Pair::new(vec![1.0, 0.0], vec![2.0, 0.0])?)?;
//!
//! let form = compact::build(&history, 1.0, UpdateFamily::Bfgs)?;
//! let qr = ThinQR::from_scratch(&form.psi_hat(&history));
//! let spec = spectrum::eigenvalues(&form, &qr, history.dim())?;
//! assert_eq!(spec.sorted(), vec![1.0, 2.0]);
//! # Ok::<(), lmqn::Error>(())
//! ```

pub mod compact;
mod error;
pub mod experiment;
pub mod linalg;
pub mod oracle;
pub mod pair_store;
pub mod qr_engine;
pub mod spectrum;

pub use compact::{CompactForm, UpdateFamily};
pub use error::{Error, Result};
pub use pair_store::{GramBlocks, Pair, PairBuffer};
pub use qr_engine::{RankStatus, ThinQR};
pub use spectrum::Spectrum;
