use thiserror::Error;

use crate::qr_engine::RankStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("the pair history is empty")]
    EmptyHistory,

    #[error("curvature condition violated at pair {index}: s'y = {sy:e}")]
    Curvature { index: usize, sy: f64 },

    #[error("middle matrix is singular or nearly so at pivot {index} (magnitude {pivot:e})")]
    SingularM { index: usize, pivot: f64 },

    #[error("s'Bs = {value:e} is not positive at pair {index}")]
    Positivity { index: usize, value: f64 },

    #[error("triangular factor is not of full rank ({0:?}); rebuild it from scratch")]
    Rank(RankStatus),

    #[error("numerical breakdown: {0}")]
    Numerical(String),

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    Convergence { sweeps: usize },

    #[error("matrix is singular (smallest |eigenvalue| {min_abs:e})")]
    SingularMatrix { min_abs: f64 },

    #[error("SR1 update {index} skipped: |s'(y - Bs)| = {denominator:e} below safeguard")]
    SkippedUpdate { index: usize, denominator: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
