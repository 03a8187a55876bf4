use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("payoff {0} is outside (-1, 1)")]
    PayoffOutOfRange(f64),

    #[error("betting session already rejected at step {0}")]
    SessionClosed(usize),

    #[error("wealth factor 1 + v*kappa = {0} is not positive")]
    NonPositiveWealthFactor(f64),

    #[error("conditioning point lies outside the support of the data (all weights vanish)")]
    OutsideSupport,

    #[error("no dataset row matches the conditioning vector")]
    NoMatchingRows,

    #[error("conditioning event has probability zero")]
    ZeroProbability,

    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("ranking is not a permutation of 0..{0}")]
    NotAPermutation(usize),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidParameter { name, reason }
    }
}
