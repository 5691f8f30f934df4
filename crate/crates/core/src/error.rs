//! Error type shared by all model components.

/// Errors reported by model construction and evaluation.
///
/// The three variants deliberately mirror how callers should react:
/// `Config` means the request itself is malformed, `Domain` means a
/// parameter left the admissible analytic region (e.g. a mass below the
/// spectral floor), and `Invariant` means an internal consistency check
/// failed during an otherwise valid computation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (shape, grid, sampler sizes).
    #[error("config error: {0}")]
    Config(String),
    /// Parameter outside the admissible analytic domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A runtime invariant failed (non-finite value, tail mass, bracketing).
    #[error("invariant violation: {0}")]
    Invariant(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand constructor for [`Error::Config`].
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Shorthand constructor for [`Error::Domain`].
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Shorthand constructor for [`Error::Invariant`].
    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
