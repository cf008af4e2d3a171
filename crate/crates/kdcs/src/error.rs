//! Crate-wide error type.

/// Errors surfaced by construction, numeric evaluation, and build/query
/// contracts throughout the crate.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A coordinate was NaN or infinite.
    #[error("non-finite coordinate at position {0}")]
    NonFinite(usize),

    /// Two objects that must share a dimension do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operation that needs at least one point received none.
    #[error("empty dataset")]
    EmptyDataset,

    /// A scalar parameter was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Shell radii do not satisfy `0 < r_min <= r_in < r_out <= r_max`.
    #[error("invalid shell geometry: {0}")]
    InvalidGeometry(String),

    /// A kernel was configured inconsistently (e.g. a mixture without
    /// smoothness parameters).
    #[error("kernel configuration error: {0}")]
    KernelConfig(String),

    /// A point or query violated the radius band it was declared to be in.
    #[error(
        "side contract violated: norm {norm} outside {side} band [{lo}, {hi}]"
    )]
    SideContract {
        side: &'static str,
        norm: f64,
        lo: f64,
        hi: f64,
    },

    /// Adaptive quadrature failed to converge within its node budget.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    /// An exhaustive search was asked for an instance above its size cap.
    #[error("instance too large: {0}")]
    TooLarge(String),

    /// The recursive build exceeded its depth cap.
    #[error("recursion depth cap {cap} exceeded at subset size {size}")]
    DepthExceeded { cap: usize, size: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
