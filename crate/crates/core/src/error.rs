use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("matrix is not orthogonal: ||K K^T - I||_F = {deviation:.3e} exceeds {tolerance:.1e}")]
    NotOrthogonal { deviation: f64, tolerance: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("near collision between bodies {i} and {j} (distance {distance:.3e}) at t = {time}")]
    NearCollision {
        i: usize,
        j: usize,
        distance: f64,
        time: f64,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("dictionary size {size} exceeds the configured cap of {cap}")]
    DictionaryTooLarge { size: usize, cap: usize },

    #[error("degenerate hyperplane direction v_{index}: norm {norm:.3e} below guard {guard:.1e}")]
    DegenerateHyperplane { index: usize, norm: f64, guard: f64 },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        detail: detail.into(),
    }
}
