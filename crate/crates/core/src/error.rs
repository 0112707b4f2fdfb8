use alloc::boxed::Box;
use alloc::vec::Vec;

/// Errors raised by the geometry, solver and field routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Only `n > m ≥ 1` is supported.
    #[error("unsupported shape {n}x{m}: need n > m >= 1")]
    UnsupportedShape { n: usize, m: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix is not full rank (sigma_min = {sigma_min:e}, threshold = {threshold:e})")]
    RankDeficient { sigma_min: f64, threshold: f64 },

    #[error("tangent vectors are based at a different point")]
    BaseMismatch,

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix is not a rotation (orthogonality defect {defect:e}, det {det})")]
    NotRotation { defect: f64, det: f64 },

    #[error("negative geodesic time {t}")]
    NegativeTime { t: f64 },

    #[error("interpolation time {t} is outside [0, 1]")]
    TimeOutOfRange { t: f64 },

    #[error("geodesic time {t} reaches the blow-up time {blowup}")]
    BlowUp { t: f64, blowup: f64 },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("Gram matrices differ beyond tolerance (relative residual {residual:e})")]
    GramMismatch { residual: f64 },

    #[error("Gram matrices differ beyond tolerance at sample points {points:?}")]
    FieldGramMismatch { points: Vec<usize> },

    #[error("fields are defined on different sampled manifolds")]
    ManifoldMismatch,

    #[error("invalid sampled manifold: {reason}")]
    InvalidManifold { reason: &'static str },

    #[error("path needs at least two control matrices")]
    PathTooShort,

    #[error("at sample point {index}: {source}")]
    AtPoint {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(index: usize, source: Error) -> Self {
        Error::AtPoint {
            index,
            source: Box::new(source),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
