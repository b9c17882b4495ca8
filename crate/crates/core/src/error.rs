use thiserror::Error;

/// Errors raised by kernel construction, filtering, norm evaluation and the
/// reconstruction operators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid B-spline order {0}: order must be between 1 and {max}", max = crate::kernel::MAX_BSPLINE_ORDER)]
    InvalidOrder(usize),

    #[error("tensor product needs at least one axis kernel")]
    EmptyTensorProduct,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("derivative order {order} on axis {axis} exceeds the polynomial degree {degree}")]
    DerivativeOrder {
        axis: usize,
        order: usize,
        degree: usize,
    },

    #[error("symbol magnitude {magnitude:.3e} below tolerance {tol:.3e} at frequency {frequency:?}")]
    SymbolNotInvertible {
        frequency: Vec<f64>,
        magnitude: f64,
        tol: f64,
    },

    #[error("Riesz lower bound violated: autocorrelation symbol minimum {minimum:.3e} is below {tol:.3e}")]
    RieszBound { minimum: f64, tol: f64 },

    #[error("filter support width {width} does not fit in a DFT grid of size {n}")]
    GridTooSmall { width: usize, n: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid misaligned: {0}")]
    Misaligned(String),

    #[error("point {point:?} needs coefficient {index:?} outside the stored support")]
    OutsideSupport { point: Vec<f64>, index: Vec<i64> },

    #[error("mollifier unresolved: {points} grid nodes in its support, at least {required} needed")]
    Unresolved { points: usize, required: usize },

    #[error("signal does not provide partial derivatives of order {requested} (max {available})")]
    MissingPartials { requested: usize, available: usize },

    #[error("slope fit needs at least {required} usable points, got {actual}")]
    TooFewPoints { required: usize, actual: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
