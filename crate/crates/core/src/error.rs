use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum QmcError {
    #[error("dimension {requested} exceeds the configured maximum {max}")]
    DimensionTooLarge { requested: usize, max: usize },

    #[error("layout describes total dimension {layout_dim} but the matrix is {rows}x{cols}")]
    LayoutMismatch {
        layout_dim: usize,
        rows: usize,
        cols: usize,
    },

    #[error("subsystem {index} does not exist in a layout with {arity} subsystems")]
    InvalidSubsystem { index: usize, arity: usize },

    #[error("subsystem {index}: expected dimension {expected}, found {found}")]
    SubsystemDimension {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("expected a layout with {expected} subsystems, found {found}")]
    WrongArity { expected: usize, found: usize },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("trace is {trace}, expected 1 (deviation {deviation:e})")]
    TraceNotOne { trace: f64, deviation: f64 },

    #[error("map is not trace preserving (deviation {deviation:e})")]
    NotTracePreserving { deviation: f64 },

    #[error("invalid Schatten exponent {0}; must be >= 1")]
    InvalidExponent(f64),

    #[error("zero matrix cannot be normalized")]
    ZeroMatrix,

    #[error("target discrepancy {target} is not attainable (best reached {reached})")]
    InfeasibleTarget { target: f64, reached: f64 },

    #[error("unknown formula `{0}`")]
    UnknownFormula(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QmcError>;
