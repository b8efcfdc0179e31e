use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported element: {0}")]
    UnsupportedElement(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("unmatched node {node} for periodic pairing")]
    UnmatchedNode { node: usize },
    #[error("point {index} lies outside the mesh")]
    PointOutsideMesh { index: usize },
    #[error("degenerate element {elem}: detJ = {det_j:e}")]
    DegenerateElement { elem: usize, det_j: f64 },
    #[error("inverted element: J = {j:e}")]
    InvertedElement { j: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),
    #[error("size limit exceeded: {n} > {limit}")]
    SizeLimitExceeded { n: usize, limit: usize },
    #[error(
        "sparsity pattern too small: column {col} has an entry outside the pattern (error {err:e})"
    )]
    PatternTooSmall { col: usize, err: f64 },
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nested tape recording is not supported")]
    NestedTape,
    #[error("solver breakdown: {0}")]
    Breakdown(String),
    #[error("solver stagnation after {iterations} iterations (residual {residual:e})")]
    Stagnation { iterations: usize, residual: f64 },
    #[error("singular matrix at pivot {pivot}")]
    SingularMatrix { pivot: usize },
    #[error("maximum iterations ({iterations}) exceeded, residual {residual:e}")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
