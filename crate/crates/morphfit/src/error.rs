use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point lists have mismatched lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("weights must be non-negative and not all zero")]
    InvalidWeights,
    #[error("degenerate point configuration (rank < 2 after centering)")]
    DegenerateConfiguration,
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("requested {k} principal components but at most {max} are available")]
    InvalidComponentCount { k: usize, max: usize },
    #[error("vertex index {index} out of range (model has {n} vertices)")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("infeasible synthetic model dimensions: {0}")]
    InfeasibleDimensions(String),
    #[error("normal matrix is singular in shape solve")]
    SingularNormalMatrix,
    #[error("embedding is not valid for the identity model (margin {margin})")]
    InvalidIdentityEmbedding { margin: f64 },
    #[error("degenerate triangle (doubled area {area:e})")]
    DegenerateTriangle { area: f64 },
    #[error("parameter {name} out of range: {message}")]
    ParameterRange { name: String, message: String },
    #[error("comparison region does not fit inside the images for the requested shifts")]
    RegionOutOfBounds,
    #[error("fit failed at frame {frame}: {source}")]
    FrameFailed {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: non-numeric field `{field}`")]
    NonNumericField {
        path: String,
        line: usize,
        field: String,
    },
    #[error("{path}:{line}: duplicate landmark (t={t}, j={j})")]
    DuplicateLandmark {
        path: String,
        line: usize,
        t: usize,
        j: usize,
    },
    #[error("{path}: frame {t} is missing landmark j={j}")]
    MissingLandmark { path: String, t: usize, j: usize },
    #[error("{path}: unsupported image format: {message}")]
    UnsupportedImage { path: String, message: String },
    #[error("{path}: truncated pixel payload (expected {expected} bytes, got {got})")]
    TruncatedImage {
        path: String,
        expected: usize,
        got: usize,
    },
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
