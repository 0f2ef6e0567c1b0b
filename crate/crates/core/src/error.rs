use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file or matrix (non-square, asymmetric, unparsable).
    #[error("input format error: {0}")]
    InputFormat(String),

    /// Simplices that reference missing faces or invalid vertices.
    #[error("topology error: {0}")]
    Topology(String),

    #[error("unsupported simplex dimension k={0} (only 0 and 1 are supported)")]
    UnsupportedDimension(usize),

    #[error("dense spectral oracle limited to dimension {limit}, got {dim}")]
    OracleLimit { dim: usize, limit: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pooling plan error: {0}")]
    Plan(String),

    #[error("tape error: {0}")]
    Tape(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
