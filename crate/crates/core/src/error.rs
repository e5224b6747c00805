use thiserror::Error;

pub type Result<T, E = FitError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("node ({i}, {j}, {k}) outside grid with {nodes:?} nodes")]
    NodeOutOfRange {
        i: usize,
        j: usize,
        k: usize,
        nodes: [usize; 3],
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("invalid port '{name}': {reason}")]
    InvalidPort { name: String, reason: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("scene error at {path}: {message}")]
    Scene { path: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl FitError {
    pub(crate) fn scene(path: impl Into<String>, message: impl Into<String>) -> Self {
        FitError::Scene {
            path: path.into(),
            message: message.into(),
        }
    }
}
