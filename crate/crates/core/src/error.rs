use thiserror::Error;

/// Errors raised by the model, its partitioner and its executor.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HgpError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("cholesky factorization failed after jitter {jitter:e}")]
    CholeskyFailed { jitter: f64 },

    #[error("leaf {leaf}: {source}")]
    Leaf {
        leaf: usize,
        #[source]
        source: Box<HgpError>,
    },

    #[error("task {index} failed: {source}")]
    Task {
        index: usize,
        #[source]
        source: Box<HgpError>,
    },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid tree: {0}")]
    Tree(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid gaussian: {0}")]
    InvalidGaussian(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl HgpError {
    /// Strips `Leaf`/`Task` wrappers.
    pub fn root_cause(&self) -> &HgpError {
        match self {
            HgpError::Leaf { source, .. } | HgpError::Task { source, .. } => source.root_cause(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self.root_cause(), HgpError::CholeskyFailed { .. })
    }
}

pub type Result<T, E = HgpError> = std::result::Result<T, E>;
