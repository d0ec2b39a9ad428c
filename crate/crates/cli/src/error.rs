use hgp_core::HgpError;

/// Every failure maps to one documented exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or inconsistent settings. Exit 1.
    #[error("{0}")]
    Config(String),
    /// Unreadable, malformed or mismatched data. Exit 2.
    #[error("{0}")]
    Data(String),
    /// Numerical breakdown during fitting or prediction. Exit 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<HgpError> for CliError {
    fn from(e: HgpError) -> Self {
        let msg = e.to_string();
        match e.root_cause() {
            HgpError::CholeskyFailed { .. } | HgpError::InvalidGaussian(_) => CliError::Numerical(msg),
            HgpError::DimensionMismatch { .. } | HgpError::InvalidDataset(_) | HgpError::Empty(_) => {
                CliError::Data(msg)
            }
            _ => CliError::Config(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
