use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] sbic::Error),
}

impl CliError {
    /// 1 for numerical failures, 2 for usage and IO problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(sbic::Error::Numerical(_)) => 1,
            _ => 2,
        }
    }
}
