use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("cannot read {path}: {msg}")]
    Input { path: PathBuf, msg: String },
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 2 for bad input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) | HarnessError::Input { .. } => 2,
            HarnessError::Internal(_) | HarnessError::Io(_) => 1,
        }
    }
}

impl From<glb_core::Error> for HarnessError {
    fn from(e: glb_core::Error) -> Self {
        match e {
            glb_core::Error::Config(_) | glb_core::Error::Dimension(_) => HarnessError::Validation(e.to_string()),
            other => HarnessError::Internal(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
