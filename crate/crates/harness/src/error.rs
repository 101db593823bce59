use kbl_core::KblError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] KblError),
    #[error("assertion failed: {0}")]
    Assert(String),
}

impl HarnessError {
    /// 1 config, 2 numerical, 3 assertion.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 1,
            HarnessError::Core(KblError::NumericalFailure(_) | KblError::NotRectifiable { .. }) => 2,
            HarnessError::Core(_) => 1,
            HarnessError::Assert(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}
