use std::path::{Path, PathBuf};

use unite_core::control::LoopError;

/// Process exit codes.
pub mod exit {
    pub const USAGE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const DATA: i32 = 3;
    pub const PROVIDER: i32 = 4;
}

/// Errors reading or writing one artifact file.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: bad magic, expected {expected:?}", path.display())]
    Magic { path: PathBuf, expected: &'static str },
    #[error("{}: unsupported version {version}", path.display())]
    Version { path: PathBuf, version: u32 },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("{}:{line}: {message}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Core {
        path: PathBuf,
        #[source]
        source: unite_core::Error,
    },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn invalid(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Invalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn line(path: &Path, line: usize, message: impl Into<String>) -> Self {
        FormatError::Line {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn core(path: &Path, source: unite_core::Error) -> Self {
        FormatError::Core {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Top-level command errors, each mapped to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Core(unite_core::Error),
    #[error("missing state files in {}: {}", dir.display(), files.join(", "))]
    MissingState { dir: PathBuf, files: Vec<String> },
    #[error("model provider failed: {0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Core(unite_core::Error::Parameter { .. } | unite_core::Error::TopKBound { .. }) => {
                exit::VALIDATION
            }
            CliError::Format(_) | CliError::Data(_) | CliError::Core(_) => exit::DATA,
            CliError::MissingState { .. } | CliError::Provider(_) => exit::PROVIDER,
        }
    }

    /// Short category name used in the structured error line.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::USAGE => "usage",
            exit::VALIDATION => "validation",
            exit::PROVIDER => "provider",
            _ => "data",
        }
    }
}

impl From<unite_core::Error> for CliError {
    fn from(e: unite_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<LoopError> for CliError {
    fn from(e: LoopError) -> Self {
        match e {
            LoopError::Provider { message, .. } => CliError::Provider(message),
            LoopError::Core(e) => CliError::Core(e),
        }
    }
}
