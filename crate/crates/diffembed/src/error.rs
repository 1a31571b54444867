use std::fmt;
use std::io;
use std::path::PathBuf;

/// A malformed input file. `line` is 1-based; 0 means the file as a whole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },

    #[error("{context}: {source}")]
    Core {
        context: String,
        source: diffembed_core::Error,
    },
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, source: ParseError) -> Self {
        AppError::Parse {
            path: path.into(),
            source,
        }
    }

    pub fn core(context: impl Into<String>, source: diffembed_core::Error) -> Self {
        AppError::Core {
            context: context.into(),
            source,
        }
    }

    /// 1 for usage errors, 2 for bad data or I/O, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Io { .. } | AppError::Parse { .. } => 2,
            AppError::Core { source, .. } if source.is_numerical() => 3,
            AppError::Core {
                source: diffembed_core::Error::InvalidParameter(_),
                ..
            } => 1,
            AppError::Core { .. } => 2,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
