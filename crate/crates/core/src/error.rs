use std::path::PathBuf;

/// Errors produced by the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("suffix list line {line}: {message}")]
    PslParse { line: usize, message: String },

    #[error("crawl log line {line}: {message}")]
    LogSchema { line: usize, message: String },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    InvalidInput(String),

    #[error("stage {stage}: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    pub fn config(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Pipeline {
            stage,
            source: Box::new(self),
        }
    }
}
