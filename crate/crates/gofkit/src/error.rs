use std::path::PathBuf;

use gofkit_core::Error as CoreError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {reason}")]
    Format { path: PathBuf, line: usize, reason: String },
    #[error("{path}: spectrum cache version `{found}` is not supported (expected `{expected}`)")]
    CacheVersion {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("invalid setting `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("{0}")]
    Numeric(String),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            reason: reason.into(),
        }
    }

    /// Process exit status: 1 for bad input or configuration, 2 for runtime and numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) => match e {
                CoreError::InvalidParameter { .. }
                | CoreError::Parse { .. }
                | CoreError::EmptySample
                | CoreError::OutOfDomain { .. }
                | CoreError::DomainMismatch { .. }
                | CoreError::NotDegenerate
                | CoreError::FeaturesUnavailable
                | CoreError::TooFewReplications(_)
                | CoreError::IncompatibleCalibration { .. }
                | CoreError::MissingCalibration(_)
                | CoreError::AlphaMismatch { .. }
                | CoreError::NoQuadraturePath(_)
                | CoreError::ShortSpectrum { .. }
                | CoreError::TooFew { .. }
                | CoreError::GramLimit { .. } => 1,
                _ => 2,
            },
            Error::Format { .. } | Error::CacheVersion { .. } | Error::Missing(_) | Error::Invalid { .. } => 1,
            Error::Io { .. } | Error::Numeric(_) => 2,
        }
    }
}
