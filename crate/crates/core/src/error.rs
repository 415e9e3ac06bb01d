use thiserror::Error;

pub type Result<T> = std::result::Result<T, SsgnError>;

/// Every failure the library can report.
///
/// [`SsgnError::class`] buckets variants for process exit codes.
#[derive(Debug, Error)]
pub enum SsgnError {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("malformed data in `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in `{name}`")]
    NonFinite { name: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

impl SsgnError {
    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        SsgnError::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SsgnError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            SsgnError::Config(_) | SsgnError::Invalid(_) => ErrorClass::Usage,
            SsgnError::NonFinite { .. } => ErrorClass::Numeric,
            SsgnError::Geometry(_)
            | SsgnError::Format { .. }
            | SsgnError::Shape(_)
            | SsgnError::Io { .. } => ErrorClass::Data,
        }
    }
}
