use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache constraint violated: {0}")]
    Constraint(String),
    #[error("content {0} is already cached")]
    Duplicate(u32),
    #[error("ordering violation: {0}")]
    Ordering(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable short name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::Constraint(_) => "constraint",
            Error::Duplicate(_) => "duplicate",
            Error::Ordering(_) => "ordering",
            Error::NonFinite(_) => "non_finite",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
