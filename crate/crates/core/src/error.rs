use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("graph structure: {0}")]
    Structure(String),
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("unsupported mixing measure: {0}")]
    UnsupportedMeasure(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("initialization: {0}")]
    Init(String),
    #[error("configuration {config}: {source}")]
    Config {
        config: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
