use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("standardization error: column `{0}` has zero variance in the training window")]
    Standardization(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("planning error: {0}")]
    Planning(String),
    #[error("lookup error: unknown sub-period `{0}`")]
    UnknownSubperiod(String),
    #[error("optimization error: {0}")]
    Optimization(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("trial pruned")]
    Pruned,
    #[error("bootstrap error: {0}")]
    Bootstrap(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("report error: {0}")]
    Report(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Toml(_) | Error::UnknownSubperiod(_) | Error::Planning(_) => {
                ErrorClass::Config
            }
            Error::Shape(_)
            | Error::Domain(_)
            | Error::Ingestion(_)
            | Error::Alignment(_)
            | Error::Csv(_)
            | Error::Report(_) => ErrorClass::Data,
            Error::Io(_) | Error::Json(_) => ErrorClass::Io,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Numeric,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Toml(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Toml(e.to_string())
    }
}
