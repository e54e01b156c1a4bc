use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants are grouped so that front ends can map them onto stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("comparability error: {0}")]
    Comparability(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(
        "inconclusive: identity-index intersection has {k} coordinates, need at least {k_min}"
    )]
    Inconclusive { k: usize, k_min: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate test: {0}")]
    Degenerate(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("resource error: {0}")]
    Resource(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// A copy of this error for handing the same failure to several waiters.
    /// I/O and JSON errors keep their message but lose their source.
    pub(crate) fn duplicate(&self) -> Error {
        match self {
            Error::Config(s) => Error::Config(s.clone()),
            Error::Dimension(s) => Error::Dimension(s.clone()),
            Error::Input(s) => Error::Input(s.clone()),
            Error::Data(s) => Error::Data(s.clone()),
            Error::Divergence { step, loss } => Error::Divergence {
                step: *step,
                loss: *loss,
            },
            Error::Comparability(s) => Error::Comparability(s.clone()),
            Error::Protocol(s) => Error::Protocol(s.clone()),
            Error::Inconclusive { k, k_min } => Error::Inconclusive {
                k: *k,
                k_min: *k_min,
            },
            Error::UndefinedCorrelation(s) => Error::UndefinedCorrelation(s.clone()),
            Error::Degenerate(s) => Error::Degenerate(s.clone()),
            Error::Metric(s) => Error::Metric(s.clone()),
            Error::Format(s) => Error::Format(s.clone()),
            Error::Resource(s) => Error::Resource(s.clone()),
            Error::Validation(s) => Error::Validation(s.clone()),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
            Error::Json(e) => Error::Format(e.to_string()),
        }
    }
}
