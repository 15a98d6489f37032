use thiserror::Error;

#[derive(Debug, Error)]
pub enum PbpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("belief update produced an empty belief (normalizer is zero)")]
    EmptyBelief,

    #[error("multiplicative pool has zero mass")]
    EmptyPool,

    #[error("unknown observation id `{0}`")]
    UnknownObservation(String),

    #[error("vision class {class} has no examples in the planning dataset")]
    Coverage { class: usize },

    #[error("cannot step from terminal state {0}")]
    TerminalState(usize),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PbpError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        PbpError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PbpError>;
