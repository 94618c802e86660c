use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: names the offending key, argument or row.
    #[error("invalid {key}: {msg}")]
    Config { key: String, msg: String },

    #[error("row {row}: {msg}")]
    Data { row: usize, msg: String },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// A numerical check on the design or the computed quantities failed.
    #[error("numerical diagnostic: {0}")]
    Diagnostic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { key: key.into(), msg: msg.into() }
    }

    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Quadrature(_) | Error::Diagnostic(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
