use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (bad CSV, invalid parameter ranges,
    /// dimension mismatches, empty datasets).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An agent id that is not present in the dataset.
    #[error("unknown agent id: {0}")]
    UnknownAgent(String),

    /// An observation id that is not present in the dataset.
    #[error("unknown observation: agent {agent}, obs {obs}")]
    UnknownObservation { agent: String, obs: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A computation could not produce a result (e.g. every synthetic
    /// dataset was dropped by the timeout policy).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl Error {
    /// True for errors caused by the caller's input rather than by the run
    /// itself. The CLI maps these to exit code 1, the rest to 2.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Runtime(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
