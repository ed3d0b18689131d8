use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query budget exceeded: cap of {cap} unique entries reached")]
    BudgetExceeded { cap: u64 },

    /// The subsampled basis is numerically rank deficient.
    #[error("singular subsampled system: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    SingularSystem { sigma_min: f64, sigma_max: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An access went back to a column after a later column had been read.
    #[error("streaming violation: column {requested} queried after column {latest}")]
    StreamingViolation { requested: usize, latest: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
