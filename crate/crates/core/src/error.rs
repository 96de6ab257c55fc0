use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    /// Normalization is only defined away from the zero measure.
    #[error("cannot normalize the zero measure")]
    ZeroMeasure,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigensolver did not converge after {iterations} restarts (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate test function: {0}")]
    Degenerate(String),

    #[error("decay-rate fit failed: {0}")]
    DecayFit(String),

    #[error("invalid samples: {0}")]
    InvalidSamples(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
