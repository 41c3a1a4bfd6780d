use thiserror::Error;

/// Errors raised by the instrument, scenario and optimization layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A precondition on the inputs of an operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Kraus elements are not spanned by the projectors of the measurement axis.
    #[error("unsupported instrument: {0}")]
    UnsupportedInstrument(String),

    #[error("degenerate outcome: probability {0:e} is too small to condition on")]
    DegenerateOutcome(f64),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("empty interval: {0}")]
    EmptyInterval(String),

    #[error("sequence construction failed: {0}")]
    ConstructionFailed(String),

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
