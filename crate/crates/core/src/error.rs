use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("input outside the model domain: {0}")]
    OutOfDomain(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("tied record at index {index} has zero probability under theta = 1")]
    InfiniteLikelihood { index: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("dataset generation failed: {0}")]
    Generation(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("run with theta = {theta} failed: {source}")]
    ThetaRun { theta: f64, source: Box<Error> },
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
}
