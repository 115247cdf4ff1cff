use alloc::string::String;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dyadic matching needs an even node count, got {0}")]
    OddNodeCount(usize),
    #[error("node {0} has no neighbors")]
    IsolatedNode(usize),
    #[error("treatment arm `{0}` is empty")]
    EmptyArm(&'static str),
    #[error("treatment has zero variance; effect is not identified")]
    NoTreatmentVariation,
    #[error("forward cache is stale: network changed since it was recorded")]
    StaleCache,
    #[error("model has not been trained")]
    Untrained,
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
