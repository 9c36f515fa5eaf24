use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("contract violated: {0}")]
    Contract(&'static str),
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },
    #[error("matrix is rank deficient")]
    RankDeficient,
    #[error("degenerate comparison: pooled standard deviation is zero")]
    Degenerate,
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            found,
        }
    }
}

/// Returns the first non-finite entry of `values` as an error.
pub(crate) fn check_finite(context: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { context, index }),
        None => Ok(()),
    }
}
