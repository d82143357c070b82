use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("state vector is not normalized (norm {0})")]
    Normalization(f64),

    #[error("invalid state: {0}")]
    State(String),

    #[error("parameter `{name}` out of range: {value}")]
    Param { name: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("wrong scenario: expected {expected}, found {found}")]
    WrongScenario {
        expected: &'static str,
        found: &'static str,
    },

    #[error("no violation possible: the first round already needs G > 1")]
    NoViolation,

    #[error("no parameter value reaches {0} rounds")]
    Unreachable(usize),

    #[error("serialization failed: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks `lo <= value <= hi`, naming the offending parameter otherwise.
pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::Param { name, value })
    }
}
