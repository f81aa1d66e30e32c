use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid quantile spec: {0}")]
    InvalidSpec(String),

    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("enumeration budget exceeded: {needed} samples requested, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("empty sample")]
    EmptySample,

    #[error("rule error: {0}")]
    Rule(String),

    #[error("rule-is-zero: no searched sample has a positive treatment probability")]
    RuleIsZero,

    #[error("unsupported-boundary-case: {0}")]
    UnsupportedBoundaryCase(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn parse(input: &str, reason: &str) -> Self {
        Error::Parse {
            input: input.to_string(),
            reason: reason.to_string(),
        }
    }
}
