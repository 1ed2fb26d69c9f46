use alloc::string::String;

use chrono::NaiveDate;

use crate::probe::ScorerError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate {kind} key `{key}`")]
    DuplicateKey { kind: &'static str, key: String },

    #[error("{kind} `{key}` references unknown {target} `{reference}`")]
    Referential {
        kind: &'static str,
        key: String,
        target: &'static str,
        reference: String,
    },

    #[error("unknown {kind} `{key}`")]
    NotFound { kind: &'static str, key: String },

    #[error("channel `{channel}`: {date} is outside the subscriber snapshot range {earliest}..={latest}")]
    OutOfRange {
        channel: String,
        date: NaiveDate,
        earliest: NaiveDate,
        latest: NaiveDate,
    },

    #[error("channel `{0}` has no subscriber snapshots")]
    NoSnapshots(String),

    #[error("undefined measure: {0}")]
    UndefinedMeasure(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Scorer(#[from] ScorerError),

    #[error("premise #{index}: {source}")]
    ProbeSample { index: usize, source: ScorerError },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn undefined(msg: impl Into<String>) -> Self {
        Error::UndefinedMeasure(msg.into())
    }
}
