//! Error type shared across the library.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("corpus not found at {0}")]
    CorpusMissing(PathBuf),

    #[error("malformed corpus record at line {line}: {reason}")]
    MalformedCorpus { line: usize, reason: String },

    #[error("corpus too small: need at least {needed} documents, have {have}")]
    CorpusTooSmall { needed: usize, have: usize },

    #[error("not enough records for split policy: need {needed}, have {have}")]
    TooFewRecords { needed: usize, have: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("degenerate labels: training set needs at least one positive and one negative example")]
    DegenerateLabels,

    #[error("clicked document missing from ranked list")]
    ClickedNotInList,

    #[error("{n} datasets exceed the exact-enumeration limit of {max}: use Monte Carlo")]
    TooManyDatasets { n: usize, max: usize },

    #[error("self-feedback is forbidden")]
    SelfFeedback,

    #[error("feedback utility must be non-negative, got {0}")]
    NegativeUtility(f64),

    #[error("no eligible recipients")]
    NoEligibleRecipients,

    #[error("donation of {amount} too small to split among {recipients} recipients")]
    DonationTooSmall { amount: u64, recipients: usize },

    #[error("payout signature invalid")]
    SignatureInvalid,

    #[error("insufficient balance: donor has {have}, payout needs {need}")]
    InsufficientBalance { have: u64, need: u64 },

    #[error("duplicate payout message")]
    DuplicatePayout,

    #[error("malformed payout: {0}")]
    MalformedPayout(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
