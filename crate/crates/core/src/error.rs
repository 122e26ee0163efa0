use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown symbol `{text}` (not in alphabet)")]
    UnknownSymbol { text: String },

    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("operator `{op}` expects {expected} argument(s), got {found}")]
    ArityMismatch {
        op: String,
        expected: String,
        found: usize,
    },

    #[error("operator `{op}` requires numeric labels, got `{label}`")]
    NonNumericLabel { op: String, label: String },

    #[error("operator `{op}` overflowed evaluating {args}")]
    NumericOverflow { op: String, args: String },

    #[error("operator `{op}` has no table entry for ({args})")]
    UndefinedTuple { op: String, args: String },

    #[error("enumeration of {requested} tuples exceeds budget of {budget}")]
    BudgetExceeded { requested: u128, budget: u64 },

    #[error("operator `{0}` is already registered")]
    DuplicateName(String),

    #[error("no operator named `{0}`")]
    UnknownOperator(String),

    #[error("relation `{0}` is not in the relation vocabulary")]
    UnknownRelation(String),

    #[error("bag `{bag}`: no prediction for instance `{instance}` at position {position}")]
    CoverageGap {
        bag: String,
        instance: String,
        position: usize,
    },

    #[error("dataset has no ground truth")]
    MissingGroundTruth,

    #[error("invalid operator spec `{name}`: {reason}")]
    InvalidOperatorSpec { name: String, reason: String },

    #[error("invalid experiment spec: {0}")]
    InvalidExperiment(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
