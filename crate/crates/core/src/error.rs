use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A problem in a line-oriented text input, located by 1-based line number.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        ParseError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("invalid alternative id {0:?}")]
    InvalidAlternative(String),

    #[error("unknown alternative {0:?}")]
    UnknownAlternative(String),

    #[error("unknown {0}")]
    UnknownRule(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("committee size {k} exceeds the {m} available alternatives")]
    CommitteeTooLarge { k: usize, m: usize },

    #[error("no text supplied for committee member {0:?}")]
    MissingText(String),

    #[error("empty evaluator set")]
    EmptyEvaluators,

    #[error("invalid ratings: {0}")]
    InvalidRatings(String),

    #[error("invalid agenda: {0}")]
    InvalidAgenda(String),

    #[error("judgment set does not match the agenda: {0}")]
    AtomMismatch(String),

    #[error("majority judgments need an odd number of evaluators, got {0}")]
    EvenEvaluators(usize),

    #[error("inconsistent feedback: {0}")]
    InconsistentFeedback(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("design matrix is rank deficient (rank {rank} of {expected}); use a positive ridge penalty")]
    RankDeficient { rank: usize, expected: usize },

    #[error("invalid model input: {0}")]
    InvalidModel(String),

    #[error("invalid population spec: {0}")]
    InvalidPopulation(String),

    #[error("invalid pipeline input: {0}")]
    InvalidPipeline(String),

    #[error("exhaustive search limit exceeded: {0}")]
    SearchTooLarge(String),
}
