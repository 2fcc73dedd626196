//! Error type shared across the crate.

use thiserror::Error;

/// Coarse error class, used by callers (notably the CLI) to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// The caller asked for something invalid (bad parameters, bad config).
    Usage,
    /// The input data or a file on disk is unusable.
    Data,
    /// Anything else.
    Internal,
}

#[derive(Debug, Error)]
pub enum Ss3Error {
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyperparam(String),

    #[error("model has {0} categories, at least 2 are required")]
    TooFewCategories(usize),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("duplicate category `{0}`")]
    DuplicateCategory(String),

    #[error("cannot merge profiles `{0}` and `{1}`: names differ")]
    ProfileNameMismatch(String, String),

    #[error("models are not mergeable: {0}")]
    IncompatibleModels(String),

    #[error("invalid level configuration: {0}")]
    InvalidLevelConfig(String),

    #[error("invalid selection policy: {0}")]
    InvalidSelection(String),

    #[error("invalid early policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid evaluation config: {0}")]
    InvalidEvalConfig(String),

    #[error("invalid search spec: {0}")]
    InvalidSearchSpec(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Ss3Error {
    pub fn kind(&self) -> ErrorKind {
        use Ss3Error::*;
        match self {
            InvalidHyperparam(_)
            | TooFewCategories(_)
            | UnknownCategory(_)
            | DuplicateCategory(_)
            | InvalidLevelConfig(_)
            | InvalidSelection(_)
            | InvalidPolicy(_)
            | InvalidEvalConfig(_)
            | InvalidSearchSpec(_) => ErrorKind::Usage,
            ProfileNameMismatch(_, _)
            | IncompatibleModels(_)
            | Dataset(_)
            | ModelFormat(_)
            | UnsupportedVersion(_)
            | Io(_)
            | Json(_)
            | Csv(_) => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Ss3Error>;
