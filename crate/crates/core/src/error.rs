use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("hex input has an odd number of digits ({digits})")]
    OddLength { digits: usize },
    #[error("non-hex character {character:?} at position {position}")]
    NonHexCharacter { position: usize, character: char },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("CSV header does not match the {expected} schema")]
    SchemaHeaderMismatch { expected: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("class {0:?} has no samples")]
    EmptyClass(String),
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),

    #[error("dataset is empty")]
    EmptyDataset,
    #[error("all sample weights are zero")]
    AllWeightsZero,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weighted error {0} is outside [0, 0.5)")]
    EpsilonOutOfRange(f64),
    #[error("sample distribution degenerated to zero mass")]
    DegenerateDistribution,
    #[error("first boosting round is no better than chance (error {epsilon})")]
    FirstRoundTooWeak { epsilon: f64 },

    #[error("feature mask selects no features")]
    MaskEmpty,
    #[error("class {0} has no samples among the labels")]
    MissingClass(usize),
    #[error("empty AUC set")]
    EmptySet,

    #[error("malformed address {0:?}")]
    BadAddress(String),
    #[error("RPC transport failure: {0}")]
    RpcTransport(String),
    #[error("RPC error {code}: {message}")]
    RpcError { code: i64, message: String },
    #[error("no records found in corpus input")]
    NoRecords,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
