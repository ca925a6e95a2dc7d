use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("robot index {index} out of range for {len} robots")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty multiset")]
    EmptyMultiset,
    #[error("Byzantine robot activated without a position")]
    MissingByzantinePosition,
    #[error("invalid system size n = {0}: the model requires n > 2 correct robots")]
    InvalidSystemSize(usize),
    #[error("process {0} is not enabled (finished or crashed)")]
    ProcessNotEnabled(usize),
    #[error("cell owned by process {owner} written by process {writer}")]
    NotOwner { owner: usize, writer: usize },
    #[error("event bound exceeded: {total} primitives > limit {limit}")]
    BoundExceeded { total: usize, limit: usize },
    #[error("unknown timestamp {0}")]
    UnknownTimestamp(usize),
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error("slot {0} submitted twice by the same process")]
    DoubleSubmission(usize),
    #[error("wrong cardinality: expected {expected}, got {got}")]
    Cardinality { expected: usize, got: usize },
    #[error("unsupported formation family `{0}`")]
    UnsupportedFamily(String),
    #[error("formation `{0}` is not bivalent")]
    NotBivalent(String),
    #[error("outside the 1-neighborhood extension: {0}")]
    NotInExtension(String),
    #[error("criticality of slot {slot} is undefined: slot {slot} + n exceeds horizon {horizon}")]
    CriticalityUndefined { slot: usize, horizon: usize },
    #[error("corrupted trace: {0}")]
    CorruptedTrace(String),
    #[error("reference run did not reach a legitimate configuration within {0} rounds")]
    ReferenceDiverged(usize),
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
