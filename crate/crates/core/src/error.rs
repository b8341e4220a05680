use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DivergenceError {
    #[error("distribution has {distribution} entries but target vocabulary has {target}")]
    DimensionMismatch { distribution: usize, target: usize },
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("distribution entry {index} = {value} is outside [0, 1]")]
    EntryOutOfRange { index: usize, value: f64 },
    #[error("distribution mass {mass} does not sum to 1")]
    NotNormalized { mass: f64 },
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("one-hot index {index} out of range for vocabulary of size {size}")]
    TargetOutOfRange { index: usize, size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("pair {pair_id}: {side} sentence is empty")]
    EmptySentence { pair_id: String, side: &'static str },
    #[error("pair {pair_id}: sentences have no modified words on the {side} side")]
    NoModifiedWords { pair_id: String, side: &'static str },
}

/// Failure of a backend as a whole (transport, protocol, configuration).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable {
        message: String,
        attempts: u32,
        retry_after_ms: Option<u64>,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("{0}")]
    Other(String),
}

/// Failure of a single probe inside an otherwise successful batch.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("token index {index} out of range for sentence of {len} token(s)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("probe rejected: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("word {surface:?} at bytes {start}..{end} is not covered by any subword token")]
    Uncovered {
        surface: String,
        start: usize,
        end: usize,
    },
    #[error(
        "subword token at bytes {token_start}..{token_end} crosses the boundary of word {surface:?} at bytes {start}..{end}"
    )]
    BoundaryCrossed {
        surface: String,
        start: usize,
        end: usize,
        token_start: usize,
        token_end: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{side} sentence, word {position}: {source}")]
    Mapping {
        side: &'static str,
        position: usize,
        source: MappingError,
    },
    #[error("{side} sentence, word {position}: {source}")]
    Probe {
        side: &'static str,
        position: usize,
        source: ProbeError,
    },
    #[error("shared word index {index} out of range ({len} shared word(s))")]
    SharedIndexOutOfRange { index: usize, len: usize },
    #[error("backend returned {got} result(s) for {expected} request(s)")]
    ResultCountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("pair {pair_id}: {source}")]
    Pair {
        pair_id: String,
        source: AttributionError,
    },
    #[error("missing preferences for pair(s): {}", .0.join(", "))]
    Incomplete(Vec<String>),
}
