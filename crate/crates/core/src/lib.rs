//! Bias attribution for minimal sentence pairs.
//!
//! Given a pair of sentences that differ only in a few social-attribute
//! words, every word the two sentences share receives a score comparing how
//! close the model's prediction for that word is to the truth in each
//! context. Negative scores mark words that push the model toward the more
//! stereotypical sentence. Words split into several subword tokens receive
//! the mean of their subword scores.
//!
//! The crate is `no_std` and only needs `alloc`. Model access goes through
//! the [`ScoringBackend`] trait; dataset files, HTTP transport and reporting
//! live in the companion `bias-attribution` crate.

#![no_std]

extern crate alloc;

pub mod align;
pub mod attribution;
pub mod backend;
pub mod divergence;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod semantics;
pub mod text;

pub use align::{align_pair, AlignedPair, ChallengePair, SharedWord};
pub use attribution::{
    score_pair, score_word, AttributionConfig, AttributionRecord, Direction, PairAttribution,
    SideProbe, SubwordBreakdown, SubwordScore,
};
pub use backend::{
    BackendInfo, Paradigm, ProbeOutcome, ProbeRequest, ProbeResult, ScoringBackend, SubwordToken,
};
pub use divergence::{
    bias_score, js_distance_one_hot, jsd_full, jsd_one_hot_closed, OneHotTarget,
    ProbabilityVector, TargetProbability,
};
pub use error::{
    AlignmentError, AttributionError, BackendError, DivergenceError, EvaluationError,
    MappingError, ProbeError,
};
pub use evaluation::{aggregate, prefer, BiasScoreReport, PairPreference, Preferred};
pub use pipeline::{analyze_pair, PairAnalysis};
pub use semantics::{frequency_filter, summarize, top_k, SemanticSummary, TagLexicon};
pub use text::{split_words, Word};
