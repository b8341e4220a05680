//! The contract between the toolkit and a language-model backend.
//!
//! A backend tokenizes sentences and reports, for one subword position at a
//! time, the probability the model assigns to the sentence's actual token at
//! that position. Masked models see the whole sentence with only that
//! position replaced by the mask token. Causal models see exactly the
//! preceding tokens.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::divergence::TargetProbability;
use crate::error::{BackendError, MappingError, ProbeError};
use crate::text::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Paradigm {
    Masked,
    Causal,
}

impl Paradigm {
    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Masked => "masked",
            Paradigm::Causal => "causal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "masked" => Some(Paradigm::Masked),
            "causal" => Some(Paradigm::Causal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendInfo {
    pub model_name: String,
    pub paradigm: Paradigm,
    pub vocab_size: u64,
    pub mask_token: Option<String>,
}

impl BackendInfo {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.vocab_size == 0 {
            return Err(BackendError::Protocol(String::from("vocab_size must be positive")));
        }
        if self.paradigm == Paradigm::Masked && self.mask_token.is_none() {
            return Err(BackendError::Protocol(String::from(
                "masked backend did not declare a mask_token",
            )));
        }
        Ok(())
    }
}

/// A subword token; `span` is a byte range into the tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubwordToken {
    pub token_id: u64,
    pub surface: String,
    pub span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProbeRequest {
    pub sentence: String,
    pub token_index: usize,
}

impl ProbeRequest {
    pub fn new(sentence: impl Into<String>, token_index: usize) -> Self {
        Self {
            sentence: sentence.into(),
            token_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub request: ProbeRequest,
    pub p: TargetProbability,
}

/// Outcome of one request in a batch.
pub type ProbeOutcome = Result<ProbeResult, ProbeError>;

pub trait ScoringBackend {
    fn info(&self) -> Result<BackendInfo, BackendError>;

    fn tokenize(&self, sentence: &str) -> Result<Vec<SubwordToken>, BackendError>;

    /// Scores a batch. The outer error is a whole-batch failure; inner errors
    /// are per request. Results are in request order.
    fn probe(&self, requests: &[ProbeRequest]) -> Result<Vec<ProbeOutcome>, BackendError>;
}

impl<B: ScoringBackend + ?Sized> ScoringBackend for &B {
    fn info(&self) -> Result<BackendInfo, BackendError> {
        (**self).info()
    }

    fn tokenize(&self, sentence: &str) -> Result<Vec<SubwordToken>, BackendError> {
        (**self).tokenize(sentence)
    }

    fn probe(&self, requests: &[ProbeRequest]) -> Result<Vec<ProbeOutcome>, BackendError> {
        (**self).probe(requests)
    }
}

impl<B: ScoringBackend + ?Sized> ScoringBackend for alloc::boxed::Box<B> {
    fn info(&self) -> Result<BackendInfo, BackendError> {
        (**self).info()
    }

    fn tokenize(&self, sentence: &str) -> Result<Vec<SubwordToken>, BackendError> {
        (**self).tokenize(sentence)
    }

    fn probe(&self, requests: &[ProbeRequest]) -> Result<Vec<ProbeOutcome>, BackendError> {
        (**self).probe(requests)
    }
}

/// Checks that token spans are ordered, non-overlapping, within the sentence
/// and on character boundaries.
pub fn validate_token_spans(sentence: &str, tokens: &[SubwordToken]) -> Result<(), BackendError> {
    let mut last_end = 0;
    for (i, t) in tokens.iter().enumerate() {
        let Range { start, end } = t.span;
        if start > end || end > sentence.len() {
            return Err(BackendError::Protocol(format!(
                "token {i} span {start}..{end} outside sentence of {} bytes",
                sentence.len()
            )));
        }
        if !sentence.is_char_boundary(start) || !sentence.is_char_boundary(end) {
            return Err(BackendError::Protocol(format!(
                "token {i} span {start}..{end} splits a character"
            )));
        }
        if start == end {
            continue;
        }
        if start < last_end {
            return Err(BackendError::Protocol(format!(
                "token {i} span {start}..{end} overlaps or precedes the previous token"
            )));
        }
        last_end = end;
    }
    Ok(())
}

fn trimmed_span(sentence: &str, span: &Range<usize>) -> Range<usize> {
    let text = &sentence[span.clone()];
    let lead = text.len() - text.trim_start().len();
    let trail = text.len() - text.trim_end().len();
    if lead == text.len() {
        return span.start..span.start;
    }
    span.start + lead..span.end - trail
}

/// Contiguous run of token indices covering `word`.
///
/// Token spans are trimmed of surrounding whitespace first, since many
/// tokenizers fold the preceding space into a word-initial piece. Tokens with
/// empty spans (special tokens) never cover anything.
pub fn word_token_range(
    sentence: &str,
    word: &Word,
    tokens: &[SubwordToken],
) -> Result<Range<usize>, MappingError> {
    let mut first = None;
    let mut last = 0;
    for (i, t) in tokens.iter().enumerate() {
        let span = trimmed_span(sentence, &t.span);
        if span.is_empty() || span.end <= word.span.start || span.start >= word.span.end {
            continue;
        }
        if span.start < word.span.start || span.end > word.span.end {
            return Err(MappingError::BoundaryCrossed {
                surface: word.surface.clone(),
                start: word.span.start,
                end: word.span.end,
                token_start: t.span.start,
                token_end: t.span.end,
            });
        }
        first.get_or_insert(i);
        last = i;
    }
    match first {
        Some(first) => Ok(first..last + 1),
        None => Err(MappingError::Uncovered {
            surface: word.surface.clone(),
            start: word.span.start,
            end: word.span.end,
        }),
    }
}
