//! Per-word bias attribution over the shared words of an aligned pair.
//!
//! Each subword of a shared word is probed once in each sentence. The word's
//! score is the mean of its subword scores. When the tokenizer splits the word
//! into different numbers of pieces in the two sentences, each side's distance
//! term is averaged over its own pieces and the word score is the difference
//! of the two means; the record is then marked asymmetric.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::align::{AlignedPair, SharedWord};
use crate::backend::{word_token_range, ProbeOutcome, ProbeRequest, ScoringBackend, SubwordToken};
use crate::divergence::{bias_score, js_distance_one_hot, TargetProbability};
use crate::error::{AttributionError, BackendError};
use crate::text::Word;

pub const DEFAULT_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributionConfig {
    /// Scores with magnitude at most this are classified neutral.
    pub zero_tol: f64,
    /// Score punctuation-only words as well.
    pub score_punctuation: bool,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            zero_tol: DEFAULT_ZERO_TOL,
            score_punctuation: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    MoreBias,
    Neutral,
    LessBias,
}

impl Direction {
    pub fn classify(b: f64, zero_tol: f64) -> Self {
        if b < -zero_tol {
            Direction::MoreBias
        } else if b > zero_tol {
            Direction::LessBias
        } else {
            Direction::Neutral
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::MoreBias => "more bias",
            Direction::Neutral => "neutral",
            Direction::LessBias => "less bias",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::MoreBias => Direction::LessBias,
            Direction::LessBias => Direction::MoreBias,
            Direction::Neutral => Direction::Neutral,
        }
    }
}

/// One subword probed in one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SideProbe {
    pub token_index: usize,
    pub token: SubwordToken,
    pub p: TargetProbability,
    pub distance: f64,
}

impl SideProbe {
    fn new(token_index: usize, token: SubwordToken, p: TargetProbability) -> Self {
        Self {
            token_index,
            token,
            p,
            distance: js_distance_one_hot(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubwordScore {
    pub token: SubwordToken,
    pub p_more: TargetProbability,
    pub p_less: TargetProbability,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubwordBreakdown {
    Paired(Vec<SubwordScore>),
    Asymmetric {
        more: Vec<SideProbe>,
        less: Vec<SideProbe>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionRecord {
    pub pair_id: String,
    pub word_more: Word,
    pub word_less: Word,
    pub breakdown: SubwordBreakdown,
    pub b_word: f64,
    pub direction: Direction,
}

impl AttributionRecord {
    pub fn from_probes(
        pair_id: &str,
        shared: &SharedWord,
        more: Vec<SideProbe>,
        less: Vec<SideProbe>,
        zero_tol: f64,
    ) -> Self {
        let (breakdown, b_word) = if more.len() == less.len() {
            let scores: Vec<SubwordScore> = more
                .into_iter()
                .zip(less)
                .map(|(m, l)| SubwordScore {
                    b: bias_score(m.p, l.p),
                    token: m.token,
                    p_more: m.p,
                    p_less: l.p,
                })
                .collect();
            let b = mean(scores.iter().map(|s| s.b));
            (SubwordBreakdown::Paired(scores), b)
        } else {
            let b = mean(more.iter().map(|s| s.distance)) - mean(less.iter().map(|s| s.distance));
            (SubwordBreakdown::Asymmetric { more, less }, b)
        };
        Self {
            pair_id: String::from(pair_id),
            word_more: shared.more.clone(),
            word_less: shared.less.clone(),
            breakdown,
            b_word,
            direction: Direction::classify(b_word, zero_tol),
        }
    }

    pub fn surface(&self) -> &str {
        &self.word_more.surface
    }

    pub fn is_asymmetric(&self) -> bool {
        matches!(self.breakdown, SubwordBreakdown::Asymmetric { .. })
    }

    /// Per-subword scores; empty for asymmetric splits.
    pub fn subword_scores(&self) -> &[SubwordScore] {
        match &self.breakdown {
            SubwordBreakdown::Paired(s) => s,
            SubwordBreakdown::Asymmetric { .. } => &[],
        }
    }
}

/// Arithmetic mean of subword scores.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Probes gathered for one shared word on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct WordProbes {
    pub shared_index: usize,
    pub more: Result<Vec<SideProbe>, AttributionError>,
    pub less: Result<Vec<SideProbe>, AttributionError>,
}

impl WordProbes {
    pub fn both(&self) -> Result<(&[SideProbe], &[SideProbe]), AttributionError> {
        let more = self.more.as_ref().map_err(Clone::clone)?;
        let less = self.less.as_ref().map_err(Clone::clone)?;
        Ok((more, less))
    }
}

/// Probes for a selection of shared words of one pair, gathered with one
/// backend call per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProbes {
    pub words: Vec<WordProbes>,
}

#[derive(Clone, Copy)]
enum Side {
    More,
    Less,
}

impl Side {
    fn name(self) -> &'static str {
        match self {
            Side::More => "more",
            Side::Less => "less",
        }
    }
}

pub fn collect_probes<B: ScoringBackend + ?Sized>(
    aligned: &AlignedPair,
    backend: &B,
    shared_indices: &[usize],
) -> Result<PairProbes, BackendError> {
    let more = probe_side(aligned, backend, shared_indices, Side::More)?;
    let less = probe_side(aligned, backend, shared_indices, Side::Less)?;
    let words = shared_indices
        .iter()
        .zip(more.into_iter().zip(less))
        .map(|(&shared_index, (more, less))| WordProbes {
            shared_index,
            more,
            less,
        })
        .collect();
    Ok(PairProbes { words })
}

fn probe_side<B: ScoringBackend + ?Sized>(
    aligned: &AlignedPair,
    backend: &B,
    shared_indices: &[usize],
    side: Side,
) -> Result<Vec<Result<Vec<SideProbe>, AttributionError>>, BackendError> {
    let sentence = match side {
        Side::More => &aligned.sent_more,
        Side::Less => &aligned.sent_less,
    };
    let tokens = backend.tokenize(sentence)?;

    let ranges: Vec<Result<(usize, Range<usize>), AttributionError>> = shared_indices
        .iter()
        .map(|&i| {
            let word = match side {
                Side::More => &aligned.shared[i].more,
                Side::Less => &aligned.shared[i].less,
            };
            word_token_range(sentence, word, &tokens)
                .map(|r| (word.position, r))
                .map_err(|source| AttributionError::Mapping {
                    side: side.name(),
                    position: word.position,
                    source,
                })
        })
        .collect();

    let mut indices: Vec<usize> = ranges
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .flat_map(|(_, r)| r.clone())
        .collect();
    indices.sort_unstable();
    indices.dedup();

    let outcomes: BTreeMap<usize, ProbeOutcome> = if indices.is_empty() {
        BTreeMap::new()
    } else {
        let requests: Vec<ProbeRequest> = indices
            .iter()
            .map(|&i| ProbeRequest::new(sentence.as_str(), i))
            .collect();
        let results = backend.probe(&requests)?;
        if results.len() != requests.len() {
            return Err(BackendError::Protocol(alloc::format!(
                "backend returned {} result(s) for {} request(s)",
                results.len(),
                requests.len()
            )));
        }
        indices.iter().copied().zip(results).collect()
    };

    Ok(ranges
        .into_iter()
        .map(|r| {
            let (position, range) = r?;
            range
                .map(|i| match &outcomes[&i] {
                    Ok(result) => Ok(SideProbe::new(i, tokens[i].clone(), result.p)),
                    Err(source) => Err(AttributionError::Probe {
                        side: side.name(),
                        position,
                        source: source.clone(),
                    }),
                })
                .collect()
        })
        .collect())
}

/// Indices of the shared words that receive attribution scores.
pub fn scored_shared_indices(aligned: &AlignedPair, config: &AttributionConfig) -> Vec<usize> {
    aligned
        .shared
        .iter()
        .enumerate()
        .filter(|(_, s)| config.score_punctuation || !s.more.is_punctuation())
        .map(|(i, _)| i)
        .collect()
}

pub fn score_word<B: ScoringBackend + ?Sized>(
    aligned: &AlignedPair,
    shared_index: usize,
    backend: &B,
    config: &AttributionConfig,
) -> Result<AttributionRecord, AttributionError> {
    if shared_index >= aligned.shared.len() {
        return Err(AttributionError::SharedIndexOutOfRange {
            index: shared_index,
            len: aligned.shared.len(),
        });
    }
    let probes = collect_probes(aligned, backend, &[shared_index])?;
    let word = &probes.words[0];
    let (more, less) = word.both()?;
    Ok(AttributionRecord::from_probes(
        &aligned.pair_id,
        &aligned.shared[shared_index],
        more.to_vec(),
        less.to_vec(),
        config.zero_tol,
    ))
}

/// Records in sentence order plus the errors of words that could not be scored.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAttribution {
    pub pair_id: String,
    pub records: Vec<AttributionRecord>,
    pub errors: Vec<AttributionError>,
}

pub fn attribution_from_probes(
    aligned: &AlignedPair,
    probes: &PairProbes,
    config: &AttributionConfig,
) -> PairAttribution {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for word in &probes.words {
        let shared = &aligned.shared[word.shared_index];
        if !config.score_punctuation && shared.more.is_punctuation() {
            continue;
        }
        match word.both() {
            Ok((more, less)) => records.push(AttributionRecord::from_probes(
                &aligned.pair_id,
                shared,
                more.to_vec(),
                less.to_vec(),
                config.zero_tol,
            )),
            Err(e) => errors.push(e),
        }
    }
    PairAttribution {
        pair_id: aligned.pair_id.clone(),
        records,
        errors,
    }
}

pub fn score_pair<B: ScoringBackend + ?Sized>(
    aligned: &AlignedPair,
    backend: &B,
    config: &AttributionConfig,
) -> Result<PairAttribution, BackendError> {
    let indices = scored_shared_indices(aligned, config);
    let probes = collect_probes(aligned, backend, &indices)?;
    Ok(attribution_from_probes(aligned, &probes, config))
}
