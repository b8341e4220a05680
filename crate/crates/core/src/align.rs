//! Word-level alignment of minimal pairs.
//!
//! Shared words are a longest common subsequence of the two word sequences
//! (exact, case-sensitive surface match). Among all longest common
//! subsequences the one chosen has the lexicographically smallest word
//! positions in the more-biased sentence, each matched to the earliest
//! available position in the less-biased sentence.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::AlignmentError;
use crate::text::{split_words_with, SplitOptions, Word};

/// One minimal pair from a benchmark dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChallengePair {
    pub id: String,
    pub sent_more: String,
    pub sent_less: String,
    pub dimension: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedWord {
    pub more: Word,
    pub less: Word,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub pair_id: String,
    pub dimension: String,
    pub sent_more: String,
    pub sent_less: String,
    /// Shared words in sentence order (identical order on both sides).
    pub shared: Vec<SharedWord>,
    pub modified_more: Vec<Word>,
    pub modified_less: Vec<Word>,
}

impl AlignedPair {
    /// All words of the more-biased sentence in position order.
    pub fn words_more(&self) -> Vec<&Word> {
        merge_by_position(self.shared.iter().map(|s| &s.more), &self.modified_more)
    }

    pub fn words_less(&self) -> Vec<&Word> {
        merge_by_position(self.shared.iter().map(|s| &s.less), &self.modified_less)
    }

    /// Span of the first modified word on each side: `(more, less)`.
    pub fn first_modified_starts(&self) -> (usize, usize) {
        (
            self.modified_more.first().map_or(usize::MAX, |w| w.span.start),
            self.modified_less.first().map_or(usize::MAX, |w| w.span.start),
        )
    }
}

fn merge_by_position<'a>(
    shared: impl Iterator<Item = &'a Word>,
    modified: &'a [Word],
) -> Vec<&'a Word> {
    let mut all: Vec<&Word> = shared.chain(modified.iter()).collect();
    all.sort_by_key(|w| w.position);
    all
}

/// Rebuilds a sentence from its words and the original inter-word text.
pub fn reconstruct(sentence: &str, words: &[&Word]) -> String {
    let mut out = String::with_capacity(sentence.len());
    let mut cursor = 0;
    for w in words {
        out.push_str(&sentence[cursor..w.span.start]);
        out.push_str(&w.surface);
        cursor = w.span.end;
    }
    out.push_str(&sentence[cursor..]);
    out
}

/// Index pairs `(i, j)` of a longest common subsequence of `a` and `b`.
pub fn lcs_indices<T: PartialEq>(a: &[T], b: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    // suffix[i][j] = LCS length of a[i..] and b[j..]
    let width = m + 1;
    let mut suffix = vec![0usize; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * width + j] = if a[i] == b[j] {
                1 + suffix[(i + 1) * width + j + 1]
            } else {
                suffix[(i + 1) * width + j].max(suffix[i * width + j + 1])
            };
        }
    }

    let mut out = Vec::with_capacity(suffix[0]);
    let mut j = 0;
    for i in 0..n {
        let remaining = suffix[i * width + j];
        if remaining == 0 {
            break;
        }
        // Earliest match for a[i] at or after j that still allows a maximal
        // completion; if none exists a[i] is skipped.
        if let Some(k) = (j..m).find(|&k| a[i] == b[k]) {
            if 1 + suffix[(i + 1) * width + k + 1] == remaining {
                out.push((i, k));
                j = k + 1;
            }
        }
    }
    out
}

pub fn align_pair(pair: &ChallengePair) -> Result<AlignedPair, AlignmentError> {
    align_pair_with(pair, SplitOptions::default())
}

pub fn align_pair_with(
    pair: &ChallengePair,
    options: SplitOptions,
) -> Result<AlignedPair, AlignmentError> {
    let more = split_words_with(&pair.sent_more, options);
    let less = split_words_with(&pair.sent_less, options);
    if more.is_empty() {
        return Err(AlignmentError::EmptySentence {
            pair_id: pair.id.clone(),
            side: "more",
        });
    }
    if less.is_empty() {
        return Err(AlignmentError::EmptySentence {
            pair_id: pair.id.clone(),
            side: "less",
        });
    }

    let more_surfaces: Vec<&str> = more.iter().map(|w| w.surface.as_str()).collect();
    let less_surfaces: Vec<&str> = less.iter().map(|w| w.surface.as_str()).collect();
    let matches = lcs_indices(&more_surfaces, &less_surfaces);

    let mut in_lcs_more = vec![false; more.len()];
    let mut in_lcs_less = vec![false; less.len()];
    for &(i, j) in &matches {
        in_lcs_more[i] = true;
        in_lcs_less[j] = true;
    }
    let modified_more: Vec<Word> = more
        .iter()
        .zip(&in_lcs_more)
        .filter(|(_, &shared)| !shared)
        .map(|(w, _)| w.clone())
        .collect();
    let modified_less: Vec<Word> = less
        .iter()
        .zip(&in_lcs_less)
        .filter(|(_, &shared)| !shared)
        .map(|(w, _)| w.clone())
        .collect();
    if modified_more.is_empty() {
        return Err(AlignmentError::NoModifiedWords {
            pair_id: pair.id.clone(),
            side: "more",
        });
    }
    if modified_less.is_empty() {
        return Err(AlignmentError::NoModifiedWords {
            pair_id: pair.id.clone(),
            side: "less",
        });
    }

    let shared = matches
        .into_iter()
        .map(|(i, j)| SharedWord {
            more: more[i].clone(),
            less: less[j].clone(),
        })
        .collect();

    Ok(AlignedPair {
        pair_id: pair.id.clone(),
        dimension: pair.dimension.clone(),
        sent_more: pair.sent_more.clone(),
        sent_less: pair.sent_less.clone(),
        shared,
        modified_more,
        modified_less,
    })
}
