//! Semantic-field aggregation of attribution records.
//!
//! Counting is occurrence-level: every scored word occurrence adds one count
//! to each tag of its word.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::attribution::{AttributionRecord, Direction};

/// Reserved tag for stopwords.
pub const STOPWORD_TAG: &str = "stopword";
/// Reserved tag for words missing from the lexicon.
pub const UNTAGGED_TAG: &str = "UNTAGGED";

pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.01;

pub fn case_fold(word: &str) -> String {
    word.to_lowercase()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconEntry {
    pub translations: Vec<String>,
    /// Union of all tags given for the word, in first-seen order.
    pub tags: Vec<String>,
}

/// Word → translation and semantic tags, keyed by case-folded surface.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagLexicon {
    entries: BTreeMap<String, LexiconEntry>,
    stopwords: BTreeSet<String>,
}

impl TagLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a word, merging with any existing entry. A tag equal to
    /// [`STOPWORD_TAG`] (any case) marks the word as a stopword instead.
    pub fn insert<'a>(
        &mut self,
        word: &str,
        translation: Option<&str>,
        tags: impl IntoIterator<Item = &'a str>,
    ) {
        let key = case_fold(word);
        let entry = self.entries.entry(key.clone()).or_default();
        if let Some(t) = translation.filter(|t| !t.is_empty()) {
            if !entry.translations.iter().any(|x| x == t) {
                entry.translations.push(String::from(t));
            }
        }
        for tag in tags.into_iter().map(str::trim).filter(|t| !t.is_empty()) {
            if tag.eq_ignore_ascii_case(STOPWORD_TAG) {
                self.stopwords.insert(key.clone());
            } else if !entry.tags.iter().any(|x| x == tag) {
                entry.tags.push(String::from(tag));
            }
        }
    }

    pub fn insert_stopword(&mut self, word: &str) {
        self.stopwords.insert(case_fold(word));
    }

    pub fn get(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(&case_fold(word))
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&case_fold(word))
    }

    pub fn translation(&self, word: &str) -> Option<&str> {
        self.get(word)
            .and_then(|e| e.translations.first())
            .map(String::as_str)
    }

    /// Words with neither a tag nor stopword status.
    pub fn untagged_entries(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(k, e)| e.tags.is_empty() && !self.stopwords.contains(*k))
            .map(|(k, _)| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.stopwords.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Tags an occurrence of `word` is counted under.
    pub fn tags_for(&self, word: &str) -> Vec<&str> {
        let key = case_fold(word);
        if self.stopwords.contains(&key) {
            return alloc::vec![STOPWORD_TAG];
        }
        match self.entries.get(&key) {
            Some(e) if !e.tags.is_empty() => e.tags.iter().map(String::as_str).collect(),
            _ => alloc::vec![UNTAGGED_TAG],
        }
    }
}

/// Minimum occurrence count kept by [`frequency_filter`].
pub fn frequency_threshold(threshold_fraction: f64, total: usize) -> usize {
    let raw = threshold_fraction * total as f64;
    // 0.07 * 100 evaluates to 7.000000000000001; strip that drift before ceil.
    libm::ceil(raw - raw * 1e-12) as usize
}

/// Keeps records whose case-folded word occurs at least
/// `ceil(threshold_fraction * records.len())` times.
pub fn frequency_filter(
    records: &[AttributionRecord],
    threshold_fraction: f64,
) -> Vec<AttributionRecord> {
    let min = frequency_threshold(threshold_fraction, records.len());
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(case_fold(r.surface())).or_default() += 1;
    }
    records
        .iter()
        .filter(|r| counts[&case_fold(r.surface())] >= min)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticSummary {
    pub tag: String,
    pub n_up: usize,
    pub n_zero: usize,
    pub n_down: usize,
    pub pct_up: f64,
    pub pct_zero: f64,
    pub pct_down: f64,
}

impl SemanticSummary {
    fn from_counts(tag: String, n_up: usize, n_zero: usize, n_down: usize) -> Self {
        let total = (n_up + n_zero + n_down) as f64;
        let pct = |n: usize| 100.0 * n as f64 / total;
        Self {
            tag,
            n_up,
            n_zero,
            n_down,
            pct_up: pct(n_up),
            pct_zero: pct(n_zero),
            pct_down: pct(n_down),
        }
    }

    pub fn total(&self) -> usize {
        self.n_up + self.n_zero + self.n_down
    }

    pub fn is_reserved_stopword(&self) -> bool {
        self.tag == STOPWORD_TAG
    }
}

fn rank_order(a: &SemanticSummary, b: &SemanticSummary) -> Ordering {
    b.pct_up
        .total_cmp(&a.pct_up)
        .then(b.n_up.cmp(&a.n_up))
        .then_with(|| a.tag.cmp(&b.tag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticReport {
    /// Every tag, reserved ones included, in rank order.
    pub summaries: Vec<SemanticSummary>,
    /// Case-folded words that were routed to [`UNTAGGED_TAG`].
    pub untagged_words: BTreeSet<String>,
}

impl SemanticReport {
    /// Summaries eligible for ranking; the stopword tag is dropped unless asked for.
    pub fn ranked(&self, include_stopwords: bool) -> Vec<SemanticSummary> {
        self.summaries
            .iter()
            .filter(|s| include_stopwords || !s.is_reserved_stopword())
            .cloned()
            .collect()
    }
}

pub fn summarize(records: &[AttributionRecord], lexicon: &TagLexicon) -> SemanticReport {
    let mut counts: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    let mut untagged_words = BTreeSet::new();
    for r in records {
        let slot = match r.direction {
            Direction::MoreBias => 0,
            Direction::Neutral => 1,
            Direction::LessBias => 2,
        };
        for tag in lexicon.tags_for(r.surface()) {
            if tag == UNTAGGED_TAG {
                untagged_words.insert(case_fold(r.surface()));
            }
            counts.entry(tag).or_default()[slot] += 1;
        }
    }
    let mut summaries: Vec<SemanticSummary> = counts
        .into_iter()
        .map(|(tag, [up, zero, down])| SemanticSummary::from_counts(String::from(tag), up, zero, down))
        .collect();
    summaries.sort_by(rank_order);
    SemanticReport {
        summaries,
        untagged_words,
    }
}

/// First `k` summaries in rank order.
pub fn top_k(summaries: &[SemanticSummary], k: usize) -> Vec<SemanticSummary> {
    let mut sorted = summaries.to_vec();
    sorted.sort_by(rank_order);
    sorted.truncate(k);
    sorted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::SubwordBreakdown;
    use crate::text::Word;
    use alloc::string::ToString;
    use alloc::vec;

    fn record(word: &str, b: f64) -> AttributionRecord {
        let w = Word {
            surface: word.to_string(),
            span: 0..word.len(),
            position: 0,
        };
        AttributionRecord {
            pair_id: "p".to_string(),
            word_more: w.clone(),
            word_less: w,
            breakdown: SubwordBreakdown::Paired(vec![]),
            b_word: b,
            direction: Direction::classify(b, 1e-12),
        }
    }

    fn lexicon() -> TagLexicon {
        let mut lex = TagLexicon::new();
        lex.insert("katulong", Some("helper"), ["People"]);
        lex.insert("babae", Some("female"), ["People: female"]);
        lex.insert("ni", Some("(marker)"), ["stopword"]);
        lex.insert("bahay", Some("house"), ["Architecture", "Objects generally"]);
        lex
    }

    #[test]
    fn lexicon_merges_and_folds_case() {
        let mut lex = lexicon();
        lex.insert("Katulong", Some("maid"), ["People", "Work and employment"]);
        let e = lex.get("KATULONG").unwrap();
        assert_eq!(e.tags, vec!["People", "Work and employment"]);
        assert_eq!(e.translations, vec!["helper", "maid"]);
        assert!(lex.is_stopword("Ni"));
        assert_eq!(lex.translation("ni"), Some("(marker)"));
    }

    #[test]
    fn eighty_zero_twenty() {
        let lex = lexicon();
        let records: Vec<_> = [-0.1, -0.2, -0.01, -0.3, 0.2]
            .iter()
            .map(|&b| record("babae", b))
            .collect();
        let report = summarize(&records, &lex);
        let s = &report.summaries[0];
        assert_eq!(s.tag, "People: female");
        assert_eq!((s.n_up, s.n_zero, s.n_down), (4, 0, 1));
        assert_eq!((s.pct_up, s.pct_zero, s.pct_down), (80.0, 0.0, 20.0));
    }

    #[test]
    fn multi_tag_counts_under_each() {
        let report = summarize(&[record("bahay", -0.1)], &lexicon());
        let tags: Vec<&str> = report.summaries.iter().map(|s| s.tag.as_str()).collect();
        assert_eq!(tags, vec!["Architecture", "Objects generally"]);
        assert!(report.summaries.iter().all(|s| s.n_up == 1));
    }

    #[test]
    fn stopwords_and_untagged() {
        let report = summarize(&[record("ni", 0.1), record("kung", 0.0)], &lexicon());
        assert!(report.untagged_words.contains("kung"));
        let ranked = report.ranked(false);
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].tag, UNTAGGED_TAG);
        assert_eq!(report.ranked(true).len(), 2);
    }

    #[test]
    fn all_neutral() {
        let records: Vec<_> = ["katulong", "babae", "bahay"].iter().map(|w| record(w, 0.0)).collect();
        for s in summarize(&records, &lexicon()).summaries {
            assert_eq!((s.pct_up, s.pct_zero, s.pct_down), (0.0, 100.0, 0.0));
        }
    }

    #[test]
    fn threshold_boundaries() {
        assert_eq!(frequency_threshold(0.01, 1000), 10);
        assert_eq!(frequency_threshold(0.07, 100), 7);
        assert_eq!(frequency_threshold(0.01, 1001), 11);
        assert_eq!(frequency_threshold(0.0, 1000), 0);
        assert_eq!(frequency_threshold(0.1, 25), 3);
    }

    #[test]
    fn filter_keeps_exact_threshold() {
        // 20 occurrences, threshold 0.1 -> min 2
        let mut records = vec![record("a", 0.0), record("A", 0.0), record("b", 0.0)];
        records.extend((0..17).map(|_| record("c", 0.0)));
        let kept = frequency_filter(&records, 0.1);
        let words: BTreeSet<String> = kept.iter().map(|r| case_fold(r.surface())).collect();
        assert_eq!(words, ["a", "c"].iter().map(|s| s.to_string()).collect());
        assert_eq!(kept.len(), 19);
        assert_eq!(frequency_filter(&records, 0.0), records);
    }

    #[test]
    fn top_k_ordering_and_ties() {
        let mk = |tag: &str, up, zero, down| SemanticSummary::from_counts(tag.to_string(), up, zero, down);
        let summaries = vec![
            mk("b", 1, 1, 0),
            mk("a", 1, 1, 0),
            mk("c", 2, 2, 0),
            mk("d", 3, 0, 0),
        ];
        let top = top_k(&summaries, 10);
        let tags: Vec<&str> = top.iter().map(|s| s.tag.as_str()).collect();
        assert_eq!(tags, vec!["d", "c", "a", "b"]);
        assert_eq!(top_k(&summaries, 2).len(), 2);
    }
}
