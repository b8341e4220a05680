//! Deterministic in-process backends for tests and offline runs.
//!
//! A fixture file is JSON:
//!
//! ```json
//! {
//!   "kind": "table",
//!   "model_name": "fixture-masked",
//!   "paradigm": "masked",
//!   "vocab_size": 64,
//!   "mask_token": "<MASK>",
//!   "pieces": {"nakikipagtalik": ["na", "ki", "ki", "pag", "talik"]},
//!   "sentence_pieces": {"<sentence>": {"bahay": ["ba", "hay"]}},
//!   "probabilities": {"<sentence>": {"0": 0.6, "3": 0.25}},
//!   "prefix_probabilities": {"Laging pinag": 0.4},
//!   "default": "hashed"
//! }
//! ```
//!
//! The tokenizer splits on whitespace and peels punctuation like
//! [`split_words`]; words listed in `pieces` become several subword tokens.
//! `sentence_pieces` overrides `pieces` within one sentence, which mimics
//! tokenizers whose splits depend on context.
//! A `table` backend resolves a probe from `probabilities[sentence][index]`,
//! then (causal only) from `prefix_probabilities` keyed by the space-joined
//! surfaces of the tokens up to and including the target, then from
//! `default`: a number, `"hashed"` (a pseudo-random probability derived from
//! exactly the context the paradigm allows the model to see) or absent (the
//! probe fails). A `uniform` backend returns `1 / vocab_size` everywhere.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use bias_attribution_core::{
    split_words, BackendError, BackendInfo, Paradigm, ProbeError, ProbeOutcome, ProbeRequest,
    ProbeResult, ScoringBackend, SubwordToken, TargetProbability,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::FixtureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixtureKind {
    Table,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DefaultProbability {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub model_name: String,
    pub paradigm: String,
    pub vocab_size: u64,
    #[serde(default)]
    pub mask_token: Option<String>,
    #[serde(default)]
    pub pieces: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub sentence_pieces: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    pub probabilities: BTreeMap<String, BTreeMap<usize, f64>>,
    #[serde(default)]
    pub prefix_probabilities: BTreeMap<String, f64>,
    #[serde(default)]
    pub default: Option<DefaultProbability>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fallback {
    None,
    Fixed(TargetProbability),
    Hashed,
}

#[derive(Debug)]
pub struct FixtureBackend {
    kind: FixtureKind,
    info: BackendInfo,
    pieces: BTreeMap<String, Vec<String>>,
    sentence_pieces: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    probabilities: BTreeMap<String, BTreeMap<usize, TargetProbability>>,
    prefix_probabilities: BTreeMap<String, TargetProbability>,
    fallback: Fallback,
    probe_calls: AtomicUsize,
    probed_requests: AtomicUsize,
}

fn probability(p: f64, what: &str) -> Result<TargetProbability, FixtureError> {
    TargetProbability::new(p).map_err(|_| FixtureError::Invalid(format!("{what}: probability {p} outside [0, 1]")))
}

fn hash_u64(parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

impl FixtureBackend {
    pub fn from_spec(spec: FixtureSpec) -> Result<Self, FixtureError> {
        let paradigm = Paradigm::parse(&spec.paradigm)
            .ok_or_else(|| FixtureError::Invalid(format!("unknown paradigm {:?}", spec.paradigm)))?;
        let info = BackendInfo {
            model_name: spec.model_name,
            paradigm,
            vocab_size: spec.vocab_size,
            mask_token: spec.mask_token,
        };
        info.validate().map_err(|e| FixtureError::Invalid(e.to_string()))?;

        for (word, pieces) in spec.pieces.iter().chain(spec.sentence_pieces.values().flatten()) {
            if pieces.is_empty() || pieces.iter().any(String::is_empty) || pieces.concat() != *word {
                return Err(FixtureError::Invalid(format!(
                    "pieces for {word:?} must be non-empty and concatenate to the word"
                )));
            }
        }
        let probabilities = spec
            .probabilities
            .into_iter()
            .map(|(sentence, table)| {
                let table = table
                    .into_iter()
                    .map(|(i, p)| Ok((i, probability(p, &format!("{sentence:?}[{i}]"))?)))
                    .collect::<Result<BTreeMap<_, _>, FixtureError>>()?;
                Ok((sentence, table))
            })
            .collect::<Result<BTreeMap<_, _>, FixtureError>>()?;
        let prefix_probabilities = spec
            .prefix_probabilities
            .into_iter()
            .map(|(k, p)| Ok((k.clone(), probability(p, &k)?)))
            .collect::<Result<BTreeMap<_, _>, FixtureError>>()?;
        if !prefix_probabilities.is_empty() && paradigm != Paradigm::Causal {
            return Err(FixtureError::Invalid(
                "prefix_probabilities only apply to causal fixtures".to_string(),
            ));
        }
        let fallback = match spec.default {
            None => Fallback::None,
            Some(DefaultProbability::Fixed(p)) => Fallback::Fixed(probability(p, "default")?),
            Some(DefaultProbability::Named(n)) if n == "hashed" => Fallback::Hashed,
            Some(DefaultProbability::Named(n)) => {
                return Err(FixtureError::Invalid(format!("unknown default {n:?}")))
            }
        };

        Ok(Self {
            kind: spec.kind,
            info,
            pieces: spec.pieces,
            sentence_pieces: spec.sentence_pieces,
            probabilities,
            prefix_probabilities,
            fallback,
            probe_calls: AtomicUsize::new(0),
            probed_requests: AtomicUsize::new(0),
        })
    }

    pub fn from_json(json: &str) -> Result<Self, FixtureError> {
        Self::from_spec(serde_json::from_str(json)?)
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// A uniform backend with the plain scripted tokenizer.
    pub fn uniform(model_name: &str, paradigm: Paradigm, vocab_size: u64) -> Self {
        Self::from_spec(FixtureSpec {
            kind: FixtureKind::Uniform,
            model_name: model_name.to_string(),
            paradigm: paradigm.as_str().to_string(),
            vocab_size,
            mask_token: (paradigm == Paradigm::Masked).then(|| "<MASK>".to_string()),
            pieces: BTreeMap::new(),
            sentence_pieces: BTreeMap::new(),
            probabilities: BTreeMap::new(),
            prefix_probabilities: BTreeMap::new(),
            default: None,
        })
        .expect("uniform fixture is valid")
    }

    /// Number of `probe` calls served so far.
    pub fn probe_calls(&self) -> usize {
        self.probe_calls.load(Ordering::SeqCst)
    }

    /// Number of individual probe requests served so far.
    pub fn probed_requests(&self) -> usize {
        self.probed_requests.load(Ordering::SeqCst)
    }

    fn token_id(&self, surface: &str) -> u64 {
        hash_u64(&[surface]) % self.info.vocab_size
    }

    fn scripted_tokens(&self, sentence: &str) -> Vec<SubwordToken> {
        let mut out = Vec::new();
        let overrides = self.sentence_pieces.get(sentence);
        for word in split_words(sentence) {
            let pieces = overrides
                .and_then(|o| o.get(&word.surface))
                .or_else(|| self.pieces.get(&word.surface));
            match pieces {
                Some(pieces) => {
                    let mut at = word.span.start;
                    for piece in pieces {
                        out.push(SubwordToken {
                            token_id: self.token_id(piece),
                            surface: piece.clone(),
                            span: at..at + piece.len(),
                        });
                        at += piece.len();
                    }
                }
                None => out.push(SubwordToken {
                    token_id: self.token_id(&word.surface),
                    surface: word.surface,
                    span: word.span,
                }),
            }
        }
        out
    }

    // Probability from the visible context only: all other tokens plus the
    // mask for masked models, the strict prefix for causal ones.
    fn hashed(&self, tokens: &[SubwordToken], index: usize) -> TargetProbability {
        let target = tokens[index].surface.as_str();
        let mut parts: Vec<&str> = vec![&self.info.model_name, target];
        match self.info.paradigm {
            Paradigm::Masked => {
                let mask = self.info.mask_token.as_deref().unwrap_or("<MASK>");
                parts.extend(
                    tokens
                        .iter()
                        .enumerate()
                        .map(|(i, t)| if i == index { mask } else { t.surface.as_str() }),
                );
            }
            Paradigm::Causal => parts.extend(tokens[..index].iter().map(|t| t.surface.as_str())),
        }
        let unit = (hash_u64(&parts) >> 11) as f64 / (1u64 << 53) as f64;
        TargetProbability::new(0.01 + 0.98 * unit).expect("value lies in [0.01, 0.99]")
    }

    fn resolve(&self, sentence: &str, tokens: &[SubwordToken], index: usize) -> Result<TargetProbability, ProbeError> {
        if self.kind == FixtureKind::Uniform {
            return Ok(TargetProbability::new(1.0 / self.info.vocab_size as f64).expect("1/n is a probability"));
        }
        if let Some(p) = self.probabilities.get(sentence).and_then(|t| t.get(&index)) {
            return Ok(*p);
        }
        if self.info.paradigm == Paradigm::Causal && !self.prefix_probabilities.is_empty() {
            let key = tokens[..=index]
                .iter()
                .map(|t| t.surface.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            if let Some(p) = self.prefix_probabilities.get(&key) {
                return Ok(*p);
            }
        }
        match self.fallback {
            Fallback::Fixed(p) => Ok(p),
            Fallback::Hashed => Ok(self.hashed(tokens, index)),
            Fallback::None => Err(ProbeError::Rejected(format!(
                "no scripted probability for token {index} of {sentence:?}"
            ))),
        }
    }
}

impl ScoringBackend for FixtureBackend {
    fn info(&self) -> Result<BackendInfo, BackendError> {
        Ok(self.info.clone())
    }

    fn tokenize(&self, sentence: &str) -> Result<Vec<SubwordToken>, BackendError> {
        Ok(self.scripted_tokens(sentence))
    }

    fn probe(&self, requests: &[ProbeRequest]) -> Result<Vec<ProbeOutcome>, BackendError> {
        self.probe_calls.fetch_add(1, Ordering::SeqCst);
        self.probed_requests.fetch_add(requests.len(), Ordering::SeqCst);
        let mut tokenized: BTreeMap<&str, Vec<SubwordToken>> = BTreeMap::new();
        Ok(requests
            .iter()
            .map(|r| {
                let tokens = tokenized
                    .entry(r.sentence.as_str())
                    .or_insert_with(|| self.scripted_tokens(&r.sentence));
                if r.token_index >= tokens.len() {
                    return Err(ProbeError::IndexOutOfRange {
                        index: r.token_index,
                        len: tokens.len(),
                    });
                }
                let p = self.resolve(&r.sentence, tokens, r.token_index)?;
                Ok(ProbeResult { request: r.clone(), p })
            })
            .collect())
    }
}
