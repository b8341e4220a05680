//! End-to-end runs: load inputs, analyze every pair, write artifacts and a
//! manifest.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! attribution/0000-<pair id>.{json,csv,md}
//! bias_scores.{json,csv,md}
//! semantics.{json,csv,md}
//! manifest.json
//! ```
//!
//! Everything except `manifest.json` is a pure function of the inputs and the
//! backend's answers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bias_attribution_core::{
    aggregate, align_pair, analyze_pair, frequency_filter, summarize, top_k, AlignedPair,
    AttributionConfig, AttributionRecord, BackendError, BackendInfo, ChallengePair,
    PairAnalysis, PairPreference, Preferred, ScoringBackend, TagLexicon,
};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cache::CachedBackend;
use crate::dataset::{parse_dataset, DatasetFormat, Delimiter};
use crate::fixture::FixtureBackend;
use crate::http::{HttpBackend, HttpConfig};
use crate::lexicon::{load_lexicon, load_stopwords};
use crate::report::{render_bias_report, render_semantics, Format, PairTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Attribute,
    Score,
    Semantics,
    All,
}

impl Command {
    fn attributes(self) -> bool {
        matches!(self, Command::Attribute | Command::All)
    }

    fn scores(self) -> bool {
        matches!(self, Command::Score | Command::All)
    }

    fn semantics(self) -> bool {
        matches!(self, Command::Semantics | Command::All)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendSource {
    Url(String),
    Fixture(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_path: PathBuf,
    pub backend: BackendSource,
    pub lexicon_path: Option<PathBuf>,
    /// Extra stopwords, one per line.
    pub stopwords_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub formats: BTreeSet<Format>,
    pub threshold_fraction: f64,
    pub zero_tol: f64,
    pub parallelism: usize,
    pub include_stopwords_in_ranking: bool,
    pub punctuation_scoring: bool,
    pub top_k: usize,
    /// JSON-lines probe cache kept across runs.
    pub cache_path: Option<PathBuf>,
    pub dataset_format: DatasetFormat,
    pub bearer_token: Option<String>,
    pub request_timeout: Duration,
    pub max_batch: usize,
}

impl RunConfig {
    pub fn new(dataset_path: impl Into<PathBuf>, backend: BackendSource, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            dataset_path: dataset_path.into(),
            backend,
            lexicon_path: None,
            stopwords_path: None,
            output_dir: output_dir.into(),
            formats: [Format::Json, Format::Csv, Format::Markdown].into_iter().collect(),
            threshold_fraction: bias_attribution_core::semantics::DEFAULT_THRESHOLD_FRACTION,
            zero_tol: bias_attribution_core::attribution::DEFAULT_ZERO_TOL,
            parallelism: 4,
            include_stopwords_in_ranking: false,
            punctuation_scoring: false,
            top_k: 10,
            cache_path: None,
            dataset_format: DatasetFormat::default(),
            bearer_token: None,
            request_timeout: Duration::from_secs(120),
            max_batch: 64,
        }
    }

    fn snapshot(&self, command: Command) -> ConfigSnapshot {
        let (backend_url, fixture_path) = match &self.backend {
            BackendSource::Url(u) => (Some(u.clone()), None),
            BackendSource::Fixture(p) => (None, Some(display(p))),
        };
        ConfigSnapshot {
            command,
            dataset_path: display(&self.dataset_path),
            backend_url,
            fixture_path,
            lexicon_path: self.lexicon_path.as_deref().map(display),
            stopwords_path: self.stopwords_path.as_deref().map(display),
            output_dir: display(&self.output_dir),
            formats: self.formats.iter().map(|f| f.as_str()).collect(),
            threshold_fraction: self.threshold_fraction,
            zero_tol: self.zero_tol,
            parallelism: self.parallelism,
            include_stopwords_in_ranking: self.include_stopwords_in_ranking,
            punctuation_scoring: self.punctuation_scoring,
            top_k: self.top_k,
            cache_path: self.cache_path.as_deref().map(display),
            delimiter: match self.dataset_format.delimiter {
                Delimiter::Auto => "auto",
                Delimiter::Comma => "comma",
                Delimiter::Tab => "tab",
            },
            sent_more_column: self.dataset_format.sent_more_column.clone(),
            sent_less_column: self.dataset_format.sent_less_column.clone(),
            dimension_column: self.dataset_format.dimension_column.clone(),
            id_column: self.dataset_format.id_column.clone(),
            dimensions: self.dataset_format.dimensions.clone(),
            bearer_token_set: self.bearer_token.is_some(),
            request_timeout_secs: self.request_timeout.as_secs_f64(),
            max_batch: self.max_batch,
        }
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExitStatus {
    Success = 0,
    Validation = 1,
    Backend = 2,
    Partial = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSnapshot {
    pub command: Command,
    pub dataset_path: String,
    pub backend_url: Option<String>,
    pub fixture_path: Option<String>,
    pub lexicon_path: Option<String>,
    pub stopwords_path: Option<String>,
    pub output_dir: String,
    pub formats: Vec<&'static str>,
    pub threshold_fraction: f64,
    pub zero_tol: f64,
    pub parallelism: usize,
    pub include_stopwords_in_ranking: bool,
    pub punctuation_scoring: bool,
    pub top_k: usize,
    pub cache_path: Option<String>,
    pub delimiter: &'static str,
    pub sent_more_column: String,
    pub sent_less_column: String,
    pub dimension_column: String,
    pub id_column: Option<String>,
    pub dimensions: Option<Vec<String>>,
    pub bearer_token_set: bool,
    pub request_timeout_secs: f64,
    pub max_batch: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Notice {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    pub message: String,
}

impl Notice {
    fn new(kind: &'static str, pair_id: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            kind,
            pair_id: pair_id.map(str::to_string),
            message: message.into(),
        }
    }
}

pub mod warning {
    pub const ASYMMETRIC_SPLIT: &str = "asymmetric_split";
    pub const UNTAGGED_WORD: &str = "untagged_word";
    pub const DROPPED_ROW: &str = "dropped_row";
    pub const TIE: &str = "tie";
    pub const MISSING_TRANSLATION: &str = "missing_translation";
    pub const EMPTY_SEMANTICS: &str = "empty_semantics";
    pub const CACHE: &str = "cache";
}

pub mod error_kind {
    pub const VALIDATION: &str = "validation";
    pub const BACKEND: &str = "backend";
    pub const ATTRIBUTION: &str = "attribution";
    pub const PREFERENCE: &str = "preference";
    pub const OUTPUT: &str = "output";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendSummary {
    pub model_name: String,
    pub paradigm: &'static str,
    pub vocab_size: u64,
    pub mask_token: Option<String>,
}

impl From<&BackendInfo> for BackendSummary {
    fn from(info: &BackendInfo) -> Self {
        Self {
            model_name: info.model_name.clone(),
            paradigm: info.paradigm.as_str(),
            vocab_size: info.vocab_size,
            mask_token: info.mask_token.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub config: ConfigSnapshot,
    pub backend: Option<BackendSummary>,
    pub dataset_sha256: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub pairs_total: usize,
    pub pairs_completed: usize,
    pub warnings: Vec<Notice>,
    pub errors: Vec<Notice>,
    pub outputs: Vec<OutputFile>,
    pub exit_code: i32,
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub manifest: RunManifest,
    /// `None` when the output directory could not be created.
    pub manifest_path: Option<PathBuf>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File-name-safe form of a pair id.
pub fn sanitize_id(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .take(64)
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        "pair".to_string()
    } else {
        s
    }
}

type DynBackend = Box<dyn ScoringBackend + Send + Sync>;

struct Run<'a> {
    config: &'a RunConfig,
    command: Command,
    started_at: String,
    backend: Option<BackendSummary>,
    dataset_sha256: Option<String>,
    pairs_total: usize,
    pairs_completed: usize,
    warnings: Vec<Notice>,
    errors: Vec<Notice>,
    outputs: Vec<OutputFile>,
}

impl Run<'_> {
    fn warn(&mut self, kind: &'static str, pair_id: Option<&str>, message: impl Into<String>) {
        let n = Notice::new(kind, pair_id, message);
        log::warn!("{}", n.message);
        self.warnings.push(n);
    }

    fn error(&mut self, kind: &'static str, pair_id: Option<&str>, message: impl Into<String>) {
        let n = Notice::new(kind, pair_id, message);
        log::error!("{}", n.message);
        self.errors.push(n);
    }

    fn write(&mut self, relative: &str, contents: &str) {
        let path = self.config.output_dir.join(relative);
        let result = path
            .parent()
            .map_or(Ok(()), fs::create_dir_all)
            .and_then(|_| fs::write(&path, contents));
        match result {
            Ok(()) => self.outputs.push(OutputFile {
                path: relative.to_string(),
                sha256: sha256_hex(contents.as_bytes()),
            }),
            Err(e) => self.error(error_kind::OUTPUT, None, format!("writing {}: {e}", path.display())),
        }
    }

    fn finish(mut self, status: ExitStatus) -> RunOutcome {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            config: self.config.snapshot(self.command),
            backend: self.backend.take(),
            dataset_sha256: self.dataset_sha256.take(),
            started_at: self.started_at.clone(),
            finished_at: now(),
            pairs_total: self.pairs_total,
            pairs_completed: self.pairs_completed,
            warnings: std::mem::take(&mut self.warnings),
            errors: std::mem::take(&mut self.errors),
            outputs: std::mem::take(&mut self.outputs),
            exit_code: status.code(),
        };
        let path = self.config.output_dir.join(MANIFEST_FILE);
        let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        body.push('\n');
        let manifest_path = match fs::create_dir_all(&self.config.output_dir).and_then(|_| fs::write(&path, body)) {
            Ok(()) => Some(path),
            Err(e) => {
                log::error!("writing {}: {e}", path.display());
                None
            }
        };
        RunOutcome {
            status,
            manifest,
            manifest_path,
        }
    }

    fn fail(mut self, status: ExitStatus, kind: &'static str, message: impl Into<String>) -> RunOutcome {
        self.error(kind, None, message);
        self.finish(status)
    }
}

fn validate(config: &RunConfig, command: Command) -> Result<(), String> {
    let readable = |label: &str, p: &Path| -> Result<(), String> {
        if p.is_file() {
            Ok(())
        } else {
            Err(format!("{label} {} is not a readable file", p.display()))
        }
    };
    readable("dataset", &config.dataset_path)?;
    if let BackendSource::Fixture(p) = &config.backend {
        readable("fixture", p)?;
    }
    if let BackendSource::Url(u) = &config.backend {
        if !(u.starts_with("http://") || u.starts_with("https://")) {
            return Err(format!("backend URL {u:?} must start with http:// or https://"));
        }
    }
    match &config.lexicon_path {
        Some(p) => readable("lexicon", p)?,
        None if command.semantics() => return Err("a lexicon is required for semantic summaries".to_string()),
        None => {}
    }
    if let Some(p) = &config.stopwords_path {
        readable("stopword list", p)?;
    }
    if config.formats.is_empty() {
        return Err("at least one output format is required".to_string());
    }
    if !(0.0..=1.0).contains(&config.threshold_fraction) {
        return Err(format!("threshold fraction {} is outside [0, 1]", config.threshold_fraction));
    }
    if !(config.zero_tol.is_finite() && config.zero_tol >= 0.0) {
        return Err(format!("zero tolerance {} must be finite and non-negative", config.zero_tol));
    }
    if config.parallelism == 0 {
        return Err("parallelism must be positive".to_string());
    }
    if config.max_batch == 0 {
        return Err("max batch must be positive".to_string());
    }
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", config.output_dir.display()))
}

fn open_backend(config: &RunConfig) -> Result<DynBackend, (ExitStatus, String)> {
    match &config.backend {
        BackendSource::Fixture(path) => FixtureBackend::load(path)
            .map(|b| Box::new(b) as DynBackend)
            .map_err(|e| (ExitStatus::Validation, e.to_string())),
        BackendSource::Url(url) => {
            let mut http = HttpConfig::new(url.clone());
            http.bearer_token = config.bearer_token.clone();
            http.timeout = config.request_timeout;
            http.parallelism = config.parallelism;
            http.max_batch = config.max_batch;
            HttpBackend::new(http)
                .map(|b| Box::new(b) as DynBackend)
                .map_err(|e| (ExitStatus::Backend, e.to_string()))
        }
    }
}

fn load_lexicon_files(config: &RunConfig) -> Result<Option<TagLexicon>, String> {
    let Some(path) = &config.lexicon_path else {
        return Ok(None);
    };
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lexicon = load_lexicon(file).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(path) = &config.stopwords_path {
        let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        load_stopwords(file, &mut lexicon).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(Some(lexicon))
}

pub fn run(config: &RunConfig, command: Command) -> RunOutcome {
    let mut run = Run {
        config,
        command,
        started_at: now(),
        backend: None,
        dataset_sha256: None,
        pairs_total: 0,
        pairs_completed: 0,
        warnings: Vec::new(),
        errors: Vec::new(),
        outputs: Vec::new(),
    };

    if let Err(message) = validate(config, command) {
        return run.fail(ExitStatus::Validation, error_kind::VALIDATION, message);
    }

    let bytes = match fs::read(&config.dataset_path) {
        Ok(b) => b,
        Err(e) => {
            let message = format!("{}: {e}", config.dataset_path.display());
            return run.fail(ExitStatus::Validation, error_kind::VALIDATION, message);
        }
    };
    run.dataset_sha256 = Some(sha256_hex(&bytes));
    let dataset = match parse_dataset(bytes.as_slice(), &config.dataset_format) {
        Ok(d) => d,
        Err(e) => {
            let message = format!("{}: {e}", config.dataset_path.display());
            return run.fail(ExitStatus::Validation, error_kind::VALIDATION, message);
        }
    };
    for r in &dataset.row_errors {
        let message = format!("row {} dropped: {}", r.row, r.message);
        run.warn(warning::DROPPED_ROW, r.id.as_deref(), message);
    }

    let lexicon = match load_lexicon_files(config) {
        Ok(l) => l,
        Err(message) => return run.fail(ExitStatus::Validation, error_kind::VALIDATION, message),
    };

    let inner = match open_backend(config) {
        Ok(b) => b,
        Err((status, message)) => {
            let kind = if status == ExitStatus::Backend { error_kind::BACKEND } else { error_kind::VALIDATION };
            return run.fail(status, kind, message);
        }
    };
    let cached = match &config.cache_path {
        Some(path) => CachedBackend::with_store(inner, path),
        None => CachedBackend::new(inner),
    };
    let backend = match cached {
        Ok(b) => b,
        Err(e) => return run.fail(ExitStatus::Backend, error_kind::BACKEND, format!("backend info: {e}")),
    };
    let info = backend.info().expect("cached info");
    run.backend = Some(BackendSummary::from(&info));
    for w in backend.warnings() {
        run.warn(warning::CACHE, None, w);
    }

    let mut aligned: Vec<(usize, &ChallengePair, AlignedPair)> = Vec::new();
    for (index, pair) in dataset.pairs.iter().enumerate() {
        match align_pair(pair) {
            Ok(a) => aligned.push((index, pair, a)),
            Err(e) => run.warn(warning::DROPPED_ROW, Some(&pair.id), format!("pair {} dropped: {e}", pair.id)),
        }
    }
    run.pairs_total = aligned.len();

    let attribution_config = AttributionConfig {
        zero_tol: config.zero_tol,
        score_punctuation: config.punctuation_scoring,
    };
    let analyses: Vec<Result<PairAnalysis, BackendError>> = match rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
    {
        Ok(pool) => pool.install(|| {
            aligned
                .par_iter()
                .map(|(_, _, a)| analyze_pair(a, &backend, &attribution_config))
                .collect()
        }),
        Err(e) => return run.fail(ExitStatus::Validation, error_kind::VALIDATION, format!("thread pool: {e}")),
    };

    let mut backend_failures = 0usize;
    let mut incomplete = 0usize;
    let mut all_records: Vec<AttributionRecord> = Vec::new();
    let mut preferences: Vec<PairPreference> = Vec::new();
    let mut scored_pairs: Vec<ChallengePair> = Vec::new();
    let mut missing_translations: BTreeMap<String, String> = BTreeMap::new();

    for ((index, pair, aligned), analysis) in aligned.iter().zip(&analyses) {
        let id = pair.id.as_str();
        let analysis = match analysis {
            Ok(a) => a,
            Err(e) => {
                backend_failures += 1;
                run.error(error_kind::BACKEND, Some(id), format!("pair {id}: {e}"));
                continue;
            }
        };
        let attribution = &analysis.attribution;
        let mut pair_errors: Vec<String> = Vec::new();
        for e in &attribution.errors {
            pair_errors.push(e.to_string());
            run.error(error_kind::ATTRIBUTION, Some(id), format!("pair {id}: {e}"));
        }
        let preference = match &analysis.preference {
            Ok(p) => Some(p),
            Err(e) => {
                pair_errors.push(e.to_string());
                run.error(error_kind::PREFERENCE, Some(id), format!("pair {id}: {e}"));
                None
            }
        };
        if pair_errors.is_empty() {
            run.pairs_completed += 1;
        } else {
            incomplete += 1;
        }

        for r in &attribution.records {
            if r.is_asymmetric() {
                let message = format!(
                    "pair {id}: {:?} splits into different subword counts in the two sentences",
                    r.surface()
                );
                run.warn(warning::ASYMMETRIC_SPLIT, Some(id), message);
            }
        }
        if let Some(p) = preference {
            if p.preferred == Preferred::Tie && command.scores() {
                run.warn(warning::TIE, Some(id), format!("pair {id}: sentence scores tie"));
            }
            preferences.push(p.clone());
            scored_pairs.push((*pair).clone());
        }

        if command.attributes() {
            if let Some(lex) = &lexicon {
                for r in &attribution.records {
                    if lex.translation(r.surface()).is_none() {
                        missing_translations
                            .entry(bias_attribution_core::semantics::case_fold(r.surface()))
                            .or_insert_with(|| id.to_string());
                    }
                }
            }
            let table = PairTable {
                aligned,
                records: &attribution.records,
                preference,
                errors: &pair_errors,
                lexicon: lexicon.as_ref(),
            };
            for &format in &config.formats {
                let name = format!("attribution/{index:04}-{}.{}", sanitize_id(id), format.extension());
                run.write(&name, &table.render(format));
            }
        }
        all_records.extend(attribution.records.iter().cloned());
    }

    if command.attributes() {
        if lexicon.is_none() {
            run.warn(warning::MISSING_TRANSLATION, None, "no lexicon given; every translation is rendered as \"?\"");
        }
        for (word, first_pair) in missing_translations {
            let message = format!("{word:?} has no translation in the lexicon");
            run.warn(warning::MISSING_TRANSLATION, Some(&first_pair), message);
        }
    }

    if command.scores() {
        match aggregate(&preferences, &scored_pairs) {
            Ok(report) => {
                for &format in &config.formats {
                    let name = format!("bias_scores.{}", format.extension());
                    run.write(&name, &render_bias_report(&report, &preferences, format));
                }
            }
            Err(e) => run.error(error_kind::PREFERENCE, None, e.to_string()),
        }
    }

    if command.semantics() {
        let lexicon = lexicon.as_ref().expect("validated");
        let kept = frequency_filter(&all_records, config.threshold_fraction);
        if kept.is_empty() {
            run.warn(warning::EMPTY_SEMANTICS, None, "no scored words survive the frequency filter");
        }
        let report = summarize(&kept, lexicon);
        for word in &report.untagged_words {
            run.warn(warning::UNTAGGED_WORD, None, format!("{word:?} has no semantic tag"));
        }
        let rows = top_k(&report.ranked(config.include_stopwords_in_ranking), config.top_k);
        for &format in &config.formats {
            let name = format!("semantics.{}", format.extension());
            run.write(&name, &render_semantics(&rows, format));
        }
    }

    let output_failed = run.errors.iter().any(|e| e.kind == error_kind::OUTPUT);
    let status = if run.pairs_total > 0 && backend_failures == run.pairs_total {
        ExitStatus::Backend
    } else if backend_failures > 0 || incomplete > 0 || output_failed {
        ExitStatus::Partial
    } else {
        ExitStatus::Success
    };
    run.finish(status)
}
