use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use bias_attribution::dataset::{DatasetFormat, Delimiter};
use bias_attribution::http::TOKEN_ENV;
use bias_attribution::{run, BackendSource, Command, Format, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bias-attr", version, about = "Token-level bias attribution for minimal sentence pairs")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Per-pair attribution tables.
    Attribute(Opts),
    /// Sentence-preference bias scores per dimension and overall.
    Score(Opts),
    /// Semantic-tag summaries of attribution directions.
    Semantics(Opts),
    /// Attribution tables, bias scores and semantic summaries in one run.
    All(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum DelimiterArg {
    Auto,
    Comma,
    Tab,
}

#[derive(Args)]
struct Opts {
    /// Minimal-pair dataset (CSV or TSV).
    #[arg(long)]
    dataset: PathBuf,
    /// Base URL of a scoring backend.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    backend_url: Option<String>,
    /// JSON fixture backend instead of a live model.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Tab-separated lexicon: word, translation, tags separated by ';'.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Additional stopwords, one per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Directory for tables, reports and the run manifest.
    #[arg(long, short = 'o')]
    output_dir: PathBuf,
    /// Output formats; repeat or separate with commas.
    #[arg(long = "format", value_delimiter = ',', default_values_t = vec!["json".to_string(), "csv".to_string(), "markdown".to_string()])]
    formats: Vec<String>,
    /// Minimum word frequency for semantic summaries, as a fraction of all scored occurrences.
    #[arg(long, default_value_t = 0.01)]
    threshold_fraction: f64,
    /// Scores with magnitude at most this are neutral.
    #[arg(long, default_value_t = 1e-12)]
    zero_tol: f64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long)]
    include_stopwords_in_ranking: bool,
    /// Score punctuation tokens as words.
    #[arg(long)]
    punctuation_scoring: bool,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Persistent probe cache (JSON lines).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DelimiterArg::Auto)]
    delimiter: DelimiterArg,
    #[arg(long, default_value = "sent_more")]
    sent_more_column: String,
    #[arg(long, default_value = "sent_less")]
    sent_less_column: String,
    #[arg(long, default_value = "bias_type")]
    dimension_column: String,
    /// Pair id column; defaults to `id` if present, else the row number.
    #[arg(long)]
    id_column: Option<String>,
    /// Accepted bias dimensions; other rows are dropped.
    #[arg(long, value_delimiter = ',')]
    dimensions: Option<Vec<String>>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 120.0)]
    timeout: f64,
    /// Maximum probes per backend request.
    #[arg(long, default_value_t = 64)]
    max_batch: usize,
}

impl Opts {
    fn into_config(self) -> Result<RunConfig, String> {
        let backend = match (self.backend_url, self.fixture) {
            (Some(url), None) => BackendSource::Url(url),
            (None, Some(path)) => BackendSource::Fixture(path),
            _ => return Err("exactly one of --backend-url and --fixture is required".to_string()),
        };
        let formats = self
            .formats
            .iter()
            .map(|f| f.parse::<Format>())
            .collect::<Result<BTreeSet<_>, _>>()?;
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return Err(format!("--timeout must be positive, got {}", self.timeout));
        }
        let mut config = RunConfig::new(self.dataset, backend, self.output_dir);
        config.lexicon_path = self.lexicon;
        config.stopwords_path = self.stopwords;
        config.formats = formats;
        config.threshold_fraction = self.threshold_fraction;
        config.zero_tol = self.zero_tol;
        config.parallelism = self.parallelism;
        config.include_stopwords_in_ranking = self.include_stopwords_in_ranking;
        config.punctuation_scoring = self.punctuation_scoring;
        config.top_k = self.top_k;
        config.cache_path = self.cache;
        config.dataset_format = DatasetFormat {
            delimiter: match self.delimiter {
                DelimiterArg::Auto => Delimiter::Auto,
                DelimiterArg::Comma => Delimiter::Comma,
                DelimiterArg::Tab => Delimiter::Tab,
            },
            sent_more_column: self.sent_more_column,
            sent_less_column: self.sent_less_column,
            dimension_column: self.dimension_column,
            id_column: self.id_column,
            dimensions: self.dimensions,
        };
        config.bearer_token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        config.request_timeout = Duration::from_secs_f64(self.timeout);
        config.max_batch = self.max_batch;
        Ok(config)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap's own usage-error status (2) would collide with the backend-failure code
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (command, opts) = match cli.command {
        Sub::Attribute(o) => (Command::Attribute, o),
        Sub::Score(o) => (Command::Score, o),
        Sub::Semantics(o) => (Command::Semantics, o),
        Sub::All(o) => (Command::All, o),
    };
    let config = match opts.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = run(&config, command);
    for e in &outcome.manifest.errors {
        eprintln!("error: {}", e.message);
    }
    match &outcome.manifest_path {
        Some(p) => eprintln!(
            "{} of {} pair(s) completed; manifest: {}",
            outcome.manifest.pairs_completed,
            outcome.manifest.pairs_total,
            p.display()
        ),
        None => eprintln!("manifest could not be written"),
    }
    ExitCode::from(outcome.status.code() as u8)
}
