//! File formats, model backends, reporting and the command-line runner built
//! on `bias-attribution-core`.

pub mod cache;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod http;
pub mod lexicon;
pub mod protocol;
pub mod report;
pub mod run;

pub use cache::CachedBackend;
pub use dataset::{parse_dataset, DatasetFormat, Delimiter, ParsedDataset, RowError};
pub use error::{DatasetError, FixtureError, LexiconError};
pub use fixture::{FixtureBackend, FixtureSpec};
pub use http::{HttpBackend, HttpConfig};
pub use lexicon::{load_lexicon, load_stopwords};
pub use report::Format;
pub use run::{run, BackendSource, Command, ExitStatus, RunConfig, RunManifest, RunOutcome};
