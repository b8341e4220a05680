//! Blocking HTTP client for the JSON scoring protocol.

use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use bias_attribution_core::{
    BackendError, BackendInfo, ProbeOutcome, ProbeRequest, ScoringBackend, SubwordToken,
};
use reqwest::blocking::{Client, RequestBuilder, Response};
use reqwest::header::{HeaderMap, CONTENT_TYPE, RETRY_AFTER};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::protocol::{
    outcome_from_wire, tokens_from_wire, InfoResponse, ProbeRequestBody, ProbeResponse,
    TokenizeRequest, TokenizeResponse, WireProbeRequest,
};

/// Environment variable holding the bearer token sent to the backend.
pub const TOKEN_ENV: &str = "BIAS_ATTR_TOKEN";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub bearer_token: Option<String>,
    pub timeout: Duration,
    /// Attempts per request, including the first.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    /// Upper bound on any single wait, including server-requested ones.
    pub max_backoff: Duration,
    /// Requests per `/probe` call; larger batches are split.
    pub max_batch: usize,
    /// Concurrent in-flight HTTP requests across all callers.
    pub parallelism: usize,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            bearer_token: None,
            timeout: Duration::from_secs(120),
            max_attempts: 4,
            initial_backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(10),
            max_batch: 64,
            parallelism: 4,
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.released.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.released.notify_one();
    }
}

pub struct HttpBackend {
    client: Client,
    config: HttpConfig,
    info: OnceLock<BackendInfo>,
    permits: Semaphore,
}

fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    let value = headers.get(RETRY_AFTER)?.to_str().ok()?;
    value.trim().parse::<f64>().ok().filter(|s| s.is_finite() && *s >= 0.0).map(Duration::from_secs_f64)
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status == StatusCode::REQUEST_TIMEOUT || status.is_server_error()
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<crate::protocol::ErrorBody>(body)
        .map(|b| b.error)
        .unwrap_or_else(|_| body.chars().take(200).collect())
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.max_batch == 0 {
            return Err(BackendError::Other("max_batch must be positive".to_string()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Other(format!("building HTTP client: {e}")))?;
        let permits = Semaphore::new(config.parallelism);
        Ok(Self {
            client,
            config,
            info: OnceLock::new(),
            permits,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn send<T: DeserializeOwned>(&self, path: &str, build: impl Fn() -> RequestBuilder) -> Result<T, BackendError> {
        let _permit = self.permits.acquire();
        let mut backoff = self.config.initial_backoff;
        let attempts = self.config.max_attempts.max(1);
        let mut last_message = String::new();
        let mut last_retry_after = None;
        for attempt in 1..=attempts {
            let mut request = build();
            if let Some(token) = &self.config.bearer_token {
                request = request.bearer_auth(token);
            }
            let wait = match request.send() {
                Ok(response) => match self.read(path, response) {
                    Ok(value) => return Ok(value),
                    Err(Attempt::Fatal(e)) => return Err(e),
                    Err(Attempt::Retry { message, retry_after }) => {
                        last_message = message;
                        last_retry_after = retry_after;
                        retry_after.unwrap_or(backoff)
                    }
                },
                Err(e) => {
                    last_message = format!("{path}: {e}");
                    last_retry_after = None;
                    backoff
                }
            };
            if attempt < attempts {
                log::debug!("{last_message}; retrying in {wait:?}");
                std::thread::sleep(wait.min(self.config.max_backoff));
                backoff = (backoff * 2).min(self.config.max_backoff);
            }
        }
        Err(BackendError::Unavailable {
            message: last_message,
            attempts,
            retry_after_ms: last_retry_after.map(|d| d.as_millis() as u64),
        })
    }

    fn read<T: DeserializeOwned>(&self, path: &str, response: Response) -> Result<T, Attempt> {
        let status = response.status();
        let retry_after = retry_after(response.headers());
        let body = response.text().map_err(|e| Attempt::Retry {
            message: format!("{path}: reading response: {e}"),
            retry_after: None,
        })?;
        if retryable(status) {
            return Err(Attempt::Retry {
                message: format!("{path}: HTTP {status}: {}", error_message(&body)),
                retry_after,
            });
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Protocol(format!(
                "{path}: HTTP {status}: {}",
                error_message(&body)
            ))));
        }
        serde_json::from_str(&body)
            .map_err(|e| Attempt::Fatal(BackendError::Protocol(format!("{path}: malformed response: {e}"))))
    }

    fn post<Q: Serialize, T: DeserializeOwned>(&self, path: &str, body: &Q) -> Result<T, BackendError> {
        let body = serde_json::to_vec(body).expect("wire types serialize");
        let url = self.url(path);
        self.send(path, || {
            self.client
                .post(&url)
                .header(CONTENT_TYPE, "application/json")
                .body(body.clone())
        })
    }

    fn probe_chunk(&self, chunk: &[ProbeRequest]) -> Result<Vec<ProbeOutcome>, BackendError> {
        let body = ProbeRequestBody {
            requests: chunk
                .iter()
                .map(|r| WireProbeRequest {
                    sentence: r.sentence.clone(),
                    token_index: r.token_index,
                })
                .collect(),
        };
        let response: ProbeResponse = self.post("/probe", &body)?;
        if response.results.len() != chunk.len() {
            return Err(BackendError::Protocol(format!(
                "/probe: {} result(s) for {} request(s)",
                response.results.len(),
                chunk.len()
            )));
        }
        chunk
            .iter()
            .zip(response.results)
            .map(|(r, w)| outcome_from_wire(r, w))
            .collect()
    }
}

enum Attempt {
    Retry { message: String, retry_after: Option<Duration> },
    Fatal(BackendError),
}

impl ScoringBackend for HttpBackend {
    fn info(&self) -> Result<BackendInfo, BackendError> {
        if let Some(info) = self.info.get() {
            return Ok(info.clone());
        }
        let url = self.url("/info");
        let response: InfoResponse = self.send("/info", || self.client.get(&url))?;
        let info = BackendInfo::try_from(response)?;
        Ok(self.info.get_or_init(|| info).clone())
    }

    fn tokenize(&self, sentence: &str) -> Result<Vec<SubwordToken>, BackendError> {
        let response: TokenizeResponse = self.post(
            "/tokenize",
            &TokenizeRequest {
                sentence: sentence.to_string(),
            },
        )?;
        tokens_from_wire(sentence, response.tokens)
    }

    fn probe(&self, requests: &[ProbeRequest]) -> Result<Vec<ProbeOutcome>, BackendError> {
        let chunks: Vec<&[ProbeRequest]> = requests.chunks(self.config.max_batch).collect();
        if chunks.len() <= 1 {
            return chunks.first().map_or(Ok(Vec::new()), |c| self.probe_chunk(c));
        }
        let results: Vec<Result<Vec<ProbeOutcome>, BackendError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| s.spawn(move || self.probe_chunk(chunk)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("probe worker panicked"))
                .collect()
        });
        let mut out = Vec::with_capacity(requests.len());
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    }
}
