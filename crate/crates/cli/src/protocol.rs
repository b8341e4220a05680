//! JSON wire format for remote scoring backends.
//!
//! ```text
//! GET  /info      -> {"model_name", "paradigm", "vocab_size", "mask_token"}
//! POST /tokenize  {"sentence"} -> {"tokens": [{"token_id", "surface", "char_span": [start, end]}]}
//! POST /probe     {"requests": [{"sentence", "token_index"}]}
//!                 -> {"results": [{"p": 0.123} | {"error": {"kind", "message", "len"}}]}
//! ```
//!
//! `char_span` counts Unicode scalar values, not bytes. Probabilities are
//! plain JSON numbers written with full round-trip precision.

use bias_attribution_core::backend::validate_token_spans;
use bias_attribution_core::{
    BackendError, BackendInfo, Paradigm, ProbeError, ProbeOutcome, ProbeRequest, ProbeResult,
    ScoringBackend, SubwordToken, TargetProbability,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub model_name: String,
    pub paradigm: String,
    pub vocab_size: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireToken {
    pub token_id: u64,
    pub surface: String,
    pub char_span: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub tokens: Vec<WireToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireProbeRequest {
    pub sentence: String,
    pub token_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRequestBody {
    pub requests: Vec<WireProbeRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireProbeError {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
}

pub const INDEX_OUT_OF_RANGE: &str = "index_out_of_range";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireProbeResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireProbeError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub results: Vec<WireProbeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl From<&BackendInfo> for InfoResponse {
    fn from(info: &BackendInfo) -> Self {
        Self {
            model_name: info.model_name.clone(),
            paradigm: info.paradigm.as_str().to_string(),
            vocab_size: info.vocab_size,
            mask_token: info.mask_token.clone(),
        }
    }
}

impl TryFrom<InfoResponse> for BackendInfo {
    type Error = BackendError;

    fn try_from(r: InfoResponse) -> Result<Self, Self::Error> {
        let paradigm = Paradigm::parse(&r.paradigm).ok_or_else(|| {
            BackendError::Protocol(format!("unknown paradigm {:?}", r.paradigm))
        })?;
        let info = BackendInfo {
            model_name: r.model_name,
            paradigm,
            vocab_size: r.vocab_size,
            mask_token: r.mask_token,
        };
        info.validate()?;
        Ok(info)
    }
}

/// Byte offset of every char boundary, indexed by char position.
fn char_boundaries(sentence: &str) -> Vec<usize> {
    sentence
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(sentence.len()))
        .collect()
}

pub fn tokens_to_wire(sentence: &str, tokens: &[SubwordToken]) -> Vec<WireToken> {
    let boundaries = char_boundaries(sentence);
    let to_char = |byte: usize| boundaries.partition_point(|&b| b < byte);
    tokens
        .iter()
        .map(|t| WireToken {
            token_id: t.token_id,
            surface: t.surface.clone(),
            char_span: [to_char(t.span.start), to_char(t.span.end)],
        })
        .collect()
}

pub fn tokens_from_wire(sentence: &str, wire: Vec<WireToken>) -> Result<Vec<SubwordToken>, BackendError> {
    let boundaries = char_boundaries(sentence);
    let to_byte = |c: usize| {
        boundaries.get(c).copied().ok_or_else(|| {
            BackendError::Protocol(format!(
                "char offset {c} beyond sentence of {} chars",
                boundaries.len() - 1
            ))
        })
    };
    let tokens = wire
        .into_iter()
        .map(|t| {
            Ok(SubwordToken {
                token_id: t.token_id,
                span: to_byte(t.char_span[0])?..to_byte(t.char_span[1])?,
                surface: t.surface,
            })
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    validate_token_spans(sentence, &tokens)?;
    Ok(tokens)
}

pub fn outcome_to_wire(outcome: &ProbeOutcome) -> WireProbeResult {
    match outcome {
        Ok(r) => WireProbeResult {
            p: Some(r.p.value()),
            error: None,
        },
        Err(ProbeError::IndexOutOfRange { index, len }) => WireProbeResult {
            p: None,
            error: Some(WireProbeError {
                kind: INDEX_OUT_OF_RANGE.to_string(),
                message: format!("token index {index} out of range"),
                len: Some(*len),
            }),
        },
        Err(e) => WireProbeResult {
            p: None,
            error: Some(WireProbeError {
                kind: "rejected".to_string(),
                message: e.to_string(),
                len: None,
            }),
        },
    }
}

pub fn outcome_from_wire(request: &ProbeRequest, wire: WireProbeResult) -> Result<ProbeOutcome, BackendError> {
    match (wire.p, wire.error) {
        (Some(p), None) => {
            let p = TargetProbability::from_transport(p)
                .map_err(|e| BackendError::Protocol(format!("probe result: {e}")))?;
            Ok(Ok(ProbeResult {
                request: request.clone(),
                p,
            }))
        }
        (None, Some(e)) if e.kind == INDEX_OUT_OF_RANGE => Ok(Err(ProbeError::IndexOutOfRange {
            index: request.token_index,
            len: e.len.unwrap_or(0),
        })),
        (None, Some(e)) => Ok(Err(ProbeError::Rejected(e.message))),
        _ => Err(BackendError::Protocol(
            "probe result must carry exactly one of `p` or `error`".to_string(),
        )),
    }
}

/// A transport-independent response: HTTP status and JSON body.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Self {
            status,
            body: serde_json::to_string(value).expect("wire types serialize"),
        }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, &ErrorBody { error: message.into() })
    }
}

/// Serves one protocol request from any backend.
pub fn handle<B: ScoringBackend + ?Sized>(backend: &B, method: &str, path: &str, body: &[u8]) -> Reply {
    let backend_failure = |e: BackendError| Reply::error(502, e.to_string());
    match (method, path.trim_end_matches('/')) {
        ("GET", "/info") => match backend.info() {
            Ok(info) => Reply::json(200, &InfoResponse::from(&info)),
            Err(e) => backend_failure(e),
        },
        ("POST", "/tokenize") => {
            let req: TokenizeRequest = match serde_json::from_slice(body) {
                Ok(r) => r,
                Err(e) => return Reply::error(400, e.to_string()),
            };
            match backend.tokenize(&req.sentence) {
                Ok(tokens) => Reply::json(
                    200,
                    &TokenizeResponse {
                        tokens: tokens_to_wire(&req.sentence, &tokens),
                    },
                ),
                Err(e) => backend_failure(e),
            }
        }
        ("POST", "/probe") => {
            let req: ProbeRequestBody = match serde_json::from_slice(body) {
                Ok(r) => r,
                Err(e) => return Reply::error(400, e.to_string()),
            };
            let requests: Vec<ProbeRequest> = req
                .requests
                .into_iter()
                .map(|r| ProbeRequest::new(r.sentence, r.token_index))
                .collect();
            match backend.probe(&requests) {
                Ok(outcomes) => Reply::json(
                    200,
                    &ProbeResponse {
                        results: outcomes.iter().map(outcome_to_wire).collect(),
                    },
                ),
                Err(e) => backend_failure(e),
            }
        }
        (_, "/info" | "/tokenize" | "/probe") => Reply::error(405, "method not allowed"),
        _ => Reply::error(404, format!("no route for {path}")),
    }
}
