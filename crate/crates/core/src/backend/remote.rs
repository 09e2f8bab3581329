use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse};

/// How frames travel to the model server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameEncoding {
    /// `{"ref": "<image_ref>"}`
    #[default]
    Reference,
    /// `{"b64": "<file bytes>"}`, read from the image reference as a path.
    Inline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Server base URL; requests go to `<url>/infer`.
    pub url: String,
    pub deadline_ms: u64,
    pub frames: FrameEncoding,
    /// Report column name.
    pub name: String,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            url: "http://127.0.0.1:8000".into(),
            deadline_ms: 10_000,
            frames: FrameEncoding::Reference,
            name: "remote".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FramePayload {
    Ref {
        #[serde(rename = "ref")]
        reference: String,
    },
    Inline {
        b64: String,
    },
}

/// Body of `POST /infer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferRequestBody {
    pub request_id: String,
    pub prompt_text: String,
    pub frames: Vec<FramePayload>,
}

/// Body of a successful `/infer` response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferResponseBody {
    pub request_id: String,
    pub narration_text: String,
    pub reasoning_text: String,
}

/// Blocking HTTP client for a model server.
///
/// Must not be called from inside an async runtime.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    config: RemoteConfig,
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.deadline_ms))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let endpoint = format!("{}/infer", config.url.trim_end_matches('/'));
        Ok(RemoteBackend {
            config,
            endpoint,
            client,
        })
    }

    fn encode_frames(&self, refs: &[String]) -> Result<Vec<FramePayload>, BackendError> {
        refs.iter()
            .map(|r| match self.config.frames {
                FrameEncoding::Reference => Ok(FramePayload::Ref { reference: r.clone() }),
                FrameEncoding::Inline => std::fs::read(r)
                    .map(|bytes| FramePayload::Inline {
                        b64: base64::engine::general_purpose::STANDARD.encode(bytes),
                    })
                    .map_err(|e| BackendError::InvalidRequest(format!("reading frame {r:?}: {e}"))),
            })
            .collect()
    }
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn infer(&mut self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let body = InferRequestBody {
            request_id: request.request_id.clone(),
            prompt_text: request.prompt_text.clone(),
            frames: self.encode_frames(&request.frame_refs)?,
        };
        let started = Instant::now();
        let response = self.client.post(&self.endpoint).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    deadline_ms: self.config.deadline_ms,
                }
            } else {
                BackendError::Unavailable(e.to_string())
            }
        })?;
        let status = response.status();
        if status != reqwest::StatusCode::OK {
            return Err(BackendError::Unavailable(format!("status {status}")));
        }
        let bytes = response.bytes().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    deadline_ms: self.config.deadline_ms,
                }
            } else {
                BackendError::Malformed(e.to_string())
            }
        })?;
        let latency = started.elapsed();
        let parsed: InferResponseBody =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::Malformed(e.to_string()))?;
        if parsed.request_id != request.request_id {
            return Err(BackendError::Malformed(format!(
                "request_id {:?} does not match {:?}",
                parsed.request_id, request.request_id
            )));
        }
        Ok(BackendResponse {
            request_id: parsed.request_id,
            narration_text: parsed.narration_text,
            reasoning_text: parsed.reasoning_text,
            backend_latency_ms: latency.as_secs_f64() * 1000.0,
        })
    }
}
