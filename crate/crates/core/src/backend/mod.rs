//! The narration/reasoning inference boundary.
//!
//! A [`Backend`] turns a rendered prompt into narration and reasoning text.
//! [`MockBackend`] answers from ground-truth annotations with seeded
//! corruption, [`RemoteBackend`] talks to a model server over HTTP, and
//! [`timing`] measures response time over frame batches.

mod mock;
mod remote;
pub mod timing;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segments::{Annotation, Segment};
use crate::taxonomy::Taxonomy;

pub use mock::{mock_infer, mock_render, MockBackend, MockConfig, MockOutput};
pub use remote::{FrameEncoding, FramePayload, InferRequestBody, InferResponseBody, RemoteBackend, RemoteConfig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out after {deadline_ms} ms")]
    Timeout { deadline_ms: u64 },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no ground-truth annotation for {0:?}")]
    MissingAnnotation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub request_id: String,
    pub prompt_text: String,
    pub frame_refs: Vec<String>,
    /// Segment the prompt was built from. Only test doubles look at it; it is
    /// never sent over the wire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_id: Option<String>,
}

impl BackendRequest {
    pub fn new(
        request_id: impl Into<String>,
        prompt_text: impl Into<String>,
        frame_refs: Vec<String>,
    ) -> Result<BackendRequest, BackendError> {
        let prompt_text = prompt_text.into();
        if prompt_text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        Ok(BackendRequest {
            request_id: request_id.into(),
            prompt_text,
            frame_refs,
            segment_id: None,
        })
    }

    pub fn for_segment(mut self, segment_id: impl Into<String>) -> Self {
        self.segment_id = Some(segment_id.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub request_id: String,
    pub narration_text: String,
    pub reasoning_text: String,
    /// Wall-clock milliseconds spent inside the call.
    pub backend_latency_ms: f64,
}

pub trait Backend: Send {
    /// Short name used as the report column.
    fn name(&self) -> &str;

    fn infer(&mut self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;

    /// Fixed per-call cost, when the backend has one (used by simulated clocks).
    fn nominal_latency(&self) -> Option<Duration> {
        None
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn infer(&mut self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).infer(request)
    }

    fn nominal_latency(&self) -> Option<Duration> {
        (**self).nominal_latency()
    }
}

/// Answers instantly with empty text. Measures pipeline overhead.
#[derive(Debug, Default, Clone)]
pub struct NullBackend;

impl Backend for NullBackend {
    fn name(&self) -> &str {
        "null"
    }

    fn infer(&mut self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        Ok(BackendResponse {
            request_id: request.request_id.clone(),
            narration_text: String::new(),
            reasoning_text: String::new(),
            backend_latency_ms: 0.0,
        })
    }

    fn nominal_latency(&self) -> Option<Duration> {
        Some(Duration::ZERO)
    }
}

/// Shared map from segment id to its annotation, consulted by the mock.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth(Arc<RwLock<HashMap<String, Annotation>>>);

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, segment_id: impl Into<String>, annotation: Annotation) {
        self.0
            .write()
            .expect("ground truth lock")
            .insert(segment_id.into(), annotation);
    }

    pub fn insert_segment(&self, segment: &Segment) {
        if segment.is_annotated() {
            self.insert(segment.id.clone(), segment.annotation.clone());
        }
    }

    pub fn get(&self, segment_id: &str) -> Option<Annotation> {
        self.0.read().expect("ground truth lock").get(segment_id).cloned()
    }
}

/// Backend selection as it appears in experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock(MockConfig),
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock(MockConfig::default())
    }
}

impl BackendConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            BackendConfig::Mock(_) => "mock",
            BackendConfig::Remote(_) => "remote",
        }
    }

    pub fn build(&self, taxonomy: Arc<Taxonomy>, truth: GroundTruth) -> Result<Box<dyn Backend>, BackendError> {
        Ok(match self {
            BackendConfig::Mock(cfg) => Box::new(MockBackend::new(taxonomy, cfg.clone(), truth)?),
            BackendConfig::Remote(cfg) => Box::new(RemoteBackend::new(cfg.clone())?),
        })
    }
}
