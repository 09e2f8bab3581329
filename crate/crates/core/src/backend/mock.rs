use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRequest, BackendResponse, GroundTruth};
use crate::evaluation::{render_item, render_statements};
use crate::prompt::ENVIRONMENT_HEADER;
use crate::segments::{Annotation, AnnotationItem, CausalStatement};
use crate::taxonomy::{EntryId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Per-item probability of dropping or substituting an annotation item.
    pub corruption_rate: f64,
    /// Extra corruption probability when the prompt carries no stream headers.
    pub unstructured_bias: f64,
    pub synthetic_latency_ms: u64,
    pub seed: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            corruption_rate: 0.0,
            unstructured_bias: 0.0,
            synthetic_latency_ms: 0,
            seed: 0,
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        for (name, p) in [
            ("corruption_rate", self.corruption_rate),
            ("unstructured_bias", self.unstructured_bias),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(BackendError::InvalidRequest(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn effective_rate(&self, structured: bool) -> f64 {
        if structured {
            self.corruption_rate
        } else {
            (self.corruption_rate + self.unstructured_bias).min(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockOutput {
    pub narration: String,
    pub reasoning: String,
    /// Items dropped or substituted, across narration and reasoning.
    pub corrupted: usize,
    pub total: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn request_rng(seed: u64, request_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ fnv1a(request_id.as_bytes()))
}

struct Corruptor<'a> {
    rng: ChaCha8Rng,
    rate: f64,
    taxonomy: &'a Taxonomy,
    corrupted: usize,
    total: usize,
}

impl Corruptor<'_> {
    /// Returns the item unchanged, `None` (dropped), or a same-category
    /// substitute drawn from entries outside `exclude`.
    fn corrupt(&mut self, item: &AnnotationItem, exclude: &BTreeSet<EntryId>) -> Option<AnnotationItem> {
        self.total += 1;
        if self.rng.random::<f64>() >= self.rate {
            return Some(item.clone());
        }
        self.corrupted += 1;
        let drop = self.rng.random_bool(0.5);
        let candidates: Vec<_> = self
            .taxonomy
            .in_category(item.category)
            .filter(|(id, _)| !exclude.contains(id))
            .collect();
        if drop || candidates.is_empty() {
            return None;
        }
        let (_, entry) = candidates[self.rng.random_range(0..candidates.len())];
        Some(AnnotationItem {
            category: item.category,
            label: entry.label.clone(),
            count: item.count,
        })
    }
}

/// Deterministic mock answer for one request: the annotation rendered
/// verbatim, with each item independently corrupted at the configured rate.
pub fn mock_render(
    annotation: &Annotation,
    taxonomy: &Taxonomy,
    config: &MockConfig,
    request_id: &str,
    structured: bool,
) -> MockOutput {
    let mut c = Corruptor {
        rng: request_rng(config.seed, request_id),
        rate: config.effective_rate(structured),
        taxonomy,
        corrupted: 0,
        total: 0,
    };

    let narration_ids: BTreeSet<EntryId> = annotation.items.iter().filter_map(|i| i.resolve(taxonomy)).collect();
    let items: Vec<AnnotationItem> = annotation
        .items
        .iter()
        .filter_map(|item| c.corrupt(item, &narration_ids))
        .collect();
    let narration = items
        .iter()
        .map(|i| render_item(i, taxonomy))
        .collect::<Vec<_>>()
        .join(", ");

    let reasoning_ids: BTreeSet<EntryId> = annotation
        .reasoning
        .iter()
        .flat_map(|s| s.causes.iter().chain(&s.effects))
        .filter_map(|i| i.resolve(taxonomy))
        .collect();
    let statements: Vec<CausalStatement> = annotation
        .reasoning
        .iter()
        .map(|s| CausalStatement {
            causes: s.causes.iter().filter_map(|i| c.corrupt(i, &reasoning_ids)).collect(),
            effects: s.effects.iter().filter_map(|i| c.corrupt(i, &reasoning_ids)).collect(),
        })
        .collect();
    let reasoning = render_statements(&statements, taxonomy);

    MockOutput {
        narration,
        reasoning,
        corrupted: c.corrupted,
        total: c.total,
    }
}

/// Mock inference: renders the ground truth, then waits out the synthetic latency.
pub fn mock_infer(
    request: &BackendRequest,
    annotation: &Annotation,
    taxonomy: &Taxonomy,
    config: &MockConfig,
) -> Result<BackendResponse, BackendError> {
    let started = Instant::now();
    if annotation.is_empty() {
        return Err(BackendError::MissingAnnotation(
            request.segment_id.clone().unwrap_or_else(|| request.request_id.clone()),
        ));
    }
    let structured = request.prompt_text.contains(ENVIRONMENT_HEADER);
    let out = mock_render(annotation, taxonomy, config, &request.request_id, structured);
    let target = Duration::from_millis(config.synthetic_latency_ms);
    let spent = started.elapsed();
    if spent < target {
        std::thread::sleep(target - spent);
    }
    Ok(BackendResponse {
        request_id: request.request_id.clone(),
        narration_text: out.narration,
        reasoning_text: out.reasoning,
        backend_latency_ms: started.elapsed().as_secs_f64() * 1000.0,
    })
}

/// Test double that answers from a [`GroundTruth`] store.
#[derive(Debug, Clone)]
pub struct MockBackend {
    taxonomy: Arc<Taxonomy>,
    config: MockConfig,
    truth: GroundTruth,
}

impl MockBackend {
    pub fn new(taxonomy: Arc<Taxonomy>, config: MockConfig, truth: GroundTruth) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(MockBackend {
            taxonomy,
            config,
            truth,
        })
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn infer(&mut self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let id = request
            .segment_id
            .as_deref()
            .ok_or_else(|| BackendError::MissingAnnotation(request.request_id.clone()))?;
        let annotation = self
            .truth
            .get(id)
            .ok_or_else(|| BackendError::MissingAnnotation(id.to_string()))?;
        mock_infer(request, &annotation, &self.taxonomy, &self.config)
    }

    fn nominal_latency(&self) -> Option<Duration> {
        Some(Duration::from_millis(self.config.synthetic_latency_ms))
    }
}
