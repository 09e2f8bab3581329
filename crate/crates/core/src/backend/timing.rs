//! Response-time measurement over frame batches.
//!
//! For each batch size `b` the first `b` frames of a segment are submitted as
//! `ceil(b / frames_per_call)` sequential calls, each with its own prompt.
//! Calls within a row never overlap.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Backend, BackendRequest};
use crate::prompt::{build_prompt, PromptConfig, TemplateRegistry, DEFAULT_TEMPLATE};
use crate::segments::Segment;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error)]
pub enum TimingError {
    #[error("batch size {batch} must be between 1 and the segment's {frames} frames")]
    BatchSize { batch: usize, frames: usize },
    #[error("frames_per_call must be positive")]
    FramesPerCall,
    #[error(transparent)]
    Prompt(#[from] crate::prompt::PromptError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Measured wall-clock time.
    #[default]
    Wall,
    /// Each call costs the backend's nominal latency; no overhead.
    Simulated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingOptions {
    pub frames_per_call: usize,
    pub template_id: String,
    pub prompt: PromptConfig,
    /// One-way link latency charged per call in the transport column.
    pub transport_ms: f64,
    pub clock: ClockMode,
}

impl Default for TimingOptions {
    fn default() -> Self {
        TimingOptions {
            frames_per_call: 1,
            template_id: DEFAULT_TEMPLATE.into(),
            prompt: PromptConfig::default(),
            transport_ms: 0.0,
            clock: ClockMode::Wall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub batch: usize,
    pub calls: usize,
    pub total_ms: f64,
    pub per_frame_ms: f64,
    /// Sum of latencies reported by the backend.
    pub compute_ms: f64,
    /// Prompt building, rendering and bookkeeping: `total - compute`.
    pub overhead_ms: f64,
    pub transport_ms: f64,
    #[serde(flatten)]
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub backend: String,
    pub clock: ClockMode,
    pub frames_per_call: usize,
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let clock = match self.clock {
            ClockMode::Wall => "wall",
            ClockMode::Simulated => "simulated",
        };
        let _ = writeln!(
            out,
            "backend {} | clock {} | frames/call {}",
            self.backend, clock, self.frames_per_call
        );
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}  status",
            "frames", "calls", "total_ms", "per_frame_ms", "compute_ms", "overhead_ms", "transport_ms"
        );
        for r in &self.rows {
            let status = match &r.status {
                RowStatus::Ok => "ok".to_string(),
                RowStatus::Failed { error } => format!("failed: {error}"),
            };
            let _ = writeln!(
                out,
                "{:>6} {:>6} {:>12.1} {:>12.1} {:>12.1} {:>12.1} {:>12.1}  {}",
                r.batch, r.calls, r.total_ms, r.per_frame_ms, r.compute_ms, r.overhead_ms, r.transport_ms, status
            );
        }
        out
    }
}

pub fn measure_response(
    backend: &mut dyn Backend,
    segment: &Segment,
    taxonomy: &Taxonomy,
    batch_sizes: &[usize],
    options: &TimingOptions,
) -> Result<TimingTable, TimingError> {
    let frames = segment.frames.len();
    if options.frames_per_call == 0 {
        return Err(TimingError::FramesPerCall);
    }
    if let Some(&batch) = batch_sizes.iter().find(|&&b| b == 0 || b > frames) {
        return Err(TimingError::BatchSize { batch, frames });
    }
    let templates = TemplateRegistry::builtin();
    let template = templates.get(&options.template_id)?;
    let nominal_ms = backend.nominal_latency().map(|d| d.as_secs_f64() * 1000.0);

    let mut rows = Vec::with_capacity(batch_sizes.len());
    for &batch in batch_sizes {
        let calls = batch.div_ceil(options.frames_per_call);
        let started = Instant::now();
        let mut compute_ms = 0.0;
        let mut simulated_ms = 0.0;
        let mut status = RowStatus::Ok;
        for call in 0..calls {
            let lo = call * options.frames_per_call;
            let hi = (lo + options.frames_per_call).min(batch);
            let chunk = segment.slice(lo..hi);
            let bundle = build_prompt(&chunk, taxonomy, &options.prompt)?;
            let request = BackendRequest {
                request_id: format!("{}-b{batch}-c{call}", segment.id),
                prompt_text: template.render(&bundle),
                frame_refs: bundle.frame_refs,
                segment_id: Some(segment.id.clone()),
            };
            match backend.infer(&request) {
                Ok(resp) => {
                    compute_ms += resp.backend_latency_ms;
                    simulated_ms += nominal_ms.unwrap_or(resp.backend_latency_ms);
                }
                Err(e) => {
                    status = RowStatus::Failed { error: e.to_string() };
                    break;
                }
            }
        }
        let (total_ms, compute_ms) = match options.clock {
            ClockMode::Wall => (started.elapsed().as_secs_f64() * 1000.0, compute_ms),
            ClockMode::Simulated => (simulated_ms, simulated_ms),
        };
        rows.push(TimingRow {
            batch,
            calls,
            total_ms,
            per_frame_ms: total_ms / batch as f64,
            compute_ms,
            overhead_ms: (total_ms - compute_ms).max(0.0),
            transport_ms: options.transport_ms * calls as f64,
            status,
        });
    }
    Ok(TimingTable {
        backend: backend.name().to_string(),
        clock: options.clock,
        frames_per_call: options.frames_per_call,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, BackendResponse, NullBackend};
    use crate::segments::fixtures::segment;

    struct Flaky {
        calls: usize,
        fail_at: usize,
    }

    impl Backend for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }

        fn infer(&mut self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
            self.calls += 1;
            if self.calls == self.fail_at {
                return Err(BackendError::Unavailable("down".into()));
            }
            NullBackend.infer(request)
        }
    }

    #[test]
    fn call_counts_follow_frames_per_call() {
        let t = Taxonomy::builtin();
        let seg = segment("s", 30);
        let opts = TimingOptions {
            frames_per_call: 4,
            ..TimingOptions::default()
        };
        let table = measure_response(&mut NullBackend, &seg, &t, &[1, 15, 30], &opts).unwrap();
        let calls: Vec<_> = table.rows.iter().map(|r| r.calls).collect();
        assert_eq!(calls, [1, 4, 8]);
        assert!(table.rows.iter().all(|r| r.status == RowStatus::Ok));
    }

    #[test]
    fn rejects_oversized_batch() {
        let t = Taxonomy::builtin();
        let seg = segment("s", 10);
        let err = measure_response(&mut NullBackend, &seg, &t, &[1, 15], &TimingOptions::default()).unwrap_err();
        assert!(matches!(err, TimingError::BatchSize { batch: 15, frames: 10 }));
    }

    #[test]
    fn failed_row_does_not_abort_table() {
        let t = Taxonomy::builtin();
        let seg = segment("s", 30);
        let mut b = Flaky { calls: 0, fail_at: 3 };
        let table = measure_response(&mut b, &seg, &t, &[1, 15, 30], &TimingOptions::default()).unwrap();
        assert_eq!(table.rows[0].status, RowStatus::Ok);
        assert!(matches!(table.rows[1].status, RowStatus::Failed { .. }));
        assert_eq!(table.rows[2].status, RowStatus::Ok);
    }

    #[test]
    fn simulated_clock_is_nominal() {
        let t = Taxonomy::builtin();
        let seg = segment("s", 30);
        let opts = TimingOptions {
            clock: ClockMode::Simulated,
            transport_ms: 20.0,
            ..TimingOptions::default()
        };
        let table = measure_response(&mut NullBackend, &seg, &t, &[30], &opts).unwrap();
        assert_eq!(table.rows[0].total_ms, 0.0);
        assert_eq!(table.rows[0].transport_ms, 600.0);
        assert!(table.render().contains("clock simulated"));
    }
}
