use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentError};
use crate::backend::timing::{measure_response, ClockMode, TimingOptions, TimingTable};
use crate::backend::{Backend, GroundTruth};
use crate::evaluation::{aggregate_all, AccuracyReport, SegmentScore};
use crate::exec;
use crate::network::{broadcast, AddressPool, Delivery, MessageType, SimTransport, Topology};
use crate::node::{Alert, NodeError, OutputRecord, RsuNode};
use crate::prompt::PromptConfig;
use crate::segments::{split_segment, Segment};
use crate::taxonomy::Taxonomy;

pub const ACCURACY_TXT: &str = "accuracy.txt";
pub const ACCURACY_JSON: &str = "accuracy.json";
pub const ALERTS_JSONL: &str = "alerts.jsonl";
pub const TIMING_TXT: &str = "timing.txt";
pub const TIMING_JSON: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub peer: String,
    pub at_ms: u64,
}

/// One raised alert and where it arrived on the virtual clock.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertLogEntry {
    pub strategy: bool,
    pub alert: Alert,
    pub delivered: Vec<Arrival>,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: AccuracyReport,
    pub scores: Vec<SegmentScore>,
    pub alerts: Vec<AlertLogEntry>,
    pub timing: TimingTable,
    /// Backend calls that failed, across all strategies.
    pub failed_calls: usize,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct AccuracyDocument<'a> {
    groups: &'a [crate::evaluation::GroupSummary],
    segments: &'a [SegmentScore],
    failed_calls: usize,
}

struct Worker {
    node: RsuNode,
    backend: Box<dyn Backend>,
    part: Option<Segment>,
    outcome: Result<Vec<Alert>, NodeError>,
}

struct StrategyRun {
    scores: Vec<SegmentScore>,
    alerts: Vec<AlertLogEntry>,
    failed_calls: usize,
}

fn deliver(deliveries: Vec<Delivery>, workers: &mut [Worker], index: &BTreeMap<String, usize>) {
    for d in deliveries {
        if let Some(&i) = index.get(&d.to) {
            workers[i].node.handle_message(&d.envelope);
        }
    }
}

fn part_value(output: &OutputRecord, pick: impl Fn(&crate::node::OutputScores) -> Option<f64>) -> Option<f64> {
    if !output.is_ok() {
        return Some(0.0);
    }
    output.scores.as_ref().and_then(pick)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn simulate(
    config: &ExperimentConfig,
    taxonomy: &Arc<Taxonomy>,
    segments: &[Segment],
    parts: &[Vec<Segment>],
    strategy: bool,
) -> Result<StrategyRun, ExperimentError> {
    let truth = GroundTruth::new();
    parts.iter().flatten().for_each(|p| truth.insert_segment(p));
    let backend_config = config.effective_backend();

    let ids = config.node_ids();
    let mut topology = Topology::new(AddressPool::default(), config.effective_link())?;
    let mut workers = Vec::with_capacity(ids.len());
    for id in &ids {
        topology.register_node(id)?;
        workers.push(Worker {
            node: RsuNode::new(id.clone(), taxonomy.clone(), config.node_config(strategy))?,
            backend: backend_config.build(taxonomy.clone(), truth.clone())?,
            part: None,
            outcome: Ok(Vec::new()),
        });
    }
    let index: BTreeMap<String, usize> = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
    let backend_name = workers[0].backend.name().to_string();
    let nominal_ms = workers[0].backend.nominal_latency().map_or(0, |d| d.as_millis() as u64);

    let mut sim = SimTransport::new();
    for w in &mut workers {
        let env = w
            .node
            .seal(MessageType::Status, serde_json::json!({ "state": "up" }), 0);
        broadcast(&topology, &env, &mut sim)?;
    }

    let mut alerts = Vec::new();
    for (k, clip_parts) in parts.iter().enumerate() {
        let dispatched = k as u64 * config.dispatch_interval_ms;
        let due = sim.advance_to(dispatched);
        deliver(due, &mut workers, &index);

        for (w, part) in workers.iter_mut().zip(clip_parts) {
            w.part = Some(part.clone());
        }
        let finished = dispatched + nominal_ms;
        exec::for_each_mut(config.exec, &mut workers, |_, w| {
            if let Some(part) = w.part.take() {
                w.outcome = w.node.process_segment(&part, &mut *w.backend, finished);
            }
        });

        sim.set_now(finished);
        for w in &mut workers {
            let raised = std::mem::replace(&mut w.outcome, Ok(Vec::new()))?;
            for alert in raised {
                let env = w.node.seal(MessageType::Alert, &alert, alert.timestamp);
                let report = broadcast(&topology, &env, &mut sim)?;
                let mut entry = AlertLogEntry {
                    strategy,
                    alert,
                    delivered: Vec::new(),
                    dropped: Vec::new(),
                };
                for p in report.peers {
                    match p.deliver_at_ms {
                        Some(at_ms) if p.delivered => entry.delivered.push(Arrival { peer: p.peer, at_ms }),
                        _ => entry.dropped.push(p.peer),
                    }
                }
                alerts.push(entry);
            }
        }
    }
    let rest = sim.drain();
    deliver(rest, &mut workers, &index);

    let failed_calls = workers
        .iter()
        .map(|w| w.node.outputs().iter().filter(|o| !o.is_ok()).count())
        .sum();

    let mut scores = Vec::new();
    for (k, segment) in segments.iter().enumerate() {
        if !segment.is_annotated() {
            continue;
        }
        let outputs: Vec<&OutputRecord> = workers.iter().filter_map(|w| w.node.outputs().get(k)).collect();
        let narration: Option<Vec<f64>> = outputs.iter().map(|o| part_value(o, |s| s.narration)).collect();
        let reasoning: Option<Vec<f64>> = outputs.iter().map(|o| part_value(o, |s| s.reasoning)).collect();
        match (narration, reasoning) {
            (Some(n), Some(r)) if !n.is_empty() => scores.push(SegmentScore {
                segment_id: segment.id.clone(),
                backend: backend_name.clone(),
                strategy,
                narration: mean(&n),
                reasoning: mean(&r),
            }),
            _ => log::warn!("{}: annotation lacks items or reasoning; not scored", segment.id),
        }
    }

    Ok(StrategyRun {
        scores,
        alerts,
        failed_calls,
    })
}

fn timing_table(
    config: &ExperimentConfig,
    taxonomy: &Arc<Taxonomy>,
    segments: &[Segment],
) -> Result<TimingTable, ExperimentError> {
    let longest = config.timing.batch_sizes.iter().copied().max().unwrap_or(1);
    let segment = match &config.timing.segment {
        Some(id) => segments
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| ExperimentError::Config(format!("timing segment {id:?} is not in the manifest")))?,
        None => segments
            .iter()
            .find(|s| s.frames.len() >= longest)
            .ok_or_else(|| ExperimentError::Config(format!("no segment has the {longest} frames needed for timing")))?,
    };
    let truth = GroundTruth::new();
    truth.insert_segment(segment);
    let mut backend = config.effective_backend().build(taxonomy.clone(), truth)?;
    let options = TimingOptions {
        frames_per_call: config.timing.frames_per_call,
        template_id: config.template.clone(),
        prompt: PromptConfig {
            keyframe_policy: config.keyframe_policy,
            window_half_width: config.window_half_width,
        },
        transport_ms: config.effective_link().latency.mean_ms(),
        clock: ClockMode::Simulated,
    };
    Ok(measure_response(
        &mut *backend,
        segment,
        taxonomy,
        &config.timing.batch_sizes,
        &options,
    )?)
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    let file = dir.join(name);
    std::fs::write(&file, contents).map_err(|source| ExperimentError::Write {
        file: file.clone(),
        source,
    })?;
    files.push(file);
    Ok(())
}

/// Runs every configured strategy over the manifest and writes the reports
/// into `config.output_dir`. The output depends only on the config and seeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, ExperimentError> {
    config.validate()?;
    let manifest = config
        .manifest
        .clone()
        .ok_or_else(|| ExperimentError::Config("no manifest configured".into()))?;
    let taxonomy = Arc::new(config.load_taxonomy()?);
    let segments = config.load_segments(&taxonomy)?;
    if segments.is_empty() {
        return Err(ExperimentError::Load {
            file: manifest,
            message: "no segments".into(),
        });
    }
    let parts = segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            split_segment(s, config.nodes).map_err(|e| ExperimentError::Load {
                file: manifest.clone(),
                message: format!("record {}: {e}", i + 1),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut scores = Vec::new();
    let mut alerts = Vec::new();
    let mut failed_calls = 0;
    for &strategy in config.strategy.settings() {
        let run = simulate(config, &taxonomy, &segments, &parts, strategy)?;
        scores.extend(run.scores);
        alerts.extend(run.alerts);
        failed_calls += run.failed_calls;
    }
    let report = aggregate_all(&scores)?;
    let timing = timing_table(config, &taxonomy, &segments)?;

    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Write {
        file: dir.clone(),
        source,
    })?;
    let mut files = Vec::new();
    let mut accuracy = report.render_table();
    accuracy.push_str(&format!(
        "\nsegments scored: {}  failed calls: {failed_calls}\n",
        scores.len()
    ));
    write(dir, ACCURACY_TXT, &accuracy, &mut files)?;
    let doc = AccuracyDocument {
        groups: &report.groups,
        segments: &scores,
        failed_calls,
    };
    write(
        dir,
        ACCURACY_JSON,
        &(serde_json::to_string_pretty(&doc).expect("serializable") + "\n"),
        &mut files,
    )?;
    let alert_lines: String = alerts
        .iter()
        .map(|a| serde_json::to_string(a).expect("serializable") + "\n")
        .collect();
    write(dir, ALERTS_JSONL, &alert_lines, &mut files)?;
    write(dir, TIMING_TXT, &timing.render(), &mut files)?;
    write(
        dir,
        TIMING_JSON,
        &(serde_json::to_string_pretty(&timing).expect("serializable") + "\n"),
        &mut files,
    )?;

    Ok(RunSummary {
        report,
        scores,
        alerts,
        timing,
        failed_calls,
        files,
    })
}
