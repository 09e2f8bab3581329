//! The per-RSU state machine.
//!
//! An [`RsuNode`] processes its assigned segment parts one at a time, merges
//! edge-user observations into the next prompt, raises hazard alerts from
//! backend output, records peer alerts exactly once and answers snapshot
//! queries. A node is not internally synchronized; callers serialize access.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendRequest};
use crate::evaluation::{score_narration, score_reasoning};
use crate::network::{Envelope, MessageType, Sequencer};
use crate::prompt::{
    build_prompt, enrichment_context, generate_enrichment_corpus, render_raw, with_context, PromptConfig, PromptError,
    TemplateRegistry, DEFAULT_TEMPLATE,
};
use crate::segments::Segment;
use crate::taxonomy::{Category, EntryId, Taxonomy};
use crate::text;

pub const DEFAULT_HAZARDS: [&str; 4] = ["speeding", "accident", "sudden braking", "wrong way"];

const EVIDENCE_LIMIT: usize = 240;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("segment {0:?} has no frames")]
    EmptySegment(String),
    #[error("observation text is empty")]
    EmptyObservation,
    #[error("unknown query kind {0:?} (expected latest, alerts or outputs)")]
    UnknownQuery(String),
    #[error("hazard {0:?} is not a taxonomy phrase")]
    UnknownHazard(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: String,
    pub origin: String,
    pub hazard_label: String,
    pub evidence: String,
    /// Milliseconds since the experiment started.
    pub timestamp: u64,
}

/// A blind-spot report uploaded by an edge user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// Assigned on acceptance when left empty.
    #[serde(default)]
    pub observation_id: String,
    #[serde(default)]
    pub reporter: String,
    pub category: Category,
    pub text: String,
    #[serde(default)]
    pub received_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum OutputStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScores {
    pub narration: Option<f64>,
    pub reasoning: Option<f64>,
}

/// One processed segment part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub segment_id: String,
    pub request_id: String,
    pub prompt_text: String,
    pub narration: String,
    pub reasoning: String,
    pub latency_ms: f64,
    pub processed_at: u64,
    #[serde(flatten)]
    pub status: OutputStatus,
    /// Present when the segment carries an annotation and the call succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<OutputScores>,
}

impl OutputRecord {
    pub fn is_ok(&self) -> bool {
        self.status == OutputStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeConfig {
    pub prompt: PromptConfig,
    pub template_id: String,
    /// Structured three-stream prompts when true, raw observation dump when false.
    pub strategy: bool,
    pub hazard_set: Vec<String>,
    /// Cross-category example descriptions prepended as context; 0 disables.
    pub enrichment_examples: usize,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig {
            prompt: PromptConfig::default(),
            template_id: DEFAULT_TEMPLATE.into(),
            strategy: true,
            hazard_set: DEFAULT_HAZARDS.iter().map(|s| s.to_string()).collect(),
            enrichment_examples: 0,
        }
    }
}

impl NodeConfig {
    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), NodeError> {
        for h in &self.hazard_set {
            if taxonomy.lookup(h).is_none() {
                return Err(NodeError::UnknownHazard(h.clone()));
            }
        }
        Ok(())
    }
}

/// Hazard phrases from `hazard_set` whose taxonomy entry occurs in any text.
/// Phrases outside the taxonomy never match.
pub fn detect_hazard<S: AsRef<str>>(texts: &[S], hazard_set: &[String], taxonomy: &Taxonomy) -> BTreeSet<String> {
    let wanted: Vec<(EntryId, &String)> = hazard_set
        .iter()
        .filter_map(|h| taxonomy.lookup(h).map(|id| (id, h)))
        .collect();
    let mut found = BTreeSet::new();
    for t in texts {
        for k in taxonomy.match_keywords(t.as_ref()) {
            for (id, h) in &wanted {
                if *id == k.id {
                    found.insert((*h).clone());
                }
            }
        }
    }
    found
}

fn evidence_for(label: &str, texts: &[&str], taxonomy: &Taxonomy) -> String {
    let id = taxonomy.lookup(label);
    let sentence = texts
        .iter()
        .flat_map(|t| text::sentences(t))
        .find(|s| taxonomy.match_keywords(s).iter().any(|k| Some(k.id) == id))
        .unwrap_or_default();
    match sentence.char_indices().nth(EVIDENCE_LIMIT) {
        Some((cut, _)) => format!("{}...", &sentence[..cut]),
        None => sentence.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateQuery {
    Latest,
    Alerts,
    Outputs,
}

impl std::str::FromStr for StateQuery {
    type Err = NodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "latest" => Ok(StateQuery::Latest),
            "alerts" => Ok(StateQuery::Alerts),
            "outputs" => Ok(StateQuery::Outputs),
            other => Err(NodeError::UnknownQuery(other.to_string())),
        }
    }
}

/// Read-only view returned by [`RsuNode::query_state`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub rsu_id: String,
    pub kind: StateQuery,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alerts: Option<Vec<Alert>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<OutputRecord>>,
    pub pending_observations: usize,
    pub dropped_messages: u64,
}

#[derive(Debug)]
pub struct RsuNode {
    rsu_id: String,
    taxonomy: Arc<Taxonomy>,
    config: NodeConfig,
    templates: TemplateRegistry,
    sequencer: Sequencer,
    last_segment: Option<String>,
    outputs: Vec<OutputRecord>,
    /// Arrival order.
    alerts: Vec<Alert>,
    alerts_seen: HashSet<String>,
    pending: VecDeque<Observation>,
    dropped: u64,
    next_alert: u64,
    next_observation: u64,
}

impl RsuNode {
    pub fn new(rsu_id: impl Into<String>, taxonomy: Arc<Taxonomy>, config: NodeConfig) -> Result<Self, NodeError> {
        Self::with_templates(rsu_id, taxonomy, config, TemplateRegistry::builtin())
    }

    pub fn with_templates(
        rsu_id: impl Into<String>,
        taxonomy: Arc<Taxonomy>,
        config: NodeConfig,
        templates: TemplateRegistry,
    ) -> Result<Self, NodeError> {
        config.validate(&taxonomy)?;
        templates.get(&config.template_id)?;
        let rsu_id = rsu_id.into();
        Ok(RsuNode {
            sequencer: Sequencer::new(rsu_id.clone()),
            rsu_id,
            taxonomy,
            config,
            templates,
            last_segment: None,
            outputs: Vec::new(),
            alerts: Vec::new(),
            alerts_seen: HashSet::new(),
            pending: VecDeque::new(),
            dropped: 0,
            next_alert: 0,
            next_observation: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.rsu_id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn outputs(&self) -> &[OutputRecord] {
        &self.outputs
    }

    /// Known alerts, own and peer, in arrival order.
    pub fn alerts(&self) -> &[Alert] {
        &self.alerts
    }

    pub fn has_seen(&self, alert_id: &str) -> bool {
        self.alerts_seen.contains(alert_id)
    }

    pub fn pending_observations(&self) -> impl Iterator<Item = &Observation> {
        self.pending.iter()
    }

    pub fn dropped_messages(&self) -> u64 {
        self.dropped
    }

    pub fn last_segment(&self) -> Option<&str> {
        self.last_segment.as_deref()
    }

    /// Stamps an outgoing envelope with this node's next sequence number.
    pub fn seal(&mut self, msg_type: MessageType, payload: impl Serialize, now_ms: u64) -> Envelope {
        self.sequencer.seal(msg_type, payload, now_ms)
    }

    fn render(&self, segment: &Segment, pending: &[Observation]) -> Result<String, NodeError> {
        if !self.config.strategy {
            return Ok(render_raw(segment, pending.iter().map(|o| o.text.as_str())));
        }
        let mut bundle = build_prompt(segment, &self.taxonomy, &self.config.prompt)?;
        for obs in pending {
            bundle.append_observation(obs.category, &obs.text, &self.taxonomy);
        }
        let rendered = self.templates.render(&bundle, &self.config.template_id)?;
        if self.config.enrichment_examples == 0 {
            return Ok(rendered);
        }
        let corpus = generate_enrichment_corpus(&self.taxonomy);
        let context = enrichment_context(&bundle, &corpus, self.config.enrichment_examples);
        Ok(with_context(rendered, &context))
    }

    /// Processes one segment part and returns the alerts it raised.
    ///
    /// Pending observations are consumed even when the backend call fails.
    pub fn process_segment(
        &mut self,
        segment: &Segment,
        backend: &mut dyn Backend,
        now_ms: u64,
    ) -> Result<Vec<Alert>, NodeError> {
        if segment.frames.is_empty() {
            return Err(NodeError::EmptySegment(segment.id.clone()));
        }
        let pending: Vec<Observation> = self.pending.iter().cloned().collect();
        let prompt_text = self.render(segment, &pending)?;
        self.pending.clear();
        self.last_segment = Some(segment.id.clone());

        let request_id = format!("{}:{}:{}", self.rsu_id, self.outputs.len(), segment.id);
        let frame_refs = segment.frames.iter().map(|f| f.image_ref.clone()).collect();
        let request = BackendRequest {
            request_id: request_id.clone(),
            prompt_text,
            frame_refs,
            segment_id: Some(segment.id.clone()),
        };
        let response = backend.infer(&request);
        let BackendRequest { prompt_text, .. } = request;

        let response = match response {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}: backend failed on {}: {e}", self.rsu_id, segment.id);
                self.outputs.push(OutputRecord {
                    segment_id: segment.id.clone(),
                    request_id,
                    prompt_text,
                    narration: String::new(),
                    reasoning: String::new(),
                    latency_ms: 0.0,
                    processed_at: now_ms,
                    status: OutputStatus::Failed { error: e.to_string() },
                    scores: None,
                });
                return Ok(Vec::new());
            }
        };

        let scores = segment.is_annotated().then(|| OutputScores {
            narration: score_narration(&response.narration_text, &segment.annotation.items, &self.taxonomy)
                .ok()
                .map(|s| s.value),
            reasoning: score_reasoning(&response.reasoning_text, &segment.annotation.reasoning, &self.taxonomy)
                .ok()
                .map(|s| s.value),
        });

        let texts = [response.narration_text.as_str(), response.reasoning_text.as_str()];
        let labels = detect_hazard(&texts, &self.config.hazard_set, &self.taxonomy);
        let mut raised = Vec::with_capacity(labels.len());
        for label in labels {
            let alert = Alert {
                alert_id: format!("{}-a{}", self.rsu_id, self.next_alert),
                origin: self.rsu_id.clone(),
                evidence: evidence_for(&label, &texts, &self.taxonomy),
                hazard_label: label,
                timestamp: now_ms,
            };
            self.next_alert += 1;
            self.record_alert(alert.clone());
            raised.push(alert);
        }

        self.outputs.push(OutputRecord {
            segment_id: segment.id.clone(),
            request_id,
            prompt_text,
            narration: response.narration_text,
            reasoning: response.reasoning_text,
            latency_ms: response.backend_latency_ms,
            processed_at: now_ms,
            status: OutputStatus::Ok,
            scores,
        });
        Ok(raised)
    }

    fn record_alert(&mut self, alert: Alert) -> bool {
        if !self.alerts_seen.insert(alert.alert_id.clone()) {
            return false;
        }
        self.alerts.push(alert);
        true
    }

    /// Applies a peer message. Returns false when it was dropped as malformed
    /// or had no effect (duplicate alert).
    pub fn handle_message(&mut self, envelope: &Envelope) -> bool {
        match envelope.msg_type {
            MessageType::Alert => match envelope.payload_as::<Alert>() {
                Ok(alert) => self.record_alert(alert),
                Err(e) => self.drop_message(&e.to_string()),
            },
            MessageType::ObservationRelay => match envelope.payload_as::<Observation>() {
                Ok(obs) => match self.accept_observation(obs) {
                    Ok(_) => true,
                    Err(e) => self.drop_message(&e.to_string()),
                },
                Err(e) => self.drop_message(&e.to_string()),
            },
            MessageType::Status => true,
        }
    }

    /// Decodes and applies a wire envelope.
    pub fn handle_raw(&mut self, bytes: &[u8]) -> bool {
        match Envelope::from_json(bytes) {
            Ok(env) => self.handle_message(&env),
            Err(e) => self.drop_message(&e.to_string()),
        }
    }

    fn drop_message(&mut self, reason: &str) -> bool {
        log::debug!("{}: dropping message: {reason}", self.rsu_id);
        self.dropped += 1;
        false
    }

    /// Queues an observation for the next prompt and returns its id.
    pub fn accept_observation(&mut self, mut observation: Observation) -> Result<String, NodeError> {
        if observation.text.trim().is_empty() {
            return Err(NodeError::EmptyObservation);
        }
        if observation.observation_id.is_empty() {
            observation.observation_id = format!("{}-o{}", self.rsu_id, self.next_observation);
        }
        self.next_observation += 1;
        let id = observation.observation_id.clone();
        self.pending.push_back(observation);
        Ok(id)
    }

    pub fn query_state(&self, kind: StateQuery) -> Snapshot {
        let mut snapshot = Snapshot {
            rsu_id: self.rsu_id.clone(),
            kind,
            alerts: None,
            outputs: None,
            pending_observations: self.pending.len(),
            dropped_messages: self.dropped,
        };
        match kind {
            StateQuery::Latest => snapshot.outputs = Some(self.outputs.last().cloned().into_iter().collect()),
            StateQuery::Outputs => snapshot.outputs = Some(self.outputs.clone()),
            StateQuery::Alerts => {
                // newest first; later arrivals first among equal timestamps
                let mut alerts: Vec<Alert> = self.alerts.iter().rev().cloned().collect();
                alerts.sort_by_key(|a| std::cmp::Reverse(a.timestamp));
                snapshot.alerts = Some(alerts);
            }
        }
        snapshot
    }

    pub fn query(&self, kind: &str) -> Result<Snapshot, NodeError> {
        Ok(self.query_state(kind.parse()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, BackendResponse, NullBackend};
    use crate::prompt::AGENT_HEADER;
    use crate::segments::fixtures::segment;

    /// Answers every request with fixed text and remembers the prompts.
    struct Scripted {
        narration: String,
        prompts: Vec<String>,
        fail: bool,
    }

    impl Scripted {
        fn new(narration: &str) -> Self {
            Scripted {
                narration: narration.into(),
                prompts: Vec::new(),
                fail: false,
            }
        }
    }

    impl Backend for Scripted {
        fn name(&self) -> &str {
            "scripted"
        }

        fn infer(&mut self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
            self.prompts.push(request.prompt_text.clone());
            if self.fail {
                return Err(BackendError::Unavailable("down".into()));
            }
            Ok(BackendResponse {
                request_id: request.request_id.clone(),
                narration_text: self.narration.clone(),
                reasoning_text: String::new(),
                backend_latency_ms: 1.0,
            })
        }
    }

    fn node(id: &str) -> RsuNode {
        RsuNode::new(id, Arc::new(Taxonomy::builtin()), NodeConfig::default()).unwrap()
    }

    fn hazards(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn alert(id: &str, ts: u64) -> Alert {
        Alert {
            alert_id: id.into(),
            origin: "rsu-9".into(),
            hazard_label: "speeding".into(),
            evidence: String::new(),
            timestamp: ts,
        }
    }

    fn obs(category: Category, text: &str) -> Observation {
        Observation {
            observation_id: String::new(),
            reporter: "user-1".into(),
            category,
            text: text.into(),
            received_at: 0,
        }
    }

    #[test]
    fn detect_hazard_examples() {
        let t = Taxonomy::builtin();
        let set = hazards(&["speeding", "accident"]);
        assert_eq!(
            detect_hazard(&["vehicle speeding on lane 2"], &set, &t),
            BTreeSet::from(["speeding".to_string()])
        );
        assert!(detect_hazard(&[""], &set, &t).is_empty());
        assert_eq!(
            detect_hazard(&["accident ahead, vehicle speeding"], &set, &t),
            BTreeSet::from(["accident".to_string(), "speeding".to_string()])
        );
    }

    #[test]
    fn hazard_aliases_map_to_the_configured_phrase() {
        let t = Taxonomy::builtin();
        let found = detect_hazard(
            &["a crash at the junction", "car driving the wrong way"],
            &NodeConfig::default().hazard_set,
            &t,
        );
        assert_eq!(found, BTreeSet::from(["accident".to_string(), "wrong way".to_string()]));
    }

    #[test]
    fn unknown_hazard_rejected() {
        let cfg = NodeConfig {
            hazard_set: hazards(&["teleporting"]),
            ..NodeConfig::default()
        };
        assert!(matches!(
            RsuNode::new("n", Arc::new(Taxonomy::builtin()), cfg),
            Err(NodeError::UnknownHazard(_))
        ));
    }

    #[test]
    fn speeding_raises_one_alert() {
        let mut n = node("rsu-1");
        let mut b = Scripted::new("1 vehicle speeding. The vehicle keeps speeding past 2 pedestrians.");
        let alerts = n.process_segment(&segment("s", 10), &mut b, 40).unwrap();
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].hazard_label, "speeding");
        assert_eq!(alerts[0].alert_id, "rsu-1-a0");
        assert_eq!(alerts[0].timestamp, 40);
        assert_eq!(alerts[0].evidence, "1 vehicle speeding");
        assert!(n.has_seen("rsu-1-a0"));
    }

    #[test]
    fn no_hazard_no_alert() {
        let mut n = node("rsu-1");
        let alerts = n
            .process_segment(&segment("s", 10), &mut Scripted::new("2 pedestrians"), 0)
            .unwrap();
        assert!(alerts.is_empty());
        assert_eq!(n.outputs().len(), 1);
    }

    #[test]
    fn backend_failure_keeps_node_live() {
        let mut n = node("rsu-1");
        let mut b = Scripted::new("speeding");
        b.fail = true;
        assert!(n.process_segment(&segment("a", 10), &mut b, 0).unwrap().is_empty());
        assert!(!n.outputs()[0].is_ok());
        b.fail = false;
        assert_eq!(n.process_segment(&segment("b", 10), &mut b, 1).unwrap().len(), 1);
        assert!(n.outputs()[1].is_ok());
    }

    #[test]
    fn empty_segment_rejected() {
        let mut n = node("rsu-1");
        let mut s = segment("s", 1);
        s.frames.clear();
        assert!(matches!(
            n.process_segment(&s, &mut NullBackend, 0),
            Err(NodeError::EmptySegment(_))
        ));
    }

    #[test]
    fn observation_reaches_next_prompt_once() {
        let mut n = node("rsu-1");
        n.accept_observation(obs(Category::Agent, "stroller near crossing"))
            .unwrap();
        n.accept_observation(obs(Category::Agent, "dog off leash")).unwrap();
        let mut b = Scripted::new("nothing");
        n.process_segment(&segment("s1", 10), &mut b, 0).unwrap();
        n.process_segment(&segment("s2", 10), &mut b, 1).unwrap();
        let first = &b.prompts[0];
        let agent = &first[first.find(AGENT_HEADER).unwrap()..];
        let a = agent.find("stroller near crossing").unwrap();
        let d = agent.find("dog off leash").unwrap();
        assert!(a < d, "FIFO order");
        assert!(!b.prompts[1].contains("stroller"));
        assert_eq!(n.query_state(StateQuery::Latest).pending_observations, 0);
    }

    #[test]
    fn raw_strategy_still_merges_observations() {
        let cfg = NodeConfig {
            strategy: false,
            ..NodeConfig::default()
        };
        let mut n = RsuNode::new("rsu-1", Arc::new(Taxonomy::builtin()), cfg).unwrap();
        n.accept_observation(obs(Category::Environment, "fog rolling in"))
            .unwrap();
        let mut b = Scripted::new("x");
        n.process_segment(&segment("s", 5), &mut b, 0).unwrap();
        assert!(b.prompts[0].contains("fog rolling in"));
        assert!(!b.prompts[0].contains("[ENVIRONMENT]"));
    }

    #[test]
    fn empty_observation_rejected() {
        let mut n = node("rsu-1");
        assert!(matches!(
            n.accept_observation(obs(Category::Agent, " ")),
            Err(NodeError::EmptyObservation)
        ));
        assert_eq!(n.accept_observation(obs(Category::Agent, "x")).unwrap(), "rsu-1-o0");
    }

    #[test]
    fn duplicate_alerts_surface_once() {
        let mut n = node("rsu-2");
        let mut peer = Sequencer::new("rsu-9");
        let env = peer.seal(MessageType::Alert, alert("A1", 5), 5);
        assert!(n.handle_message(&env));
        assert!(!n.handle_message(&env));
        assert!(!n.handle_raw(&env.to_json()));
        let snap = n.query_state(StateQuery::Alerts);
        assert_eq!(snap.alerts.unwrap().len(), 1);
        assert_eq!(n.dropped_messages(), 0);
    }

    #[test]
    fn malformed_messages_are_counted() {
        let mut n = node("rsu-2");
        assert!(!n.handle_raw(br#"{"msg_type":"gossip","origin":"a","seq":0,"payload":null,"sent_at":0}"#));
        assert!(!n.handle_raw(b"not json"));
        let bad = Sequencer::new("a").seal(MessageType::Alert, "nope", 0);
        assert!(!n.handle_message(&bad));
        assert_eq!(n.dropped_messages(), 3);
        assert!(n.alerts().is_empty());
    }

    #[test]
    fn relay_enqueues_observation() {
        let mut n = node("rsu-2");
        let env = Sequencer::new("rsu-1").seal(MessageType::ObservationRelay, obs(Category::Motion, "bus stopping"), 0);
        assert!(n.handle_message(&env));
        assert_eq!(n.pending_observations().count(), 1);
    }

    #[test]
    fn alerts_newest_first() {
        let mut n = node("rsu-2");
        let mut peer = Sequencer::new("rsu-9");
        n.handle_message(&peer.seal(MessageType::Alert, alert("A1", 5), 5));
        n.handle_message(&peer.seal(MessageType::Alert, alert("A2", 9), 9));
        n.handle_message(&peer.seal(MessageType::Alert, alert("A3", 9), 9));
        let ids: Vec<_> = n
            .query_state(StateQuery::Alerts)
            .alerts
            .unwrap()
            .into_iter()
            .map(|a| a.alert_id)
            .collect();
        assert_eq!(ids, ["A3", "A2", "A1"]);
    }

    #[test]
    fn queries() {
        let mut n = node("rsu-1");
        assert_eq!(n.query_state(StateQuery::Latest).outputs.unwrap(), []);
        assert!(matches!(n.query("everything"), Err(NodeError::UnknownQuery(_))));
        n.process_segment(&segment("s", 5), &mut Scripted::new("2 pedestrians"), 0)
            .unwrap();
        let outputs = n.query("outputs").unwrap().outputs.unwrap();
        assert_eq!(outputs.len(), 1);
        assert_eq!(outputs[0].narration, "2 pedestrians");
        let json = serde_json::to_value(n.query("latest").unwrap()).unwrap();
        assert_eq!(json["kind"], "latest");
        assert_eq!(json["outputs"][0]["status"], "ok");
    }

    #[test]
    fn annotated_segments_are_scored() {
        let t = Arc::new(Taxonomy::builtin());
        let mut s = segment("s", 5);
        s.annotation.items = vec![crate::segments::AnnotationItem::counted(
            Category::Agent,
            "pedestrian",
            2,
        )];
        let mut n = RsuNode::new("rsu-1", t, NodeConfig::default()).unwrap();
        n.process_segment(&s, &mut Scripted::new("2 pedestrians"), 0).unwrap();
        let scores = n.outputs()[0].scores.unwrap();
        assert_eq!(scores.narration, Some(1.0));
        assert_eq!(scores.reasoning, None);
    }
}
