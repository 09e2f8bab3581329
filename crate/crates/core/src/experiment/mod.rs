//! End-to-end experiments over simulated RSU clusters.
//!
//! [`run_experiment`] splits every manifest clip across the nodes, processes
//! the parts on a virtual clock, relays alerts over the simulated network and
//! writes accuracy, timing and alert reports. [`Cluster`] runs the same nodes
//! live, each with an HTTP query endpoint and a TCP peer socket.

mod run;
mod serve;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendConfig;
use crate::exec::ExecMode;
use crate::network::LinkConfig;
use crate::node::{NodeConfig, DEFAULT_HAZARDS};
use crate::prompt::{PromptConfig, DEFAULT_TEMPLATE, DEFAULT_WINDOW_HALF_WIDTH};
use crate::segments::KeyframePolicy;
use crate::taxonomy::Taxonomy;

pub use run::{
    run_experiment, AlertLogEntry, RunSummary, ACCURACY_JSON, ACCURACY_TXT, ALERTS_JSONL, TIMING_JSON, TIMING_TXT,
};
pub use serve::{serve, Cluster, NodeHandle};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{}: {message}", file.display())]
    Load { file: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("writing {}: {source}", file.display())]
    Write { file: PathBuf, source: std::io::Error },
    #[error("node {0} is not running")]
    NodeGone(String),
    #[error(transparent)]
    Node(#[from] crate::node::NodeError),
    #[error(transparent)]
    Backend(#[from] crate::backend::BackendError),
    #[error(transparent)]
    Timing(#[from] crate::backend::timing::TimingError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
}

/// Which prompt-strategy settings to run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategySelection {
    #[default]
    On,
    Off,
    Both,
}

impl StrategySelection {
    pub fn settings(self) -> &'static [bool] {
        match self {
            StrategySelection::On => &[true],
            StrategySelection::Off => &[false],
            StrategySelection::Both => &[true, false],
        }
    }
}

impl std::str::FromStr for StrategySelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(StrategySelection::On),
            "off" => Ok(StrategySelection::Off),
            "both" => Ok(StrategySelection::Both),
            other => Err(format!("unknown strategy {other:?} (expected on, off or both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub batch_sizes: Vec<usize>,
    pub frames_per_call: usize,
    /// Segment to time; defaults to the first one long enough for every batch.
    pub segment: Option<String>,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            batch_sizes: vec![1, 15, 30],
            frames_per_call: 1,
            segment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    /// Node i serves HTTP on `http_base_port + i`; 0 picks free ports.
    pub http_base_port: u16,
    /// Node i listens for peers on `peer_base_port + i`; 0 picks free ports.
    pub peer_base_port: u16,
    /// Dispatch the manifest across the nodes once at startup.
    pub replay: bool,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1".into(),
            http_base_port: 8700,
            peer_base_port: 7400,
            replay: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    /// Built-in taxonomy when absent.
    pub taxonomy: Option<PathBuf>,
    pub nodes: usize,
    pub strategy: StrategySelection,
    pub keyframe_policy: KeyframePolicy,
    pub window_half_width: usize,
    pub template: String,
    pub enrichment_examples: usize,
    pub backend: BackendConfig,
    pub link: LinkConfig,
    pub hazard_set: Vec<String>,
    pub output_dir: PathBuf,
    /// Overrides the mock and link seeds when set.
    pub seed: Option<u64>,
    pub exec: ExecMode,
    /// Virtual time between consecutive clip dispatches.
    pub dispatch_interval_ms: u64,
    pub timing: TimingConfig,
    pub serve: ServeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifest: None,
            taxonomy: None,
            nodes: 3,
            strategy: StrategySelection::On,
            keyframe_policy: KeyframePolicy::default(),
            window_half_width: DEFAULT_WINDOW_HALF_WIDTH,
            template: DEFAULT_TEMPLATE.into(),
            enrichment_examples: 0,
            backend: BackendConfig::default(),
            link: LinkConfig::default(),
            hazard_set: DEFAULT_HAZARDS.iter().map(|s| s.to_string()).collect(),
            output_dir: PathBuf::from("out"),
            seed: None,
            exec: ExecMode::Parallel,
            dispatch_interval_ms: 1000,
            timing: TimingConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a TOML config. Relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let load_err = |message: String| ExperimentError::Load {
            file: path.to_path_buf(),
            message,
        };
        let source = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let mut config: ExperimentConfig = toml::from_str(&source).map_err(|e| load_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.manifest, &mut config.taxonomy].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.nodes == 0 {
            return Err(ExperimentError::Config("nodes must be at least 1".into()));
        }
        if self.dispatch_interval_ms == 0 {
            return Err(ExperimentError::Config("dispatch_interval_ms must be positive".into()));
        }
        if self.timing.frames_per_call == 0 {
            return Err(ExperimentError::Config(
                "timing.frames_per_call must be positive".into(),
            ));
        }
        if let KeyframePolicy::Stride(0) = self.keyframe_policy {
            return Err(ExperimentError::Config("keyframe stride must be positive".into()));
        }
        self.link.validate()?;
        if let BackendConfig::Mock(m) = &self.backend {
            m.validate()?;
        }
        Ok(())
    }

    /// The backend config with the global seed applied.
    pub fn effective_backend(&self) -> BackendConfig {
        let mut backend = self.backend.clone();
        if let (Some(seed), BackendConfig::Mock(m)) = (self.seed, &mut backend) {
            m.seed = seed;
        }
        backend
    }

    pub fn effective_link(&self) -> LinkConfig {
        let mut link = self.link.clone();
        if let Some(seed) = self.seed {
            link.seed = seed;
        }
        link
    }

    pub fn node_config(&self, strategy: bool) -> NodeConfig {
        NodeConfig {
            prompt: PromptConfig {
                keyframe_policy: self.keyframe_policy,
                window_half_width: self.window_half_width,
            },
            template_id: self.template.clone(),
            strategy,
            hazard_set: self.hazard_set.clone(),
            enrichment_examples: self.enrichment_examples,
        }
    }

    pub fn node_ids(&self) -> Vec<String> {
        (1..=self.nodes).map(|i| format!("rsu-{i}")).collect()
    }

    pub fn load_taxonomy(&self) -> Result<Taxonomy, ExperimentError> {
        match &self.taxonomy {
            None => Ok(Taxonomy::builtin()),
            Some(path) => Taxonomy::load(path).map_err(|e| ExperimentError::Load {
                file: path.clone(),
                message: e.to_string(),
            }),
        }
    }

    /// Loads the manifest and checks every annotation label against `taxonomy`.
    pub fn load_segments(&self, taxonomy: &Taxonomy) -> Result<Vec<crate::segments::Segment>, ExperimentError> {
        let Some(path) = &self.manifest else {
            return Ok(Vec::new());
        };
        let load_err = |message: String| ExperimentError::Load {
            file: path.clone(),
            message,
        };
        let segments = crate::segments::load_manifest(path).map_err(|e| load_err(e.to_string()))?;
        for (i, s) in segments.iter().enumerate() {
            s.check_labels(taxonomy)
                .map_err(|e| load_err(format!("record {}: {e}", i + 1)))?;
        }
        Ok(segments)
    }
}
