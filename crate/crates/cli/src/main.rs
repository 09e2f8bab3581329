use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use rsu_core::backend::timing::{measure_response, ClockMode, TimingOptions};
use rsu_core::backend::{Backend, BackendConfig, GroundTruth, MockConfig, NullBackend};
use rsu_core::experiment::{run_experiment, serve, ExperimentConfig, StrategySelection};
use rsu_core::prompt::PromptConfig;
use rsu_core::segments::{
    load_manifest, split_segment, write_manifest, Annotation, AnnotationItem, FrameObservation, FrameRecord, Segment,
};
use rsu_core::{Category, Taxonomy};

#[derive(Parser)]
#[command(
    name = "rsu",
    version,
    about = "Roadside-unit driving-behavior narration experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchBackend {
    Null,
    Mock,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write accuracy, timing and alert reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<StrategySelection>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure wall-clock response time over frame batches.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1,15,30")]
        batch: Vec<usize>,
        #[arg(long, default_value_t = 300)]
        latency_ms: u64,
        #[arg(long, default_value_t = 1)]
        frames_per_call: usize,
        #[arg(long, value_enum, default_value = "mock")]
        backend: BenchBackend,
        /// Take the segment (and remote settings) from an experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Start live nodes with HTTP query endpoints until interrupted.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Split every clip of a manifest into N parts and print them as a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        parts: usize,
    },
}

fn parse_strategy(s: &str) -> Result<StrategySelection, String> {
    s.parse()
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse().command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run {
            config,
            strategy,
            nodes,
            backend,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = strategy {
                cfg.strategy = s;
            }
            if let Some(n) = nodes {
                cfg.nodes = n;
            }
            if let Some(kind) = backend {
                cfg.backend = select_backend(&cfg.backend, kind);
            }
            if seed.is_some() {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let summary = run_experiment(&cfg)?;
            print!("{}", summary.report.render_table());
            println!();
            print!("{}", summary.timing.render());
            println!("alerts raised: {}", summary.alerts.len());
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Bench {
            batch,
            latency_ms,
            frames_per_call,
            backend,
            config,
            json,
        } => bench(&batch, latency_ms, frames_per_call, backend, config, json),
        Command::Serve { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            serve(&cfg)?;
            Ok(())
        }
        Command::Split { manifest, parts } => {
            let segments = load_manifest(&manifest).with_context(|| manifest.display().to_string())?;
            let mut out = Vec::new();
            for (i, s) in segments.iter().enumerate() {
                out.extend(
                    split_segment(s, parts).with_context(|| format!("{}: record {}", manifest.display(), i + 1))?,
                );
            }
            print!("{}", write_manifest(&out));
            Ok(())
        }
    }
}

fn select_backend(current: &BackendConfig, kind: BackendKind) -> BackendConfig {
    match (kind, current) {
        (BackendKind::Mock, BackendConfig::Mock(_)) | (BackendKind::Remote, BackendConfig::Remote(_)) => {
            current.clone()
        }
        (BackendKind::Mock, _) => BackendConfig::Mock(MockConfig::default()),
        (BackendKind::Remote, _) => BackendConfig::Remote(Default::default()),
    }
}

/// A clip with one plain observation per frame, for benchmarking without a manifest.
fn synthetic_segment(frames: usize) -> Segment {
    Segment {
        id: "bench".into(),
        source_clip: "bench.mp4".into(),
        frames: (0..frames)
            .map(|i| FrameRecord {
                index: i,
                timestamp_ms: i as u64 * 33,
                image_ref: format!("bench/{i:04}.jpg"),
                observations: vec![
                    FrameObservation {
                        category: Category::Agent,
                        text: "1 vehicle in the right lane".into(),
                    },
                    FrameObservation {
                        category: Category::Motion,
                        text: "vehicle moving forward".into(),
                    },
                ],
            })
            .collect(),
        annotation: Annotation {
            items: vec![
                AnnotationItem::counted(Category::Agent, "vehicle", 1),
                AnnotationItem::new(Category::Motion, "moving forward"),
            ],
            reasoning: Vec::new(),
        },
        part: None,
    }
}

fn bench(
    batch: &[usize],
    latency_ms: u64,
    frames_per_call: usize,
    backend: BenchBackend,
    config: Option<PathBuf>,
    json: bool,
) -> Result<()> {
    let longest = batch.iter().copied().max().unwrap_or(1);
    let cfg = config.map(ExperimentConfig::load).transpose()?;
    let taxonomy = Arc::new(match &cfg {
        Some(c) => c.load_taxonomy()?,
        None => Taxonomy::builtin(),
    });
    let segment = match &cfg {
        Some(c) if c.manifest.is_some() => c
            .load_segments(&taxonomy)?
            .into_iter()
            .find(|s| s.frames.len() >= longest)
            .with_context(|| format!("no segment has {longest} frames"))?,
        _ => synthetic_segment(longest),
    };
    let truth = GroundTruth::new();
    truth.insert_segment(&segment);
    let mut backend: Box<dyn Backend> = match backend {
        BenchBackend::Null => Box::new(NullBackend),
        BenchBackend::Mock => BackendConfig::Mock(MockConfig {
            synthetic_latency_ms: latency_ms,
            ..MockConfig::default()
        })
        .build(taxonomy.clone(), truth)?,
        BenchBackend::Remote => match cfg.as_ref().map(|c| &c.backend) {
            Some(remote @ BackendConfig::Remote(_)) => remote.build(taxonomy.clone(), truth)?,
            _ => bail!("--backend remote needs --config with a [backend] kind = \"remote\" section"),
        },
    };
    let prompt = cfg.as_ref().map_or_else(PromptConfig::default, |c| PromptConfig {
        keyframe_policy: c.keyframe_policy,
        window_half_width: c.window_half_width,
    });
    let options = TimingOptions {
        frames_per_call,
        prompt,
        transport_ms: cfg.as_ref().map_or(0.0, |c| c.effective_link().latency.mean_ms()),
        clock: ClockMode::Wall,
        ..TimingOptions::default()
    };
    let table = measure_response(&mut *backend, &segment, &taxonomy, batch, &options)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        print!("{}", table.render());
    }
    Ok(())
}
