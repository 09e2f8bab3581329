//! Sequential vs parallel execution of the batch workloads.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsu_core::backend::{mock_render, MockConfig};
use rsu_core::evaluation::{score_narration, score_narration_batch};
use rsu_core::exec::{self, ExecMode};
use rsu_core::experiment::{run_experiment, ExperimentConfig};
use rsu_core::segments::{Annotation, AnnotationItem};
use rsu_core::{Category, Taxonomy};

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn annotations(n: usize, taxonomy: &Taxonomy) -> Vec<Annotation> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| {
            let items = (0..rng.random_range(1..=6))
                .map(|_| {
                    let e = &taxonomy.entries()[rng.random_range(0..taxonomy.len())];
                    if e.category == Category::Agent {
                        AnnotationItem::counted(e.category, e.label.clone(), rng.random_range(1..=5))
                    } else {
                        AnnotationItem::new(e.category, e.label.clone())
                    }
                })
                .collect();
            Annotation {
                items,
                reasoning: Vec::new(),
            }
        })
        .collect()
}

fn scoring(c: &mut Criterion) {
    let t = Taxonomy::builtin();
    let config = MockConfig {
        corruption_rate: 0.2,
        ..MockConfig::default()
    };
    let cases: Vec<(String, Vec<AnnotationItem>)> = annotations(2_000, &t)
        .into_iter()
        .enumerate()
        .map(|(i, a)| (mock_render(&a, &t, &config, &format!("b{i}"), true).narration, a.items))
        .collect();
    let mut g = c.benchmark_group("score_narration_batch");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| black_box(score_narration_batch(m, &cases, &t)))
        });
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let t = Taxonomy::builtin();
    let anns = annotations(2_000, &t);
    let config = MockConfig {
        corruption_rate: 0.25,
        ..MockConfig::default()
    };
    let mut g = c.benchmark_group("mock_monte_carlo");
    for mode in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &m| {
            b.iter(|| {
                let matched: usize = exec::map_range(m, anns.len(), |i| {
                    let out = mock_render(&anns[i], &t, &config, &format!("mc{i}"), true);
                    score_narration(&out.narration, &anns[i].items, &t).map_or(0, |s| s.matched)
                })
                .into_iter()
                .sum();
                black_box(matched)
            })
        });
    }
    g.finish();
}

fn experiment(c: &mut Criterion) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/experiment.toml");
    let base = ExperimentConfig::load(path).expect("fixture config");
    let dir = tempfile::tempdir().expect("tempdir");
    let mut g = c.benchmark_group("run_experiment");
    g.sample_size(10);
    for mode in MODES {
        let cfg = ExperimentConfig {
            exec: mode,
            output_dir: dir.path().join(format!("{mode:?}")),
            ..base.clone()
        };
        g.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &cfg, |b, cfg| {
            b.iter(|| black_box(run_experiment(cfg).expect("run")))
        });
    }
    g.finish();
}

criterion_group!(benches, scoring, monte_carlo, experiment);
criterion_main!(benches);
