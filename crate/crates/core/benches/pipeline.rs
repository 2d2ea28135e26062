//! Parallel core against the sequential fallback: parsing many files, and a
//! whole offline run where each scripted LLM reply costs a few milliseconds.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pocgen::harness::FakeExecutor;
use pocgen::llm::{LlmGateway, TranscriptBackend};
use pocgen::par;
use pocgen::pipeline::{self, RunConfig};
use pocgen::solidity::parser::parse_file;

fn sources() -> Vec<String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden/projects");
    let mut out = Vec::new();
    for p in std::fs::read_dir(&root).unwrap() {
        let src = p.unwrap().path().join("src");
        for f in std::fs::read_dir(src).unwrap() {
            out.push(std::fs::read_to_string(f.unwrap().path()).unwrap());
        }
    }
    // enough work per call for the pool to matter
    out.iter().cycle().take(256).cloned().collect()
}

fn parsing(c: &mut Criterion) {
    let srcs = sources();
    let mut g = c.benchmark_group("parse");
    g.bench_function("parallel", |b| b.iter(|| par::map(&srcs, |s| parse_file(s).is_ok())));
    g.bench_function("sequential", |b| b.iter(|| par::map_sequential(&srcs, |s| parse_file(s).is_ok())));
    g.finish();
}

fn golden_run(c: &mut Criterion) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let mut g = c.benchmark_group("golden_run");
    g.sample_size(10);
    for workers in [1usize, 6] {
        g.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &workers| {
            b.iter(|| {
                let out = tempfile::tempdir().unwrap();
                let backend = TranscriptBackend::load(&dir.join("transcript.jsonl")).unwrap().with_latency(Duration::from_millis(5));
                let llm = LlmGateway::new(Arc::new(backend));
                let exec = FakeExecutor::load(&dir.join("fake-executor.jsonl")).unwrap();
                let mut cfg = RunConfig::new(dir.join("findings.jsonl"), dir.join("projects"), out.path());
                cfg.workers = workers;
                pipeline::validate(&cfg, &llm, &exec).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, parsing, golden_run);
criterion_main!(benches);
