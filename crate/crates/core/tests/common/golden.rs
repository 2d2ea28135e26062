//! The shipped golden corpus: six high-severity findings over small projects,
//! scripted LLM replies and scripted forge results.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use pocgen::dv::Decision;
use pocgen::harness::{FakeExecutor, FakeRecord};
use pocgen::llm::{LlmGateway, TranscriptBackend, TranscriptRecord};
use pocgen::pipeline::{self, RunConfig};
use pocgen::report::RunReport;

pub fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// Expected decision per finding id.
pub const EXPECTED: &[(&str, Decision)] = &[
    ("acc-vuln", Decision::Validated),
    ("acc-fixed", Decision::NotValidated),
    ("priv-vuln", Decision::Validated),
    ("priv-fixed", Decision::NotValidated),
    ("bank-vuln", Decision::Validated),
    ("token-vuln", Decision::Validated),
];

/// Transcript records with `text_file` inlined, so callers can add or
/// replace records before building a backend.
pub fn transcript() -> Vec<TranscriptRecord> {
    let base = dir();
    let text = std::fs::read_to_string(base.join("transcript.jsonl")).unwrap();
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut r: TranscriptRecord = serde_json::from_str(l).unwrap();
            if let Some(f) = r.text_file.take() {
                r.text = Some(std::fs::read_to_string(base.join(f)).unwrap());
            }
            r
        })
        .collect()
}

pub fn fake_records() -> Vec<FakeRecord> {
    let text = std::fs::read_to_string(dir().join("fake-executor.jsonl")).unwrap();
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// `base` with every record of `extra` replacing a base record under the same key.
pub fn with_transcript(mut base: Vec<TranscriptRecord>, extra: Vec<TranscriptRecord>) -> Vec<TranscriptRecord> {
    base.retain(|r| !extra.iter().any(|e| (&e.finding, e.stage, e.attempt) == (&r.finding, r.stage, r.attempt)));
    base.extend(extra);
    base
}

pub fn with_fakes(mut base: Vec<FakeRecord>, extra: Vec<FakeRecord>) -> Vec<FakeRecord> {
    base.retain(|r| !extra.iter().any(|e| (&e.finding, e.loop_kind, e.attempt) == (&r.finding, r.loop_kind, r.attempt)));
    base.extend(extra);
    base
}

pub struct Run {
    pub out: tempfile::TempDir,
    pub report: RunReport,
    pub backend: Arc<TranscriptBackend>,
    pub llm: LlmGateway,
    pub exec: FakeExecutor,
}

impl Run {
    pub fn decision(&self, id: &str) -> String {
        self.report.rows.iter().find(|r| r.finding_id == id).map(|r| r.outcome.clone()).unwrap_or_default()
    }
}

pub fn config(out: &Path, workers: usize) -> RunConfig {
    let g = dir();
    let mut cfg = RunConfig::new(g.join("findings.jsonl"), g.join("projects"), out);
    cfg.workers = workers;
    cfg
}

/// Runs the golden corpus with the given records into a fresh directory.
pub fn run_with(workers: usize, records: Vec<TranscriptRecord>, fakes: Vec<FakeRecord>) -> Run {
    let out = tempfile::tempdir().unwrap();
    let backend = Arc::new(TranscriptBackend::from_records(records).unwrap());
    let llm = LlmGateway::new(backend.clone());
    let exec = FakeExecutor::new(fakes).unwrap();
    let report = pipeline::validate(&config(out.path(), workers), &llm, &exec).unwrap();
    Run {
        out,
        report,
        backend,
        llm,
        exec,
    }
}

pub fn run(workers: usize) -> Run {
    run_with(workers, transcript(), fake_records())
}
