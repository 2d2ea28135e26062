//! Whole-run driver: ingest, parse once per project, then slice, generate and
//! verify each finding on a bounded worker pool.
//!
//! Output layout under the run directory:
//!
//! ```text
//! findings.jsonl          retained corpus, native format
//! config.json             configuration echo
//! ledger.jsonl            every LLM call
//! report.json summary.txt
//! <id>/bundle/            bundle.sol.txt, manifest.json
//! <id>/attempts/<k>/      draft.sol, diagnostics.txt (generation loop)
//! <id>/attempts/dv/<k>/   same for the instrumentation loop
//! <id>/workspace/         the Foundry scratch project
//! <id>/verdict.json | <id>/error.json
//! ```

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crate::bce::{run_bce, BceConfig, BceError, BugContextBundle};
use crate::dv::{run_dv, Decision, Verdict};
use crate::findings::{load_findings, normalize_finding, Finding, FindingCorpus, FindingFormat, IngestError};
use crate::gre::{run_engine, EngineConfig, EngineResult};
use crate::harness::{fetch_head_block, init_workspace, Executor, WorkspaceOptions};
use crate::llm::{CostLedger, LlmGateway};
use crate::par;
use crate::report::{build_report, write_report, ErrorRecord, FindingOutcome, ReportError, RunReport};
use crate::solidity::{parse_project, SourceModel};

pub const FINDINGS_FILE: &str = "findings.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const VERDICT_FILE: &str = "verdict.json";
pub const ERROR_FILE: &str = "error.json";
pub const DEFAULT_WORKERS: usize = 32;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub findings: PathBuf,
    pub format: FindingFormat,
    /// Finding `project_ref`s are resolved against this directory.
    pub project_root: PathBuf,
    pub out: PathBuf,
    pub workers: usize,
    pub engine: EngineConfig,
    pub bce: BceConfig,
    pub fork_url: Option<String>,
    pub fork_block: Option<u64>,
    /// Skip findings that already have a verdict record.
    pub resume: bool,
    /// Free-form description of the backends, echoed into the report.
    pub backends: serde_json::Value,
}

impl RunConfig {
    pub fn new(findings: impl Into<PathBuf>, project_root: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            findings: findings.into(),
            format: FindingFormat::Native,
            project_root: project_root.into(),
            out: out.into(),
            workers: DEFAULT_WORKERS,
            engine: EngineConfig::default(),
            bce: BceConfig::default(),
            fork_url: None,
            fork_block: None,
            resume: false,
            backends: serde_json::Value::Null,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.workers == 0 {
            return Err(PipelineError::Config("worker count must be at least 1".into()));
        }
        self.engine.validate().map_err(PipelineError::Config)
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "findings": self.findings,
            "project_root": self.project_root,
            "workers": self.workers,
            "retry_budget": self.engine.retry_budget,
            "temperature": self.engine.temperature,
            "timeout_seconds": self.engine.timeout.as_secs(),
            "candidate_cap": self.bce.candidate_cap,
            "fork": self.fork_url.is_some(),
            "fork_block": self.fork_block,
            "backends": self.backends,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0} must run first: {1}")]
    StageOrder(&'static str, String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(v).expect("record serializes") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Per-project source models, parsed once and shared read-only.
pub struct ProjectCache {
    models: HashMap<PathBuf, Result<Arc<SourceModel>, String>>,
}

impl ProjectCache {
    pub fn build(root: &Path, corpus: &FindingCorpus) -> Self {
        let projects: Vec<PathBuf> = corpus.by_project().into_keys().collect();
        let parsed = par::map(&projects, |p| parse_project(&root.join(p)).map(Arc::new).map_err(|e| e.to_string()));
        ProjectCache {
            models: projects.into_iter().zip(parsed).collect(),
        }
    }

    pub fn get(&self, project_ref: &Path) -> Result<Arc<SourceModel>, String> {
        self.models.get(project_ref).cloned().unwrap_or_else(|| Err(format!("project {} was not loaded", project_ref.display())))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

struct StageFailure {
    stage: &'static str,
    message: String,
}

fn fail(stage: &'static str) -> impl FnOnce(String) -> StageFailure {
    move |message| StageFailure { stage, message }
}

/// Ingest, parse and slice one finding; writes `<id>/bundle/`.
fn slice_one(f: &Finding, cache: &ProjectCache, llm: &LlmGateway, cfg: &RunConfig, dir: &Path) -> Result<(Finding, BugContextBundle), StageFailure> {
    let model = cache.get(&f.project_ref).map_err(fail("parse"))?;
    let f = normalize_finding(f, &model).map_err(|e| fail("ingest")(e.to_string()))?;
    let bundle = run_bce(&f, &model, llm, &cfg.bce).map_err(|e| fail("bce")(e.to_string()))?;
    bundle.export(&dir.join("bundle")).map_err(|e: BceError| fail("bce")(e.to_string()))?;
    Ok((f, bundle))
}

fn run_one(
    f: &Finding,
    cache: &ProjectCache,
    llm: &LlmGateway,
    executor: &dyn Executor,
    cfg: &RunConfig,
    ws_opts: &WorkspaceOptions,
) -> Result<Verdict, StageFailure> {
    let dir = cfg.out.join(&f.id);
    let (f, bundle) = slice_one(f, cache, llm, cfg, &dir)?;
    let ws = init_workspace(&f, &bundle, &dir.join("workspace"), ws_opts).map_err(|e| fail("workspace")(e.to_string()))?;
    let attempts = dir.join("attempts");
    let gre = run_engine(&f, &bundle, &ws, &cfg.engine, llm, executor, Some(&attempts)).map_err(|e| fail("gre")(e.to_string()))?;
    let mut v = match &gre {
        EngineResult::Success { draft, .. } => {
            run_dv(&f, &bundle, draft, &ws, &cfg.engine, llm, executor, Some(&attempts.join("dv"))).map_err(|e| fail("dv")(e.to_string()))?
        }
        EngineResult::Failed { last, last_draft, .. } => {
            let mut v = Verdict::new(
                &f.id,
                Decision::GenerationFailed,
                format!("non-reproducible: no passing test within {} attempts ({:?} failure last)", cfg.engine.retry_budget, last.phase),
            );
            v.poc = last_draft.as_ref().map(|d| d.text.clone());
            v
        }
    };
    v.gre_attempts = gre.attempts_used();
    v.cost = llm.cost_for(&f.id);
    Ok(v)
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into())
}

/// Runs one finding to an outcome and records it; never propagates failure.
fn process(f: &Finding, cache: &ProjectCache, llm: &LlmGateway, executor: &dyn Executor, cfg: &RunConfig, ws_opts: &WorkspaceOptions) -> FindingOutcome {
    let dir = cfg.out.join(&f.id);
    let _ = std::fs::remove_file(dir.join(ERROR_FILE));
    let result = catch_unwind(AssertUnwindSafe(|| run_one(f, cache, llm, executor, cfg, ws_opts)));
    let outcome = match result {
        Ok(Ok(v)) => FindingOutcome::Decided(Box::new(v)),
        Ok(Err(e)) => FindingOutcome::Errored(ErrorRecord {
            finding_id: f.id.clone(),
            stage: e.stage.into(),
            message: e.message,
        }),
        Err(p) => FindingOutcome::Errored(ErrorRecord {
            finding_id: f.id.clone(),
            stage: "panic".into(),
            message: panic_message(p),
        }),
    };
    let written = std::fs::create_dir_all(&dir).map_err(io_err(&dir)).and_then(|_| match &outcome {
        FindingOutcome::Decided(v) => write_json(&dir.join(VERDICT_FILE), v),
        FindingOutcome::Errored(e) => write_json(&dir.join(ERROR_FILE), e),
    });
    if let Err(e) = written {
        log::error!("{}: {e}", f.id);
    }
    match &outcome {
        FindingOutcome::Decided(v) => log::info!("{}: {} ({})", f.id, v.decision.as_str(), v.reason),
        FindingOutcome::Errored(e) => log::warn!("{}: {} stage failed: {}", f.id, e.stage, e.message),
    }
    outcome
}

fn load_corpus(cfg: &RunConfig) -> Result<FindingCorpus, PipelineError> {
    Ok(load_findings(&cfg.findings, cfg.format)?.retain_high())
}

fn workspace_options(cfg: &RunConfig) -> Result<WorkspaceOptions, PipelineError> {
    let mut opts = WorkspaceOptions {
        fork_url: cfg.fork_url.clone(),
        pinned_block: cfg.fork_block,
    };
    if let (Some(url), None) = (&cfg.fork_url, cfg.fork_block) {
        // One block for the whole run so every finding sees the same chain.
        let block = fetch_head_block(url, Duration::from_secs(30)).map_err(|e| PipelineError::Config(format!("fork endpoint: {e}")))?;
        opts.pinned_block = Some(block);
    }
    Ok(opts)
}

/// The full pipeline over every high-severity finding.
pub fn validate(cfg: &RunConfig, llm: &LlmGateway, executor: &dyn Executor) -> Result<RunReport, PipelineError> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let ws_opts = workspace_options(cfg)?;
    let mut echo = cfg.echo();
    echo["fork_block"] = serde_json::json!(ws_opts.pinned_block);
    std::fs::write(cfg.out.join(FINDINGS_FILE), corpus.to_native()).map_err(io_err(&cfg.out))?;
    write_json(&cfg.out.join(CONFIG_FILE), &echo)?;

    let mut carried = CostLedger::new();
    let mut done: BTreeMap<String, FindingOutcome> = BTreeMap::new();
    if cfg.resume {
        let old = std::fs::read_to_string(cfg.out.join(LEDGER_FILE)).ok().and_then(|t| CostLedger::from_jsonl(&t).ok()).unwrap_or_default();
        for f in &corpus.items {
            let p = cfg.out.join(&f.id).join(VERDICT_FILE);
            if let Ok(v) = read_json::<Verdict>(&p) {
                for e in old.entries().iter().filter(|e| e.finding_id == f.id) {
                    carried.record(e.clone());
                }
                done.insert(f.id.clone(), FindingOutcome::Decided(Box::new(v)));
            }
        }
        log::info!("resuming: {} of {} findings already decided", done.len(), corpus.len());
    }
    let todo: Vec<&Finding> = corpus.items.iter().filter(|f| !done.contains_key(&f.id)).collect();
    let cache = ProjectCache::build(&cfg.project_root, &FindingCorpus { items: todo.iter().map(|f| (*f).clone()).collect() });
    let fresh = par::map_bounded(cfg.workers, &todo, |f| process(f, &cache, llm, executor, cfg, &ws_opts));

    let mut ledger = carried;
    for e in llm.ledger().entries() {
        ledger.record(e.clone());
    }
    let p = cfg.out.join(LEDGER_FILE);
    std::fs::write(&p, ledger.to_jsonl()).map_err(io_err(&p))?;

    let outcomes: Vec<FindingOutcome> = done.into_values().chain(fresh).collect();
    let report = build_report(&corpus, &outcomes, &ledger, echo)?;
    write_report(&report, &cfg.out)?;
    Ok(report)
}

/// Slices every finding (or only `only`) and writes the bundles; no
/// generation or execution happens.
/// Per finding: the bundle directory, or why slicing failed.
pub type SliceResults = Vec<(String, Result<PathBuf, String>)>;

pub fn slice(cfg: &RunConfig, llm: &LlmGateway, only: Option<&str>) -> Result<SliceResults, PipelineError> {
    cfg.validate()?;
    let mut corpus = load_corpus(cfg)?;
    if let Some(id) = only {
        corpus.items.retain(|f| f.id == id);
        if corpus.is_empty() {
            return Err(PipelineError::Config(format!("no high-severity finding with id {id}")));
        }
    }
    let cache = ProjectCache::build(&cfg.project_root, &corpus);
    let results = par::map_bounded(cfg.workers, &corpus.items, |f| {
        let dir = cfg.out.join(&f.id);
        match slice_one(f, &cache, llm, cfg, &dir) {
            Ok(_) => Ok(dir.join("bundle")),
            Err(e) => Err(format!("{}: {}", e.stage, e.message)),
        }
    });
    Ok(corpus.items.iter().map(|f| f.id.clone()).zip(results).collect())
}

/// Rebuilds the report from a run directory's stored records.
pub fn report_from_dir(out: &Path) -> Result<RunReport, PipelineError> {
    let findings = out.join(FINDINGS_FILE);
    if !findings.is_file() {
        return Err(PipelineError::StageOrder("validate", format!("{} has no {FINDINGS_FILE}", out.display())));
    }
    let corpus = load_findings(&findings, FindingFormat::Native)?;
    let config: serde_json::Value = read_json(&out.join(CONFIG_FILE))?;
    let ledger_path = out.join(LEDGER_FILE);
    let ledger = match std::fs::read_to_string(&ledger_path) {
        Ok(t) => CostLedger::from_jsonl(&t).map_err(|e| PipelineError::Io {
            path: ledger_path.clone(),
            message: e.to_string(),
        })?,
        Err(_) => CostLedger::new(),
    };
    let mut outcomes = Vec::new();
    for f in &corpus.items {
        let dir = out.join(&f.id);
        if dir.join(VERDICT_FILE).is_file() {
            outcomes.push(FindingOutcome::Decided(Box::new(read_json(&dir.join(VERDICT_FILE))?)));
        } else if dir.join(ERROR_FILE).is_file() {
            outcomes.push(FindingOutcome::Errored(read_json(&dir.join(ERROR_FILE))?));
        } else {
            return Err(PipelineError::StageOrder("validate", format!("finding {} has no verdict record", f.id)));
        }
    }
    let report = build_report(&corpus, &outcomes, &ledger, config)?;
    write_report(&report, out)?;
    Ok(report)
}
