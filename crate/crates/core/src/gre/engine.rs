use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::bce::BugContextBundle;
use crate::findings::Finding;
use crate::harness::{write_test, Diagnostics, ExecContext, ExecutionOutcome, Executor, HarnessError, LoopKind, Phase, Workspace};
use crate::llm::{extract_code_block, GatewayError, LlmGateway, PromptPayload};

use super::draft::{PoCDraft, Provenance};
use super::prompt::{build_generation_prompt, PromptContext, EXEMPLAR};
use super::sanitize::{sanitize_with, SanitizeTarget};

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// B: generate/repair rounds per loop.
    pub retry_budget: u32,
    pub temperature: f32,
    pub exemplar: String,
    pub timeout: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            retry_budget: 5,
            temperature: crate::llm::DEFAULT_TEMPERATURE,
            exemplar: EXEMPLAR.to_string(),
            timeout: crate::harness::DEFAULT_TIMEOUT,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.retry_budget == 0 {
            return Err("retry budget must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum EngineResult {
    Success {
        draft: PoCDraft,
        execution: ExecutionOutcome,
        attempts_used: u32,
    },
    Failed {
        last: Diagnostics,
        last_draft: Option<PoCDraft>,
        attempts_used: u32,
        /// Some attempt compiled and ran green but was rejected afterwards.
        executed: bool,
    },
}

impl EngineResult {
    pub fn attempts_used(&self) -> u32 {
        match self {
            EngineResult::Success { attempts_used, .. } | EngineResult::Failed { attempts_used, .. } => *attempts_used,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, EngineResult::Success { .. })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("engine configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Artifacts { path: std::path::PathBuf, source: std::io::Error },
}

/// Produces the prompt for each round.
pub trait DraftPrompter: Sync {
    fn prompt(&self, attempt: u32, prev: Option<(&PoCDraft, &Diagnostics)>) -> PromptPayload;
}

/// Extra check after a green run; a returned diagnostic fails the attempt.
pub trait Acceptance: Sync {
    fn check(&self, draft: &PoCDraft, outcome: &ExecutionOutcome) -> Result<(), Diagnostics>;
}

pub struct AcceptAll;

impl Acceptance for AcceptAll {
    fn check(&self, _: &PoCDraft, _: &ExecutionOutcome) -> Result<(), Diagnostics> {
        Ok(())
    }
}

/// Everything a loop touches besides its prompts.
pub struct LoopIo<'a> {
    pub finding_id: &'a str,
    pub ws: &'a Workspace,
    pub executor: &'a dyn Executor,
    pub llm: &'a LlmGateway,
    pub loop_kind: LoopKind,
    pub target: &'a SanitizeTarget,
    /// `k/draft.sol` and `k/diagnostics.txt` go here when set.
    pub artifacts: Option<&'a Path>,
}

fn persist(dir: Option<&Path>, k: u32, draft: &PoCDraft, diag: &str) -> Result<(), EngineError> {
    let Some(dir) = dir else { return Ok(()) };
    let d = dir.join(k.to_string());
    let err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EngineError::Artifacts { path, source }
    };
    std::fs::create_dir_all(&d).map_err(err(&d))?;
    std::fs::write(d.join("draft.sol"), &draft.text).map_err(err(&d))?;
    std::fs::write(d.join("diagnostics.txt"), diag).map_err(err(&d))?;
    Ok(())
}

/// Generate, sanitize, write, compile, run; carry the latest draft and its
/// diagnostics into the next round, at most `budget` rounds.
pub fn run_loop(io: &LoopIo<'_>, prompter: &dyn DraftPrompter, accept: &dyn Acceptance, budget: u32) -> Result<EngineResult, EngineError> {
    if budget == 0 {
        return Err(EngineError::Config("retry budget must be at least 1".into()));
    }
    let mut prev: Option<(PoCDraft, Diagnostics)> = None;
    let mut executed = false;
    for k in 0..budget {
        let prompt = prompter.prompt(k, prev.as_ref().map(|(d, g)| (d, g)));
        let reply = io.llm.complete(&prompt)?;
        let generated = PoCDraft::new(extract_code_block(&reply).text, k, Provenance::Generated);
        let draft = match sanitize_with(&generated, io.target) {
            Ok(d) => d,
            Err(e) => {
                let diag = Diagnostics::failed(Phase::Compile, format!("sanitizer rejected the draft: {e}\n"));
                log::info!("{} {:?} attempt {k}: {e}", io.finding_id, io.loop_kind);
                persist(io.artifacts, k, &generated, &diag.render())?;
                prev = Some((generated.with_provenance(Provenance::Carried), diag));
                continue;
            }
        };
        write_test(io.ws, &draft)?;
        let ctx = ExecContext {
            finding_id: io.finding_id,
            loop_kind: io.loop_kind,
            attempt: k,
        };
        let outcome = io.executor.execute(io.ws, &ctx)?;
        let verdict = if outcome.succeeded() {
            executed = true;
            accept.check(&draft, &outcome)
        } else {
            Err(outcome.deciding().clone())
        };
        match verdict {
            Ok(()) => {
                let mut log = outcome.compile.render();
                if let Some(r) = &outcome.runtime {
                    log.push_str(&r.render());
                }
                persist(io.artifacts, k, &draft, &log)?;
                return Ok(EngineResult::Success {
                    draft,
                    execution: outcome,
                    attempts_used: k + 1,
                });
            }
            Err(diag) => {
                log::info!(
                    "{} {:?} attempt {k}: {:?} failure",
                    io.finding_id,
                    io.loop_kind,
                    diag.phase
                );
                persist(io.artifacts, k, &draft, &diag.render())?;
                prev = Some((draft.with_provenance(Provenance::Carried), diag));
            }
        }
    }
    let (last_draft, last) = match prev {
        Some((d, g)) => (Some(d), g),
        None => (None, Diagnostics::failed(Phase::Compile, "no attempt was made")),
    };
    Ok(EngineResult::Failed {
        last,
        last_draft,
        attempts_used: budget,
        executed,
    })
}

/// Prompts for plain PoC generation and repair.
pub struct GrePrompter<'a> {
    pub finding: &'a Finding,
    pub bundle: &'a BugContextBundle,
    pub ctx: PromptContext<'a>,
}

impl DraftPrompter for GrePrompter<'_> {
    fn prompt(&self, attempt: u32, prev: Option<(&PoCDraft, &Diagnostics)>) -> PromptPayload {
        build_generation_prompt(self.finding, self.bundle, attempt, prev, &self.ctx)
    }
}

/// The generate/repair/execute loop for one finding.
pub fn run_engine(
    f: &Finding,
    bundle: &BugContextBundle,
    ws: &Workspace,
    cfg: &EngineConfig,
    llm: &LlmGateway,
    executor: &dyn Executor,
    artifacts: Option<&Path>,
) -> Result<EngineResult, EngineError> {
    cfg.validate().map_err(EngineError::Config)?;
    let target = SanitizeTarget::from_bundle(bundle);
    let prompter = GrePrompter {
        finding: f,
        bundle,
        ctx: PromptContext {
            test_name: &ws.test_name,
            exemplar: &cfg.exemplar,
            temperature: cfg.temperature,
        },
    };
    let io = LoopIo {
        finding_id: &f.id,
        ws,
        executor,
        llm,
        loop_kind: LoopKind::Gre,
        target: &target,
        artifacts,
    };
    run_loop(&io, &prompter, &AcceptAll, cfg.retry_budget)
}
