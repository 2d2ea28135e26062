//! Rewriting a passing test so it brackets the trigger with the plan's calls
//! and logs markers, run through the same repair loop as generation.

use std::fmt::Write as _;
use std::path::Path;

use crate::findings::Finding;
use crate::gre::{append_feedback, run_loop, Acceptance, DraftPrompter, EngineError, EngineResult, LoopIo, PoCDraft, SanitizeTarget};
use crate::harness::{Diagnostics, ExecutionOutcome, Executor, LoopKind, Phase, Workspace};
use crate::llm::{LlmGateway, PromptPayload, Stage};

use super::markers::{MarkerTranscript, MARKER_PREFIX};
use super::plan::DvPlan;

const SYSTEM_INSERT: &str = "You instrument Foundry proof-of-concept tests for differential \
verification. Keep the test's logic and its trigger. Immediately before the trigger, perform the \
given action and read every state query; immediately after it, perform the same action and read \
the same queries again. Log every reading and the trigger with console.log, using exactly the \
marker format described. Reply with a single ```solidity code block holding the complete test file.";

pub const SECTION_PLAN: &str = "## Differential plan";
pub const SECTION_MARKERS: &str = "## Marker format";

fn marker_section(plan: &DvPlan) -> String {
    let mut s = String::new();
    s.push_str(SECTION_MARKERS);
    s.push('\n');
    let _ = writeln!(s, "Each log line is `{MARKER_PREFIX}|<PHASE>|<query-id>|<value>` and nothing else, where PHASE is PRE, TRIGGER or POST.");
    s.push_str("- PRE: one line per state query, read before the trigger\n");
    s.push_str("- TRIGGER: one line at the trigger, query-id names the step, value may be empty\n");
    s.push_str("- POST: one line per state query, read after the trigger\n");
    let ids = plan.query_ids();
    let _ = writeln!(s, "Use these query ids verbatim: {}", ids.join(", "));
    s.push_str("Import \"forge-std/console.sol\" if needed. Example:\n```solidity\n");
    let id = ids.first().copied().unwrap_or("q");
    let _ = writeln!(
        s,
        "console.log(string.concat(\"{MARKER_PREFIX}|PRE|{id}|\", vm.toString(value)));\nconsole.log(\"{MARKER_PREFIX}|TRIGGER|exploit|\");\nconsole.log(string.concat(\"{MARKER_PREFIX}|POST|{id}|\", vm.toString(value)));"
    );
    s.push_str("```\n");
    s
}

pub fn insertion_task(f: &Finding, poc: &PoCDraft, plan: &DvPlan) -> String {
    let mut s = String::new();
    s.push_str("## Finding\n");
    let _ = writeln!(s, "report: {}", f.narrative.trim());
    s.push_str("\n## Passing test\n```solidity\n");
    s.push_str(&poc.text);
    if !poc.text.ends_with('\n') {
        s.push('\n');
    }
    s.push_str("```\n\n");
    s.push_str(SECTION_PLAN);
    s.push('\n');
    s.push_str(&plan.render());
    s.push('\n');
    s.push_str(&marker_section(plan));
    s
}

pub struct InsertionPrompter<'a> {
    pub finding: &'a Finding,
    pub poc: &'a PoCDraft,
    pub plan: &'a DvPlan,
    pub temperature: f32,
}

impl DraftPrompter for InsertionPrompter<'_> {
    fn prompt(&self, attempt: u32, prev: Option<(&PoCDraft, &Diagnostics)>) -> PromptPayload {
        let mut u = insertion_task(self.finding, self.poc, self.plan);
        if let Some((d, g)) = prev {
            append_feedback(&mut u, d, g);
        }
        PromptPayload::new(&self.finding.id, Stage::DvInsert, SYSTEM_INSERT, u)
            .with_attempt(attempt)
            .with_temperature(self.temperature)
    }
}

/// A green run only counts once its logs bracket every planned query.
pub struct MarkerAcceptance<'a> {
    pub queries: Vec<&'a str>,
}

impl Acceptance for MarkerAcceptance<'_> {
    fn check(&self, _: &PoCDraft, outcome: &ExecutionOutcome) -> Result<(), Diagnostics> {
        let t = MarkerTranscript::parse(&outcome.logs);
        let missing = t.missing(&self.queries);
        if missing.is_empty() {
            return Ok(());
        }
        let mut raw = String::from("the test passed but its logs are incomplete:\n");
        for m in missing {
            let _ = writeln!(raw, "- {m}");
        }
        Err(Diagnostics::failed(Phase::Runtime, raw))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn insert_instrumentation(
    f: &Finding,
    poc: &PoCDraft,
    plan: &DvPlan,
    ws: &Workspace,
    target: &SanitizeTarget,
    llm: &LlmGateway,
    executor: &dyn Executor,
    budget: u32,
    temperature: f32,
    artifacts: Option<&Path>,
) -> Result<EngineResult, EngineError> {
    let prompter = InsertionPrompter {
        finding: f,
        poc,
        plan,
        temperature,
    };
    let accept = MarkerAcceptance { queries: plan.query_ids() };
    let io = LoopIo {
        finding_id: &f.id,
        ws,
        executor,
        llm,
        loop_kind: LoopKind::Dv,
        target,
        artifacts,
    };
    run_loop(&io, &prompter, &accept, budget)
}
