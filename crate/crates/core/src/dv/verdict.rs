//! Turning observed deltas into the final decision.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::findings::Finding;
use crate::llm::{CostSummary, GatewayError, LlmGateway, PromptPayload, Stage};

use super::markers::{diff_snapshots, Delta, StateSnapshot};
use super::plan::DvPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Validated,
    NotValidated,
    GenerationFailed,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Validated => "Validated",
            Decision::NotValidated => "NotValidated",
            Decision::GenerationFailed => "GenerationFailed",
        }
    }

    /// Only `Validated` is a positive prediction.
    pub fn is_positive(self) -> bool {
        self == Decision::Validated
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub pre: StateSnapshot,
    pub post: StateSnapshot,
    pub deltas: Vec<Delta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub finding_id: String,
    pub decision: Decision,
    pub reason: String,
    #[serde(default)]
    pub plan: Option<DvPlan>,
    #[serde(default)]
    pub evidence: Option<Evidence>,
    /// Marker lines of the instrumented run, normalized.
    #[serde(default)]
    pub markers: Vec<String>,
    #[serde(default)]
    pub llm_assessment: Option<String>,
    #[serde(default)]
    pub gre_attempts: u32,
    #[serde(default)]
    pub dv_attempts: u32,
    /// The final test file, instrumented when instrumentation succeeded.
    #[serde(default)]
    pub poc: Option<String>,
    #[serde(default)]
    pub cost: CostSummary,
}

impl Verdict {
    pub fn new(finding_id: impl Into<String>, decision: Decision, reason: impl Into<String>) -> Self {
        Verdict {
            finding_id: finding_id.into(),
            decision,
            reason: reason.into(),
            plan: None,
            evidence: None,
            markers: Vec::new(),
            llm_assessment: None,
            gre_attempts: 0,
            dv_attempts: 0,
            poc: None,
            cost: CostSummary::default(),
        }
    }

    pub fn deltas(&self) -> &[Delta] {
        self.evidence.as_ref().map_or(&[], |e| &e.deltas)
    }
}

/// Reads the decision off the first non-empty line of an assessment.
pub fn parse_assessment(text: &str) -> Option<bool> {
    let line = text.lines().map(|l| l.trim_matches(|c: char| c.is_whitespace() || "*#`>_-\"'".contains(c))).find(|l| !l.is_empty())?;
    let up = line.to_ascii_uppercase();
    let compact: String = up.chars().filter(|c| c.is_ascii_alphabetic()).collect();
    if compact.starts_with("NOTVALIDATED") {
        Some(false)
    } else if compact.starts_with("VALIDATED") {
        Some(true)
    } else {
        None
    }
}

const SYSTEM_VERIFY: &str = "You judge differential evidence for reported smart-contract \
vulnerabilities. A test triggered the reported issue; the listed state was read before and after \
the trigger. Decide whether the observed changes show that the reported vulnerability was \
exercised. Start your reply with a line reading exactly VALIDATED or NOT VALIDATED, then give a \
short justification.";

pub fn verification_prompt(f: &Finding, plan: &DvPlan, evidence: &Evidence, temperature: f32) -> PromptPayload {
    let mut u = String::new();
    u.push_str("## Finding\n");
    let _ = writeln!(u, "report: {}", f.narrative.trim());
    if let Some(t) = &f.vuln_type {
        let _ = writeln!(u, "type: {t}");
    }
    u.push_str("\n## Differential plan\n");
    u.push_str(&plan.render());
    u.push_str("\n## Observed state\n");
    for (q, before) in &evidence.pre.values {
        let after = evidence.post.get(q).unwrap_or("");
        let _ = writeln!(u, "{q}: before `{}` after `{}`", before.trim(), after.trim());
    }
    u.push_str("\n## Changes\n");
    for d in &evidence.deltas {
        let _ = writeln!(u, "{}: `{}` -> `{}`", d.query, d.before, d.after);
    }
    PromptPayload::new(&f.id, Stage::DvVerify, SYSTEM_VERIFY, u).with_temperature(temperature)
}

/// Decides from the snapshots. Missing or mismatched logs and unchanged state
/// are `NotValidated` without asking the model.
pub fn render_verdict(
    f: &Finding,
    plan: &DvPlan,
    pre: &StateSnapshot,
    post: &StateSnapshot,
    llm: &LlmGateway,
    temperature: f32,
) -> Result<Verdict, GatewayError> {
    let mut evidence = Evidence {
        pre: pre.clone(),
        post: post.clone(),
        deltas: Vec::new(),
    };
    let deltas = match diff_snapshots(pre, post) {
        Ok(d) => d,
        Err(e) => {
            let mut v = Verdict::new(&f.id, Decision::NotValidated, format!("unusable logs: {e}"));
            v.evidence = Some(evidence);
            return Ok(v);
        }
    };
    evidence.deltas = deltas;
    if evidence.deltas.is_empty() {
        let mut v = Verdict::new(&f.id, Decision::NotValidated, "no state change around the trigger");
        v.evidence = Some(evidence);
        return Ok(v);
    }
    let reply = llm.complete(&verification_prompt(f, plan, &evidence, temperature))?;
    let (decision, reason) = match parse_assessment(&reply.text) {
        Some(true) => (Decision::Validated, "state changed and the assessment confirms the finding".to_string()),
        Some(false) => (Decision::NotValidated, "the assessment rejects the observed change".to_string()),
        None => (Decision::NotValidated, "the assessment could not be read".to_string()),
    };
    let mut v = Verdict::new(&f.id, decision, reason);
    v.evidence = Some(evidence);
    v.llm_assessment = Some(reply.text);
    Ok(v)
}
