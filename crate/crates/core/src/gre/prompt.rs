use std::path::Path;

use crate::bce::BugContextBundle;
use crate::findings::Finding;
use crate::harness::Diagnostics;
use crate::llm::{PromptPayload, Stage};

use super::draft::PoCDraft;

/// Minimal Foundry test shown to the model as the expected output shape.
pub const EXEMPLAR: &str = include_str!("../../assets/exemplar.t.sol");

pub const SECTION_PROJECT: &str = "## Project and build";
pub const SECTION_FINDING: &str = "## Finding";
pub const SECTION_CODE: &str = "## Bug-related code";
pub const SECTION_EXEMPLAR: &str = "## Example test";
pub const SECTION_PREVIOUS: &str = "## Previous test";
pub const SECTION_FEEDBACK: &str = "## Failure log";

const SYSTEM_GENERATE: &str = "You write Foundry proof-of-concept tests for reported smart-contract \
vulnerabilities. The test must compile against the project as it is, deploy or reference the \
target contracts, act as an unprivileged attacker where the report implies one, and assert the \
condition that shows the vulnerability. Never modify or re-declare the target contracts. Reply \
with a single ```solidity code block holding the complete test file.";

const SYSTEM_REPAIR: &str = "You repair Foundry proof-of-concept tests. You get the original task, \
the last test you wrote and the log of its failure. Fix the test so it compiles and runs and still \
demonstrates the reported condition. Never modify or re-declare the target contracts. Reply with \
a single ```solidity code block holding the complete corrected test file.";

/// Per-run values the prompt needs besides the finding and the bundle.
#[derive(Debug, Clone)]
pub struct PromptContext<'a> {
    pub test_name: &'a str,
    pub exemplar: &'a str,
    pub temperature: f32,
}

/// Relative import path of a project file as seen from `test/`.
pub fn import_path(rel: &Path) -> String {
    format!("../{}", rel.to_string_lossy().replace('\\', "/"))
}

/// The four fixed sections of the generation task.
pub fn task_sections(f: &Finding, bundle: &BugContextBundle, ctx: &PromptContext<'_>) -> String {
    let meta = &bundle.build_metadata;
    let mut s = String::new();
    s.push_str(SECTION_PROJECT);
    s.push('\n');
    let project = bundle.project_root.file_name().map_or_else(|| bundle.project_root.display().to_string(), |n| n.to_string_lossy().into_owned());
    s.push_str(&format!("project: {project}\n"));
    s.push_str(&format!("target contract: {} ({})\n", bundle.primary_contract(), bundle.primary_file.display()));
    if bundle.target_contracts.len() > 1 {
        s.push_str(&format!("related contracts: {}\n", bundle.target_contracts[1..].join(", ")));
    }
    s.push_str(&format!("compiler: solc {} (pragma solidity {};)\n", meta.compiler, meta.pragma));
    if meta.compiler.needs_legacy_abi_option() {
        s.push_str("this compiler needs `pragma experimental ABIEncoderV2;`\n");
    }
    if !meta.remappings.is_empty() {
        s.push_str(&format!("remappings: {}\n", meta.remappings.join(", ")));
    }
    s.push_str(&format!(
        "write test/{name}.t.sol with `contract {name} is Test`, importing \"forge-std/Test.sol\" and \"{imp}\"\n",
        name = ctx.test_name,
        imp = import_path(&bundle.primary_file)
    ));

    s.push('\n');
    s.push_str(SECTION_FINDING);
    s.push('\n');
    s.push_str(&format!("tool: {}\n", f.tool));
    if let Some(t) = &f.vuln_type {
        s.push_str(&format!("type: {t}\n"));
    }
    if !bundle.key_functions.is_empty() {
        s.push_str(&format!("functions: {}\n", bundle.key_functions.join(", ")));
    }
    s.push_str(&format!("report: {}\n", f.narrative.trim()));

    s.push('\n');
    s.push_str(SECTION_CODE);
    s.push_str("\n```solidity\n");
    s.push_str(&bundle.assembled_text);
    if !bundle.assembled_text.ends_with('\n') {
        s.push('\n');
    }
    s.push_str("```\n");

    s.push('\n');
    s.push_str(SECTION_EXEMPLAR);
    s.push_str("\n```solidity\n");
    s.push_str(ctx.exemplar);
    if !ctx.exemplar.ends_with('\n') {
        s.push('\n');
    }
    s.push_str("```\n");
    s
}

/// Appends only the most recent draft and its failure log.
pub fn append_feedback(s: &mut String, prev: &PoCDraft, diag: &Diagnostics) {
    s.push('\n');
    s.push_str(SECTION_PREVIOUS);
    s.push_str(&format!(" (attempt {})\n```solidity\n", prev.attempt_index));
    s.push_str(&prev.text);
    if !prev.text.ends_with('\n') {
        s.push('\n');
    }
    s.push_str("```\n\n");
    s.push_str(SECTION_FEEDBACK);
    s.push('\n');
    s.push_str(&diag.render());
}

/// Generation prompt for `attempt`; with `prev` it becomes the repair prompt
/// carrying the last draft and its diagnostics.
pub fn build_generation_prompt(
    f: &Finding,
    bundle: &BugContextBundle,
    attempt: u32,
    prev: Option<(&PoCDraft, &Diagnostics)>,
    ctx: &PromptContext<'_>,
) -> PromptPayload {
    let mut user = task_sections(f, bundle, ctx);
    let (stage, system) = match prev {
        None => (Stage::GreGenerate, SYSTEM_GENERATE),
        Some((draft, diag)) => {
            append_feedback(&mut user, draft, diag);
            (Stage::GreRepair, SYSTEM_REPAIR)
        }
    };
    PromptPayload::new(&f.id, stage, system, user)
        .with_attempt(attempt)
        .with_temperature(ctx.temperature)
}
