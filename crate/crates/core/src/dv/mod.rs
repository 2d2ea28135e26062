//! Differential verification: bracket the trigger of a passing test with an
//! action and state reads, then decide from what changed.

mod insert;
mod markers;
mod plan;
mod verdict;

pub use insert::{insert_instrumentation, insertion_task, InsertionPrompter, MarkerAcceptance, SECTION_MARKERS, SECTION_PLAN};
pub use markers::{
    diff_snapshots, parse_marker, valid_query_id, Delta, Marker, MarkerPhase, MarkerTranscript, SnapshotError, StateSnapshot,
    MARKER_PREFIX,
};
pub use plan::{extract_plan, extraction_prompt, plan_from_json, resolve_reference, DvPlan, PlannedCall, StateQuery};
pub use verdict::{parse_assessment, render_verdict, verification_prompt, Decision, Evidence, Verdict};

use std::path::Path;

use crate::bce::BugContextBundle;
use crate::findings::Finding;
use crate::gre::{EngineConfig, EngineError, EngineResult, PoCDraft, SanitizeTarget};
use crate::harness::{Executor, Workspace};
use crate::llm::LlmGateway;

/// Extraction, insertion and verification for a test that already passes.
/// The insertion loop gets a budget of its own.
#[allow(clippy::too_many_arguments)]
pub fn run_dv(
    f: &Finding,
    bundle: &BugContextBundle,
    poc: &PoCDraft,
    ws: &Workspace,
    cfg: &EngineConfig,
    llm: &LlmGateway,
    executor: &dyn Executor,
    artifacts: Option<&Path>,
) -> Result<Verdict, EngineError> {
    cfg.validate().map_err(EngineError::Config)?;
    if bundle.public_abi.is_empty() {
        return Ok(Verdict::new(&f.id, Decision::NotValidated, "the project exposes no public ABI"));
    }
    let plan = extract_plan(f, poc, &bundle.public_abi, bundle.primary_contract(), llm, cfg.temperature)?;
    if plan.is_empty() {
        let mut v = Verdict::new(&f.id, Decision::NotValidated, "no observable state could be selected from the ABI");
        v.plan = Some(plan);
        return Ok(v);
    }
    let target = SanitizeTarget::from_bundle(bundle);
    let result = insert_instrumentation(f, poc, &plan, ws, &target, llm, executor, cfg.retry_budget, cfg.temperature, artifacts)?;
    let mut v = match &result {
        EngineResult::Success { draft, execution, .. } => {
            let t = MarkerTranscript::parse(&execution.logs);
            let mut v = render_verdict(f, &plan, &t.pre, &t.post, llm, cfg.temperature)?;
            v.markers = t.lines;
            v.poc = Some(draft.text.clone());
            v
        }
        EngineResult::Failed { executed: true, last_draft, .. } => {
            let mut v = Verdict::new(&f.id, Decision::NotValidated, "the instrumented test ran but never logged complete markers");
            v.poc = last_draft.as_ref().map(|d| d.text.clone());
            v
        }
        EngineResult::Failed { last, .. } => {
            let mut v = Verdict::new(
                &f.id,
                Decision::GenerationFailed,
                format!("instrumentation never compiled and ran ({:?} failure last)", last.phase),
            );
            v.poc = Some(poc.text.clone());
            v
        }
    };
    v.plan = Some(plan);
    v.dv_attempts = result.attempts_used();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gre::Provenance;
    use crate::harness::{FakeExecutor, FakeRecord, LoopKind};
    use crate::llm::{Stage, TranscriptRecord};
    use crate::testutil::{draft, fixture, gateway};
    use proptest::prelude::*;

    const PLAN: &str = r#"{"action": [{"function": "Token.mint(address,uint256)", "args": "attacker, 100"}],
        "state": [{"id": "bal", "function": "Token.balanceOf(address)", "args": "attacker"}],
        "rationale": "mint has no access control", "expected_direction": "attacker balance grows"}"#;

    fn poc() -> PoCDraft {
        PoCDraft::new(crate::llm::extract_code_text(&draft("gre")).text, 0, Provenance::Sanitized)
    }

    fn records(extra: Vec<TranscriptRecord>) -> Vec<TranscriptRecord> {
        let mut r = vec![
            TranscriptRecord::new("F1", Stage::DvExtract, None, PLAN),
            TranscriptRecord::new("F1", Stage::DvInsert, Some(0), draft("instrumented")),
        ];
        r.extend(extra);
        r
    }

    fn logs(pre: &str, post: &str) -> Vec<String> {
        vec![
            format!("SMARTPOC|PRE|bal|{pre}"),
            "SMARTPOC|TRIGGER|mint|".into(),
            format!("SMARTPOC|POST|bal|{post}"),
        ]
    }

    fn dv_exec(records: Vec<FakeRecord>) -> FakeExecutor {
        FakeExecutor::new(records).unwrap()
    }

    fn run(llm: &LlmGateway, exec: &FakeExecutor) -> Verdict {
        let fx = fixture("mint");
        run_dv(&fx.finding, &fx.bundle, &poc(), &fx.ws, &EngineConfig::default(), llm, exec, None).unwrap()
    }

    #[test]
    fn changed_state_with_affirmative_assessment_validates() {
        let (b, llm) = gateway(records(vec![TranscriptRecord::new("F1", Stage::DvVerify, None, "VALIDATED\nbalance grew")]));
        let exec = dv_exec(vec![FakeRecord::new("F1", Some(LoopKind::Dv), None).with_logs(logs("0", "100"))]);
        let v = run(&llm, &exec);
        assert_eq!(v.decision, Decision::Validated, "{}", v.reason);
        assert_eq!(v.deltas().len(), 1);
        assert_eq!(v.markers.len(), 3);
        assert_eq!(v.dv_attempts, 1);
        assert!(v.poc.unwrap().contains("// instrumented"));
        let verify = b.prompts_for("F1", Stage::DvVerify);
        assert!(verify[0].user_text.contains("bal: `0` -> `100`"));
        let insert = b.prompts_for("F1", Stage::DvInsert);
        assert!(insert[0].user_text.contains("bal = Token.balanceOf(attacker)"));
        assert!(insert[0].user_text.contains("SMARTPOC|<PHASE>|<query-id>|<value>"));
    }

    #[test]
    fn unchanged_state_is_rejected_without_asking() {
        let (b, llm) = gateway(records(vec![]));
        let exec = dv_exec(vec![FakeRecord::new("F1", Some(LoopKind::Dv), None).with_logs(logs("5", " 5"))]);
        let v = run(&llm, &exec);
        assert_eq!(v.decision, Decision::NotValidated);
        assert!(b.prompts_for("F1", Stage::DvVerify).is_empty());
    }

    #[test]
    fn negative_assessment_is_rejected() {
        let (_, llm) = gateway(records(vec![TranscriptRecord::new("F1", Stage::DvVerify, None, "NOT VALIDATED: unrelated change")]));
        let exec = dv_exec(vec![FakeRecord::new("F1", Some(LoopKind::Dv), None).with_logs(logs("0", "1"))]);
        let v = run(&llm, &exec);
        assert_eq!(v.decision, Decision::NotValidated);
        assert_eq!(v.deltas().len(), 1);
    }

    #[test]
    fn missing_markers_trigger_a_repair_round() {
        let (b, llm) = gateway(records(vec![
            TranscriptRecord::new("F1", Stage::DvInsert, Some(1), draft("with-logs")),
            TranscriptRecord::new("F1", Stage::DvVerify, None, "VALIDATED"),
        ]));
        let exec = dv_exec(vec![
            FakeRecord::new("F1", Some(LoopKind::Dv), Some(0)),
            FakeRecord::new("F1", Some(LoopKind::Dv), Some(1)).with_logs(logs("0", "1")),
        ]);
        let v = run(&llm, &exec);
        assert_eq!((v.decision, v.dv_attempts), (Decision::Validated, 2));
        let repair = &b.prompts_for("F1", Stage::DvInsert)[1].user_text;
        assert!(repair.contains("logs are incomplete") && repair.contains("no SMARTPOC|TRIGGER"));
    }

    #[test]
    fn silent_runs_end_not_validated() {
        let mut extra: Vec<_> = (1..5).map(|k| TranscriptRecord::new("F1", Stage::DvInsert, Some(k), draft("silent"))).collect();
        extra.push(TranscriptRecord::new("F1", Stage::DvVerify, None, "VALIDATED"));
        let (b, llm) = gateway(records(extra));
        let exec = dv_exec(vec![FakeRecord::new("F1", Some(LoopKind::Dv), None).with_logs(["SMARTPOC|PRE|bal|0"])]);
        let v = run(&llm, &exec);
        assert_eq!((v.decision, v.dv_attempts), (Decision::NotValidated, 5));
        assert!(b.prompts_for("F1", Stage::DvVerify).is_empty());
    }

    #[test]
    fn instrumentation_that_never_compiles_is_a_generation_failure() {
        let extra = (1..5).map(|k| TranscriptRecord::new("F1", Stage::DvInsert, Some(k), draft("bad"))).collect();
        let (_, llm) = gateway(records(extra));
        let exec = dv_exec(vec![FakeRecord::new("F1", Some(LoopKind::Dv), None).compile_fails("Error (2314): bad")]);
        assert_eq!(run(&llm, &exec).decision, Decision::GenerationFailed);
    }

    #[test]
    fn invented_getter_short_circuits() {
        let (b, llm) = gateway(vec![TranscriptRecord::new(
            "F1",
            Stage::DvExtract,
            None,
            r#"{"action": [], "state": [{"id": "x", "function": "Token.totalMinted()"}]}"#,
        )]);
        let exec = dv_exec(vec![]);
        let v = run(&llm, &exec);
        assert_eq!(v.decision, Decision::NotValidated);
        assert_eq!(v.plan.unwrap().dropped, ["Token.totalMinted()"]);
        assert!(b.prompts_for("F1", Stage::DvInsert).is_empty());
        assert!(exec.calls().is_empty());
    }

    #[test]
    fn dv_is_reproducible() {
        let go = || {
            let (_, llm) = gateway(records(vec![TranscriptRecord::new("F1", Stage::DvVerify, None, "VALIDATED")]));
            let exec = dv_exec(vec![FakeRecord::new("F1", Some(LoopKind::Dv), None).with_logs(logs("0", "9"))]);
            let mut v = run(&llm, &exec);
            v.cost = Default::default();
            serde_json::to_string(&v).unwrap()
        };
        assert_eq!(go(), go());
    }

    fn side() -> impl Strategy<Value = Vec<(String, String)>> {
        prop::collection::vec(("[a-c]", "[ 0-2]{0,3}"), 0..4)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn never_validated_without_a_delta(pre in side(), post in side(), affirm in any::<bool>()) {
            let f = crate::testutil::finding("F1", "n");
            let reply = if affirm { "VALIDATED" } else { "NOT VALIDATED" };
            let (_, llm) = gateway(vec![TranscriptRecord::new("*", Stage::DvVerify, None, reply)]);
            let mut a = StateSnapshot::new(MarkerPhase::Pre);
            let mut b = StateSnapshot::new(MarkerPhase::Post);
            for (q, v) in &pre { a.insert(q, v); }
            for (q, v) in &post { b.insert(q, v); }
            let v = render_verdict(&f, &DvPlan::default(), &a, &b, &llm, 0.3).unwrap();

            // Independent recount over first occurrences.
            let first = |xs: &[(String, String)]| {
                let mut m = std::collections::BTreeMap::new();
                for (q, v) in xs { m.entry(q.clone()).or_insert_with(|| v.trim().to_string()); }
                m
            };
            let (fa, fb) = (first(&pre), first(&post));
            let comparable = !fa.is_empty() && !fb.is_empty() && fa.keys().eq(fb.keys());
            let changed = comparable && fa.iter().any(|(q, v)| fb[q] != *v);
            prop_assert_eq!(v.decision == Decision::Validated, changed && affirm);
            if v.decision == Decision::Validated {
                prop_assert!(!v.deltas().is_empty());
            }
            if !comparable {
                prop_assert_eq!(v.decision, Decision::NotValidated);
                prop_assert!(v.llm_assessment.is_none());
            }
        }
    }
}
