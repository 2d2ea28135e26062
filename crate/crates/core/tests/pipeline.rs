mod common;

use std::time::Instant;

use common::golden;
use pocgen::dv::Decision;
use pocgen::harness::{FakeRecord, LoopKind};
use pocgen::llm::{Stage, TranscriptRecord};
use pocgen::pipeline::{self, PipelineError};
use pocgen::report::{FindingOutcome, REPORT_FILE, SUMMARY_FILE};

fn draft(tag: &str) -> String {
    std::fs::read_to_string(golden::dir().join("drafts/token-vuln.gre.txt")).unwrap().replace("testExploit()", &format!("testExploit() /* {tag} */"))
}

#[test]
fn golden_corpus_is_classified_exactly() {
    let t = Instant::now();
    let run = golden::run(4);
    assert!(t.elapsed().as_secs() < 60);
    for (id, want) in golden::EXPECTED {
        assert_eq!(run.decision(id), want.as_str(), "{id}");
    }
    assert_eq!(run.report.rows.len(), 6, "low-severity finding must be filtered");
    let m = run.report.metrics.as_ref().expect("labelled corpus has metrics");
    assert_eq!(m.accuracy, Some(1.0));
    assert_eq!((m.counts.tp, m.counts.tn, m.counts.fp, m.counts.fn_), (4, 2, 0, 0));
    for f in [REPORT_FILE, SUMMARY_FILE, "ledger.jsonl", "config.json", "findings.jsonl"] {
        assert!(run.out.path().join(f).is_file(), "{f}");
    }
    assert!(run.out.path().join("acc-vuln/bundle/manifest.json").is_file());
    assert!(run.out.path().join("acc-vuln/verdict.json").is_file());
}

#[test]
fn patched_twins_fail_only_because_state_is_unchanged() {
    let run = golden::run(2);
    for id in ["acc-fixed", "priv-fixed"] {
        let row = run.report.rows.iter().find(|r| r.finding_id == id).unwrap();
        assert_eq!(row.deltas, 0, "{id}");
        assert!(run.backend.prompts_for(id, Stage::DvVerify).is_empty(), "{id} must not reach the verifier");
    }
}

#[test]
fn invented_getter_is_dropped_from_the_plan() {
    let run = golden::run(2);
    let v: pocgen::dv::Verdict = serde_json::from_str(&std::fs::read_to_string(run.out.path().join("priv-vuln/verdict.json")).unwrap()).unwrap();
    let plan = v.plan.expect("plan recorded");
    assert!(plan.dropped.iter().any(|d| d.contains("grantAdmin")), "{:?}", plan.dropped);
    assert!(!plan.render().contains("grantAdmin"));
}

#[test]
fn perpetual_compile_failure_exhausts_the_budget() {
    let fakes = golden::with_fakes(
        golden::fake_records(),
        vec![FakeRecord::new("token-vuln", Some(LoopKind::Gre), None).compile_fails("Error (2314): Expected ';' but got '}'\n")],
    );
    let records = golden::with_transcript(golden::transcript(), vec![TranscriptRecord::new("token-vuln", Stage::GreRepair, None, draft("again"))]);
    let run = golden::run_with(2, records, fakes);
    assert_eq!(run.decision("token-vuln"), Decision::GenerationFailed.as_str());
    let gens = run.backend.prompts_for("token-vuln", Stage::GreGenerate).len() + run.backend.prompts_for("token-vuln", Stage::GreRepair).len();
    assert_eq!(gens, 5);
    assert!(run.backend.prompts_for("token-vuln", Stage::DvExtract).is_empty());
    // the rest of the corpus is unaffected
    assert_eq!(run.decision("acc-vuln"), "Validated");
}

#[test]
fn a_panicking_finding_is_isolated() {
    let mut bomb = FakeRecord::new("bank-vuln", Some(LoopKind::Gre), Some(0));
    bomb.panic = Some("executor blew up".into());
    let run = golden::run_with(3, golden::transcript(), golden::with_fakes(golden::fake_records(), vec![bomb]));
    assert_eq!(run.decision("bank-vuln"), "Errored");
    let err: pocgen::report::ErrorRecord =
        serde_json::from_str(&std::fs::read_to_string(run.out.path().join("bank-vuln/error.json")).unwrap()).unwrap();
    assert_eq!(err.stage, "panic");
    assert!(err.message.contains("executor blew up"));
    let clean = golden::run(3);
    for (id, _) in golden::EXPECTED.iter().filter(|(id, _)| *id != "bank-vuln") {
        assert_eq!(run.decision(id), clean.decision(id), "{id}");
    }
    // errored rows count as negative predictions
    let m = run.report.metrics.as_ref().unwrap();
    assert_eq!(m.counts.fn_, 1);
}

#[test]
fn worker_bound_holds() {
    let fakes: Vec<FakeRecord> = golden::fake_records()
        .into_iter()
        .map(|mut r| {
            r.delay_ms = 15;
            r
        })
        .collect();
    let run = golden::run_with(2, golden::transcript(), fakes);
    assert!(run.exec.peak_in_flight() <= 2, "peak {}", run.exec.peak_in_flight());
    assert_eq!(run.decision("acc-vuln"), "Validated");
}

#[test]
fn single_worker_matches_many() {
    let a = golden::run(1);
    let b = golden::run(8);
    for (id, _) in golden::EXPECTED {
        assert_eq!(a.decision(id), b.decision(id));
    }
    assert_eq!(a.report.metrics, b.report.metrics);
}

#[test]
fn stages_run_in_order_per_finding() {
    let run = golden::run(3);
    let rank = |s: Stage| match s {
        Stage::BceKeys | Stage::BceLinks => 0,
        Stage::GreGenerate | Stage::GreRepair => 1,
        Stage::DvExtract => 2,
        Stage::DvInsert => 3,
        Stage::DvVerify => 4,
    };
    let ledger = run.llm.ledger();
    for (id, _) in golden::EXPECTED {
        let mut entries: Vec<_> = ledger.entries().iter().filter(|e| e.finding_id == *id).collect();
        entries.sort_by_key(|e| e.seq);
        let ranks: Vec<_> = entries.iter().map(|e| rank(e.stage)).collect();
        assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{id}: {ranks:?}");
        assert!(entries.windows(2).all(|w| w[0].started_ms <= w[1].started_ms));
    }
}

#[test]
fn report_can_be_rebuilt_from_the_run_directory() {
    let run = golden::run(2);
    let again = pipeline::report_from_dir(run.out.path()).unwrap();
    assert_eq!(again.rows, run.report.rows);
    assert_eq!(again.metrics, run.report.metrics);
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(pipeline::report_from_dir(empty.path()), Err(PipelineError::StageOrder(..))));
}

#[test]
fn resume_keeps_decided_findings() {
    let out = tempfile::tempdir().unwrap();
    let llm = || pocgen::llm::LlmGateway::new(std::sync::Arc::new(pocgen::llm::TranscriptBackend::from_records(golden::transcript()).unwrap()));
    let exec = pocgen::harness::FakeExecutor::new(golden::fake_records()).unwrap();
    let first = pipeline::validate(&golden::config(out.path(), 2), &llm(), &exec).unwrap();
    std::fs::remove_file(out.path().join("bank-vuln/verdict.json")).unwrap();

    let mut cfg = golden::config(out.path(), 2);
    cfg.resume = true;
    let backend = std::sync::Arc::new(pocgen::llm::TranscriptBackend::from_records(golden::transcript()).unwrap());
    let second = pipeline::validate(&cfg, &pocgen::llm::LlmGateway::new(backend.clone()), &exec).unwrap();
    let ids: std::collections::BTreeSet<_> = backend.prompts().iter().map(|p| p.finding_id.clone()).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), ["bank-vuln"]);
    assert_eq!(second.metrics, first.metrics);
    assert_eq!(second.cost.total.calls, first.cost.total.calls);
}

#[test]
fn slice_writes_bundles_only() {
    let out = tempfile::tempdir().unwrap();
    let backend = std::sync::Arc::new(pocgen::llm::TranscriptBackend::from_records(golden::transcript()).unwrap());
    let llm = pocgen::llm::LlmGateway::new(backend.clone());
    let results = pipeline::slice(&golden::config(out.path(), 2), &llm, Some("acc-vuln")).unwrap();
    assert_eq!(results.len(), 1);
    let dir = results[0].1.as_ref().unwrap();
    let b = pocgen::bce::BugContextBundle::import(dir).unwrap();
    assert!(b.slice_names().iter().any(|n| n.starts_with("Registry.transferToken")));
    assert!(backend.prompts().iter().all(|p| matches!(p.stage, Stage::BceKeys | Stage::BceLinks)));
    assert!(!out.path().join("acc-vuln/workspace").exists());
}

#[test]
fn empty_corpus_gives_an_empty_report() {
    let d = tempfile::tempdir().unwrap();
    let findings = d.path().join("none.jsonl");
    std::fs::write(&findings, "").unwrap();
    let cfg = pipeline::RunConfig::new(&findings, golden::dir().join("projects"), d.path().join("out"));
    let llm = pocgen::llm::LlmGateway::new(std::sync::Arc::new(pocgen::llm::TranscriptBackend::from_records(vec![]).unwrap()));
    let exec = pocgen::harness::FakeExecutor::new(vec![]).unwrap();
    let r = pipeline::validate(&cfg, &llm, &exec).unwrap();
    assert!(r.rows.is_empty());
    assert_eq!(r.cost.total.calls, 0);
}

#[test]
fn outcomes_serialize_with_a_status_tag() {
    let run = golden::run(2);
    let text = std::fs::read_to_string(run.out.path().join("acc-vuln/verdict.json")).unwrap();
    let v: pocgen::dv::Verdict = serde_json::from_str(&text).unwrap();
    let o = serde_json::to_value(FindingOutcome::Decided(Box::new(v))).unwrap();
    assert_eq!(o["status"], "decided");
}
