//! Run reports: one row per finding, metrics in benchmark mode, cost totals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dv::{Decision, Verdict};
use crate::findings::FindingCorpus;
use crate::llm::{CostLedger, CostSummary, Stage};
use crate::metrics::{accuracy, percent, ppv_npv, MetricCounts};

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// A finding whose pipeline stopped on an error rather than a decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub finding_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FindingOutcome {
    Decided(Box<Verdict>),
    Errored(ErrorRecord),
}

impl FindingOutcome {
    pub fn finding_id(&self) -> &str {
        match self {
            FindingOutcome::Decided(v) => &v.finding_id,
            FindingOutcome::Errored(e) => &e.finding_id,
        }
    }

    pub fn decision(&self) -> Option<Decision> {
        match self {
            FindingOutcome::Decided(v) => Some(v.decision),
            FindingOutcome::Errored(_) => None,
        }
    }

    /// Errored rows count as negative predictions.
    pub fn predicted_positive(&self) -> bool {
        self.decision().is_some_and(Decision::is_positive)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub finding_id: String,
    pub tool: String,
    #[serde(rename = "type")]
    pub vuln_type: Option<String>,
    pub label: Option<bool>,
    /// `Validated`, `NotValidated`, `GenerationFailed` or `Errored`.
    pub outcome: String,
    pub predicted_positive: bool,
    pub reason: String,
    pub gre_attempts: u32,
    pub dv_attempts: u32,
    pub deltas: usize,
    pub cost: CostSummary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: MetricCounts,
    pub accuracy: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
}

impl Metrics {
    pub fn from_counts(counts: MetricCounts) -> Self {
        let (ppv, npv) = ppv_npv(&counts);
        Metrics {
            counts,
            accuracy: accuracy(&counts).ok(),
            ppv: ppv.ok(),
            npv: npv.ok(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub findings: usize,
    pub validated: usize,
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    /// Outcome name to count.
    pub outcomes: BTreeMap<String, usize>,
    /// Present when every finding carries a label.
    pub metrics: Option<Metrics>,
    pub per_type: BTreeMap<String, TypeRow>,
    pub cost: CostSummary,
    pub config: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("verdicts do not match the corpus (missing: {missing:?}, unexpected: {unexpected:?})")]
    Cardinality { missing: Vec<String>, unexpected: Vec<String> },
    #[error("{unlabeled} of {total} findings carry no label; label all or none")]
    PartialLabels { unlabeled: usize, total: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn outcome_name(o: &FindingOutcome) -> &'static str {
    o.decision().map_or("Errored", Decision::as_str)
}

/// Joins outcomes with the corpus; exactly one outcome per finding.
pub fn build_report(
    corpus: &FindingCorpus,
    outcomes: &[FindingOutcome],
    ledger: &CostLedger,
    config: serde_json::Value,
) -> Result<RunReport, ReportError> {
    let ids: BTreeSet<&str> = corpus.items.iter().map(|f| f.id.as_str()).collect();
    let mut by_id: BTreeMap<&str, &FindingOutcome> = BTreeMap::new();
    let mut unexpected = Vec::new();
    for o in outcomes {
        if !ids.contains(o.finding_id()) || by_id.insert(o.finding_id(), o).is_some() {
            unexpected.push(o.finding_id().to_string());
        }
    }
    let missing: Vec<String> = ids.iter().filter(|i| !by_id.contains_key(*i)).map(|i| i.to_string()).collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(ReportError::Cardinality { missing, unexpected });
    }
    let labeled = corpus.items.iter().filter(|f| f.label.is_some()).count();
    if labeled != 0 && labeled != corpus.len() {
        return Err(ReportError::PartialLabels {
            unlabeled: corpus.len() - labeled,
            total: corpus.len(),
        });
    }

    let mut rows = Vec::with_capacity(corpus.len());
    let mut tallies = BTreeMap::new();
    for f in &corpus.items {
        let o = by_id[f.id.as_str()];
        let name = outcome_name(o);
        *tallies.entry(name.to_string()).or_insert(0) += 1;
        let (reason, gre_attempts, dv_attempts, deltas) = match o {
            FindingOutcome::Decided(v) => (v.reason.clone(), v.gre_attempts, v.dv_attempts, v.deltas().len()),
            FindingOutcome::Errored(e) => (format!("{}: {}", e.stage, e.message), 0, 0, 0),
        };
        rows.push(ReportRow {
            finding_id: f.id.clone(),
            tool: f.tool.clone(),
            vuln_type: f.vuln_type.clone(),
            label: f.label,
            outcome: name.to_string(),
            predicted_positive: o.predicted_positive(),
            reason,
            gre_attempts,
            dv_attempts,
            deltas,
            cost: ledger.for_finding(&f.id),
        });
    }

    let benchmark = corpus.is_benchmark();
    let metrics = benchmark.then(|| Metrics::from_counts(MetricCounts::tally(rows.iter().map(|r| (r.predicted_positive, r.label == Some(true))))));
    let mut per_type: BTreeMap<String, Vec<&ReportRow>> = BTreeMap::new();
    for r in &rows {
        per_type.entry(r.vuln_type.clone().unwrap_or_else(|| "untyped".into())).or_default().push(r);
    }
    let per_type = per_type
        .into_iter()
        .map(|(t, rs)| {
            let row = TypeRow {
                findings: rs.len(),
                validated: rs.iter().filter(|r| r.predicted_positive).count(),
                metrics: benchmark.then(|| Metrics::from_counts(MetricCounts::tally(rs.iter().map(|r| (r.predicted_positive, r.label == Some(true)))))),
            };
            (t, row)
        })
        .collect();

    Ok(RunReport {
        rows,
        outcomes: tallies,
        metrics,
        per_type,
        cost: ledger.summary(),
        config,
    })
}

fn pct(r: Option<f64>) -> String {
    r.map_or_else(|| "undefined".to_string(), percent)
}

/// The plain-text summary printed at the end of a run.
pub fn render_summary(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "findings: {}", r.rows.len());
    for name in ["Validated", "NotValidated", "GenerationFailed", "Errored"] {
        let _ = writeln!(s, "  {name:<17}{}", r.outcomes.get(name).copied().unwrap_or(0));
    }
    if let Some(m) = &r.metrics {
        let c = &m.counts;
        let _ = writeln!(s, "accuracy: {} ({}/{})", pct(m.accuracy), c.correct(), c.total());
        let _ = writeln!(s, "PPV: {} ({}/{})", pct(m.ppv), c.tp, c.tp + c.fp);
        let _ = writeln!(s, "NPV: {} ({}/{})", pct(m.npv), c.tn, c.tn + c.fn_);
        let _ = writeln!(s, "TP {} TN {} FP {} FN {}", c.tp, c.tn, c.fp, c.fn_);
    }
    let t = &r.cost.total;
    let _ = writeln!(
        s,
        "\nLLM cost: {} calls, {} input + {} output tokens, {:.1}s{}",
        t.calls,
        t.input_tokens,
        t.output_tokens,
        t.seconds,
        if r.cost.estimated { " (token counts partly estimated)" } else { "" }
    );
    if !r.rows.is_empty() {
        let n = r.rows.len() as f64;
        let _ = writeln!(s, "per finding: {:.0} tokens, {:.1}s", (t.input_tokens + t.output_tokens) as f64 / n, t.seconds / n);
    }
    let _ = writeln!(s, "{:<14}{:>7}{:>10}{:>10}{:>10}", "stage", "calls", "input", "output", "seconds");
    for stage in Stage::ALL {
        if let Some(x) = r.cost.stages.get(&stage) {
            let _ = writeln!(s, "{:<14}{:>7}{:>10}{:>10}{:>10.1}", stage.as_str(), x.calls, x.input_tokens, x.output_tokens, x.seconds);
        }
    }
    if r.per_type.len() > 1 || r.per_type.keys().any(|k| k != "untyped") {
        let _ = writeln!(s, "\n{:<28}{:>9}{:>11}{:>10}", "type", "findings", "validated", "accuracy");
        for (ty, row) in &r.per_type {
            let acc = row.metrics.as_ref().map_or_else(|| "-".to_string(), |m| pct(m.accuracy));
            let _ = writeln!(s, "{ty:<28}{:>9}{:>11}{acc:>10}", row.findings, row.validated);
        }
    }
    if !r.rows.is_empty() {
        s.push('\n');
        for row in &r.rows {
            let label = match row.label {
                Some(true) => " [vulnerable]",
                Some(false) => " [safe]",
                None => "",
            };
            let _ = writeln!(s, "{}{label}: {} ({})", row.finding_id, row.outcome, row.reason);
        }
    }
    s
}

/// Writes `report.json` and `summary.txt` into `dir`.
pub fn write_report(r: &RunReport, dir: &Path) -> Result<(), ReportError> {
    let io = |path: PathBuf| move |source| ReportError::Io { path, source };
    std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
    let json = serde_json::to_string_pretty(r).expect("report serializes");
    let p = dir.join(REPORT_FILE);
    std::fs::write(&p, json + "\n").map_err(io(p.clone()))?;
    let p = dir.join(SUMMARY_FILE);
    std::fs::write(&p, render_summary(r)).map_err(io(p.clone()))?;
    Ok(())
}
