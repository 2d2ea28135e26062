//! Append-only token and wall-time accounting per finding and stage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// Global call order within the run.
    pub seq: u64,
    pub finding_id: String,
    pub stage: Stage,
    pub attempt: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub seconds: f64,
    /// Milliseconds since the gateway started, at call start.
    pub started_ms: u64,
    /// Token counts came from the whitespace heuristic, not the backend.
    pub estimated: bool,
    pub backend: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTotals {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub seconds: f64,
    pub calls: u64,
}

impl StageTotals {
    fn add(&mut self, e: &LedgerEntry) {
        self.input_tokens += e.input_tokens;
        self.output_tokens += e.output_tokens;
        self.seconds += e.seconds;
        self.calls += 1;
    }

    pub fn merge(&mut self, other: &StageTotals) {
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.seconds += other.seconds;
        self.calls += other.calls;
    }
}

/// Per-stage totals plus their sum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub stages: BTreeMap<Stage, StageTotals>,
    pub total: StageTotals,
    pub estimated: bool,
}

impl CostSummary {
    fn from_entries<'a>(entries: impl Iterator<Item = &'a LedgerEntry>) -> Self {
        let mut s = CostSummary::default();
        for e in entries {
            s.stages.entry(e.stage).or_default().add(e);
            s.total.add(e);
            s.estimated |= e.estimated;
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    entries: Vec<LedgerEntry>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry, assigning its sequence number.
    pub fn record(&mut self, mut entry: LedgerEntry) -> u64 {
        entry.seq = self.entries.len() as u64;
        let seq = entry.seq;
        self.entries.push(entry);
        seq
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn summary(&self) -> CostSummary {
        CostSummary::from_entries(self.entries.iter())
    }

    pub fn for_finding(&self, id: &str) -> CostSummary {
        CostSummary::from_entries(self.entries.iter().filter(|e| e.finding_id == id))
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<LedgerEntry>, _>>()?;
        Ok(CostLedger { entries })
    }
}
