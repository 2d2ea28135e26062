//! Confusion-matrix metrics over benchmark verdicts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("{0} is undefined: its denominator is zero")]
    Undefined(&'static str),
}

impl MetricCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn correct(&self) -> u64 {
        self.tp + self.tn
    }

    /// Tallies `(predicted positive, actually positive)` pairs.
    pub fn tally(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = MetricCounts::default();
        for (pred, actual) in pairs {
            match (pred, actual) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }
}

fn ratio(num: u64, den: u64, what: &'static str) -> Result<f64, MetricError> {
    if den == 0 {
        Err(MetricError::Undefined(what))
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// (TP + TN) / total.
pub fn accuracy(c: &MetricCounts) -> Result<f64, MetricError> {
    ratio(c.correct(), c.total(), "accuracy")
}

/// TP / (TP + FP) and TN / (TN + FN), each undefined on its own.
pub fn ppv_npv(c: &MetricCounts) -> (Result<f64, MetricError>, Result<f64, MetricError>) {
    (ratio(c.tp, c.tp + c.fp, "PPV"), ratio(c.tn, c.tn + c.fn_, "NPV"))
}

/// A ratio as a percentage with two decimals.
pub fn percent(r: f64) -> String {
    format!("{:.2}%", r * 100.0)
}
