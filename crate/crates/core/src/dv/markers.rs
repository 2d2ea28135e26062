//! The structured log lines an instrumented test prints, and snapshot diffing.
//!
//! Grammar, one line each: `SMARTPOC|<PRE|TRIGGER|POST>|<query-id>|<value>`.
//! The value is everything after the third bar and may itself contain bars.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const MARKER_PREFIX: &str = "SMARTPOC";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MarkerPhase {
    Pre,
    Trigger,
    Post,
}

impl MarkerPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            MarkerPhase::Pre => "PRE",
            MarkerPhase::Trigger => "TRIGGER",
            MarkerPhase::Post => "POST",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "PRE" => Some(MarkerPhase::Pre),
            "TRIGGER" => Some(MarkerPhase::Trigger),
            "POST" => Some(MarkerPhase::Post),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub phase: MarkerPhase,
    pub query: String,
    pub value: String,
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{MARKER_PREFIX}|{}|{}|{}", self.phase.as_str(), self.query, self.value)
    }
}

/// Query ids are non-empty and free of bars and whitespace.
pub fn valid_query_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(|c| c == '|' || c.is_whitespace())
}

/// Parses one log line; anything off-grammar is `None`.
pub fn parse_marker(line: &str) -> Option<Marker> {
    let line = line.trim();
    let mut parts = line.splitn(4, '|');
    if parts.next()? != MARKER_PREFIX {
        return None;
    }
    let phase = MarkerPhase::parse(parts.next()?)?;
    let query = parts.next()?;
    let value = parts.next()?;
    if !valid_query_id(query) {
        return None;
    }
    Some(Marker {
        phase,
        query: query.to_string(),
        value: value.to_string(),
    })
}

/// Query values observed on one side of the trigger, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub phase: Option<MarkerPhase>,
    pub values: Vec<(String, String)>,
}

impl StateSnapshot {
    pub fn new(phase: MarkerPhase) -> Self {
        StateSnapshot {
            phase: Some(phase),
            values: Vec::new(),
        }
    }

    pub fn get(&self, query: &str) -> Option<&str> {
        self.values.iter().find(|(q, _)| q == query).map(|(_, v)| v.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Repeated queries keep their first value.
    pub fn insert(&mut self, query: &str, value: &str) {
        if self.get(query).is_none() {
            self.values.push((query.to_string(), value.to_string()));
        }
    }

    pub fn ids(&self) -> std::collections::BTreeSet<&str> {
        self.values.iter().map(|(q, _)| q.as_str()).collect()
    }
}

/// Everything the markers in a run's logs say.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerTranscript {
    pub lines: Vec<String>,
    pub pre: StateSnapshot,
    pub post: StateSnapshot,
    pub triggers: Vec<String>,
}

impl MarkerTranscript {
    pub fn parse<S: AsRef<str>>(logs: &[S]) -> Self {
        let mut t = MarkerTranscript {
            lines: Vec::new(),
            pre: StateSnapshot::new(MarkerPhase::Pre),
            post: StateSnapshot::new(MarkerPhase::Post),
            triggers: Vec::new(),
        };
        for line in logs {
            let Some(m) = parse_marker(line.as_ref()) else { continue };
            t.lines.push(m.to_string());
            match m.phase {
                MarkerPhase::Pre => t.pre.insert(&m.query, &m.value),
                MarkerPhase::Post => t.post.insert(&m.query, &m.value),
                MarkerPhase::Trigger => t.triggers.push(m.query),
            }
        }
        t
    }

    /// What is missing for the transcript to bracket `queries`; empty when complete.
    pub fn missing(&self, queries: &[&str]) -> Vec<String> {
        let mut out = Vec::new();
        if self.triggers.is_empty() {
            out.push(format!("no {MARKER_PREFIX}|TRIGGER|... line"));
        }
        if self.pre.is_empty() {
            out.push(format!("no {MARKER_PREFIX}|PRE|... line"));
        }
        if self.post.is_empty() {
            out.push(format!("no {MARKER_PREFIX}|POST|... line"));
        }
        for q in queries {
            for snap in [&self.pre, &self.post] {
                if !snap.is_empty() && snap.get(q).is_none() {
                    let phase = snap.phase.map_or("?", MarkerPhase::as_str);
                    out.push(format!("query `{q}` has no {MARKER_PREFIX}|{phase}|{q}|... line"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delta {
    pub query: String,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SnapshotError {
    #[error("no pre-trigger state was logged")]
    MissingPre,
    #[error("no post-trigger state was logged")]
    MissingPost,
    #[error("pre and post snapshots cover different queries (only pre: {only_pre:?}, only post: {only_post:?})")]
    Mismatch { only_pre: Vec<String>, only_post: Vec<String> },
}

/// Queries whose trimmed value text changed, in pre-snapshot order.
pub fn diff_snapshots(pre: &StateSnapshot, post: &StateSnapshot) -> Result<Vec<Delta>, SnapshotError> {
    if pre.is_empty() {
        return Err(SnapshotError::MissingPre);
    }
    if post.is_empty() {
        return Err(SnapshotError::MissingPost);
    }
    let (a, b) = (pre.ids(), post.ids());
    if a != b {
        return Err(SnapshotError::Mismatch {
            only_pre: a.difference(&b).map(|s| s.to_string()).collect(),
            only_post: b.difference(&a).map(|s| s.to_string()).collect(),
        });
    }
    Ok(pre
        .values
        .iter()
        .filter_map(|(q, before)| {
            let after = post.get(q)?;
            (before.trim() != after.trim()).then(|| Delta {
                query: q.clone(),
                before: before.trim().to_string(),
                after: after.trim().to_string(),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(phase: MarkerPhase, pairs: &[(&str, &str)]) -> StateSnapshot {
        let mut s = StateSnapshot::new(phase);
        for (q, v) in pairs {
            s.insert(q, v);
        }
        s
    }

    #[test]
    fn grammar_is_strict() {
        let m = parse_marker("  SMARTPOC|PRE|owner|0xabc|def ").unwrap();
        assert_eq!((m.phase, m.query.as_str(), m.value.as_str()), (MarkerPhase::Pre, "owner", "0xabc|def"));
        assert_eq!(m.to_string(), "SMARTPOC|PRE|owner|0xabc|def");
        assert_eq!(parse_marker("SMARTPOC|POST|x|").unwrap().value, "");
        for bad in [
            "smartpoc|PRE|x|1",
            "SMARTPOC|pre|x|1",
            "SMARTPOC|PRE|x",
            "SMARTPOC|PRE||1",
            "SMARTPOC|PRE|a b|1",
            "SMARTPOC|DURING|x|1",
            "log: SMARTPOC|PRE|x|1",
        ] {
            assert!(parse_marker(bad).is_none(), "{bad}");
        }
    }

    #[test]
    fn first_occurrence_wins() {
        let t = MarkerTranscript::parse(&["SMARTPOC|PRE|a|1", "SMARTPOC|PRE|a|2", "noise", "SMARTPOC|TRIGGER|step|", "SMARTPOC|POST|a|3"]);
        assert_eq!(t.pre.get("a"), Some("1"));
        assert_eq!(t.triggers, ["step"]);
        assert_eq!(t.lines.len(), 4);
        assert!(t.missing(&["a"]).is_empty());
        assert_eq!(t.missing(&["a", "b"]).len(), 2);
    }

    #[test]
    fn identity_has_no_deltas() {
        let pre = snap(MarkerPhase::Pre, &[("a", "1"), ("b", "x")]);
        let post = snap(MarkerPhase::Post, &[("b", " x "), ("a", "1")]);
        assert_eq!(diff_snapshots(&pre, &post), Ok(vec![]));
    }

    #[test]
    fn role_flip_is_one_delta() {
        let pre = snap(MarkerPhase::Pre, &[("hasRole", "false"), ("n", "1")]);
        let post = snap(MarkerPhase::Post, &[("hasRole", "true"), ("n", "1")]);
        assert_eq!(
            diff_snapshots(&pre, &post).unwrap(),
            [Delta {
                query: "hasRole".into(),
                before: "false".into(),
                after: "true".into()
            }]
        );
    }

    #[test]
    fn missing_or_mismatched_sides_are_errors() {
        let pre = snap(MarkerPhase::Pre, &[("a", "1")]);
        let empty = StateSnapshot::new(MarkerPhase::Post);
        assert_eq!(diff_snapshots(&StateSnapshot::new(MarkerPhase::Pre), &pre), Err(SnapshotError::MissingPre));
        assert_eq!(diff_snapshots(&pre, &empty), Err(SnapshotError::MissingPost));
        let post = snap(MarkerPhase::Post, &[("b", "1")]);
        assert!(matches!(diff_snapshots(&pre, &post), Err(SnapshotError::Mismatch { .. })));
    }
}
