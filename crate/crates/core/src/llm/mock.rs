//! File-driven backend for offline runs.
//!
//! A transcript is a JSONL file, one record per line:
//!
//! ```text
//! {"finding": "F1", "stage": "gre-generate", "attempt": 0, "text": "...", "input_tokens": 100, "output_tokens": 50}
//! ```
//!
//! `finding` may be `"*"` (or omitted) to match any finding, `attempt` may be
//! omitted to match any attempt, and `text_file` may replace `text` with a
//! path relative to the transcript. Lookup prefers the most specific record.
//! A call with no matching record is a configuration error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::{BackendError, BackendReply, LlmBackend, PromptPayload, Stage};

pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    #[serde(default = "wildcard")]
    pub finding: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

fn wildcard() -> String {
    WILDCARD.to_string()
}

impl TranscriptRecord {
    pub fn new(finding: &str, stage: Stage, attempt: Option<u32>, text: impl Into<String>) -> Self {
        TranscriptRecord {
            finding: finding.to_string(),
            stage,
            attempt,
            text: Some(text.into()),
            text_file: None,
            input_tokens: None,
            output_tokens: None,
        }
    }

    pub fn with_usage(mut self, input: u64, output: u64) -> Self {
        self.input_tokens = Some(input);
        self.output_tokens = Some(output);
        self
    }
}

type Key = (String, Stage, Option<u32>);

#[derive(Debug, Clone)]
struct Scripted {
    text: String,
    usage: Option<(u64, u64)>,
}

#[derive(Debug)]
pub struct TranscriptBackend {
    id: String,
    entries: HashMap<Key, Scripted>,
    latency: Option<Duration>,
    prompts: Mutex<Vec<PromptPayload>>,
}

impl TranscriptBackend {
    pub fn from_records(records: Vec<TranscriptRecord>) -> Result<Self, String> {
        Self::build(records, None, "transcript".into())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with("//") {
                continue;
            }
            let r: TranscriptRecord =
                serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?;
            records.push(r);
        }
        Self::build(records, path.parent(), format!("transcript:{}", path.display()))
    }

    fn build(records: Vec<TranscriptRecord>, base: Option<&Path>, id: String) -> Result<Self, String> {
        let mut entries = HashMap::new();
        for r in records {
            let text = match (r.text, &r.text_file) {
                (Some(t), None) => t,
                (None, Some(f)) => {
                    let p = base.map_or_else(|| f.clone(), |b| b.join(f));
                    std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?
                }
                _ => {
                    return Err(format!(
                        "record for {}/{} needs exactly one of `text` or `text_file`",
                        r.finding, r.stage
                    ))
                }
            };
            let usage = match (r.input_tokens, r.output_tokens) {
                (None, None) => None,
                (i, o) => Some((i.unwrap_or(0), o.unwrap_or(0))),
            };
            let key = (r.finding.clone(), r.stage, r.attempt);
            if entries.insert(key, Scripted { text, usage }).is_some() {
                return Err(format!(
                    "duplicate transcript record for {}/{}/{:?}",
                    r.finding, r.stage, r.attempt
                ));
            }
        }
        Ok(TranscriptBackend {
            id,
            entries,
            latency: None,
            prompts: Mutex::new(Vec::new()),
        })
    }

    /// Sleep this long per call, to model service latency in benchmarks.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Every prompt received so far, in arrival order.
    pub fn prompts(&self) -> Vec<PromptPayload> {
        self.prompts.lock().clone()
    }

    pub fn prompts_for(&self, finding: &str, stage: Stage) -> Vec<PromptPayload> {
        self.prompts
            .lock()
            .iter()
            .filter(|p| p.finding_id == finding && p.stage == stage)
            .cloned()
            .collect()
    }

    fn lookup(&self, p: &PromptPayload) -> Option<&Scripted> {
        let id = p.finding_id.as_str();
        [
            (id, Some(p.attempt)),
            (id, None),
            (WILDCARD, Some(p.attempt)),
            (WILDCARD, None),
        ]
        .into_iter()
        .find_map(|(f, a)| self.entries.get(&(f.to_string(), p.stage, a)))
    }
}

impl LlmBackend for TranscriptBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, p: &PromptPayload) -> Result<BackendReply, BackendError> {
        self.prompts.lock().push(p.clone());
        if let Some(d) = self.latency {
            std::thread::sleep(d);
        }
        let s = self.lookup(p).ok_or_else(|| {
            BackendError::Transcript(format!(
                "no transcript entry for finding {} stage {} attempt {}",
                p.finding_id, p.stage, p.attempt
            ))
        })?;
        Ok(BackendReply {
            text: s.text.clone(),
            usage: s.usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{GatewayError, LlmGateway};
    use std::sync::Arc;

    fn payload(f: &str, stage: Stage, attempt: u32) -> PromptPayload {
        PromptPayload::new(f, stage, "s", "u").with_attempt(attempt)
    }

    #[test]
    fn most_specific_record_wins() {
        let b = TranscriptBackend::from_records(vec![
            TranscriptRecord::new("*", Stage::GreGenerate, None, "any"),
            TranscriptRecord::new("F1", Stage::GreGenerate, None, "f1"),
            TranscriptRecord::new("F1", Stage::GreGenerate, Some(1), "f1-a1"),
        ])
        .unwrap();
        let text = |f, a| b.complete(&payload(f, Stage::GreGenerate, a)).unwrap().text;
        assert_eq!(text("F1", 1), "f1-a1");
        assert_eq!(text("F1", 0), "f1");
        assert_eq!(text("F2", 3), "any");
    }

    #[test]
    fn scripted_text_and_usage_are_verbatim() {
        let b = TranscriptBackend::from_records(vec![
            TranscriptRecord::new("F1", Stage::BceKeys, Some(0), "[\"mint\", \"burn\"]\n").with_usage(120, 7),
        ])
        .unwrap();
        let g = LlmGateway::new(Arc::new(b));
        let r = g.complete(&payload("F1", Stage::BceKeys, 0)).unwrap();
        assert_eq!(r.text, "[\"mint\", \"burn\"]\n");
        assert_eq!((r.input_tokens, r.output_tokens, r.estimated_tokens), (120, 7, false));
    }

    #[test]
    fn empty_reply_has_zero_output_tokens() {
        let b = TranscriptBackend::from_records(vec![TranscriptRecord::new("*", Stage::DvVerify, None, "")]).unwrap();
        let g = LlmGateway::new(Arc::new(b));
        let r = g.complete(&payload("F9", Stage::DvVerify, 0)).unwrap();
        assert_eq!((r.text.as_str(), r.output_tokens), ("", 0));
    }

    #[test]
    fn unscripted_call_is_a_configuration_error() {
        let b = TranscriptBackend::from_records(vec![]).unwrap();
        let g = LlmGateway::new(Arc::new(b));
        let e = g.complete(&payload("F1", Stage::DvExtract, 2)).unwrap_err();
        assert!(matches!(e, GatewayError::Transcript(m) if m.contains("dv-extract")));
    }

    #[test]
    fn load_reads_jsonl_and_text_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("draft.sol"), "contract T {}\n").unwrap();
        std::fs::write(
            dir.path().join("t.jsonl"),
            "{\"finding\":\"F1\",\"stage\":\"gre-generate\",\"attempt\":0,\"text_file\":\"draft.sol\"}\n\
             \n{\"stage\":\"dv-verify\",\"text\":\"VALIDATED\"}\n",
        )
        .unwrap();
        let b = TranscriptBackend::load(&dir.path().join("t.jsonl")).unwrap();
        assert_eq!(b.complete(&payload("F1", Stage::GreGenerate, 0)).unwrap().text, "contract T {}\n");
        assert_eq!(b.complete(&payload("Z", Stage::DvVerify, 4)).unwrap().text, "VALIDATED");
        assert_eq!(b.prompts().len(), 2);
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let r = TranscriptRecord::new("F1", Stage::BceKeys, None, "a");
        assert!(TranscriptBackend::from_records(vec![r.clone(), r]).is_err());
    }
}
