//! Chat-completion access shared by every stage: a pluggable backend behind
//! bounded retry, a process-wide in-flight limit and a cost ledger.

mod http;
mod ledger;
mod mock;
mod reply;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

pub use http::HttpBackend;
pub use ledger::{CostLedger, CostSummary, LedgerEntry, StageTotals};
pub use mock::{TranscriptBackend, TranscriptRecord};
pub use reply::{extract_code_block, extract_code_text, extract_json, CodeBlock};

pub const DEFAULT_TEMPERATURE: f32 = 0.3;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    BceKeys,
    BceLinks,
    GreGenerate,
    GreRepair,
    DvExtract,
    DvInsert,
    DvVerify,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::BceKeys,
        Stage::BceLinks,
        Stage::GreGenerate,
        Stage::GreRepair,
        Stage::DvExtract,
        Stage::DvInsert,
        Stage::DvVerify,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::BceKeys => "bce-keys",
            Stage::BceLinks => "bce-links",
            Stage::GreGenerate => "gre-generate",
            Stage::GreRepair => "gre-repair",
            Stage::DvExtract => "dv-extract",
            Stage::DvInsert => "dv-insert",
            Stage::DvVerify => "dv-verify",
        }
    }

    /// Pipeline phase the stage belongs to: `bce`, `gre` or `dv`.
    pub fn phase(self) -> &'static str {
        match self {
            Stage::BceKeys | Stage::BceLinks => "bce",
            Stage::GreGenerate | Stage::GreRepair => "gre",
            _ => "dv",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    /// Finding the call is made for; keys the mock transcript and the ledger.
    pub finding_id: String,
    pub stage: Stage,
    /// Attempt index within the stage (GRE round), 0 otherwise.
    pub attempt: u32,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f32,
}

impl PromptPayload {
    pub fn new(finding_id: impl Into<String>, stage: Stage, system_text: impl Into<String>, user_text: impl Into<String>) -> Self {
        PromptPayload {
            finding_id: finding_id.into(),
            stage,
            attempt: 0,
            system_text: system_text.into(),
            user_text: user_text.into(),
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }

    pub fn with_temperature(mut self, t: f32) -> Self {
        self.temperature = t;
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidPayload(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmReply {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_seconds: f64,
    pub backend: String,
    pub estimated_tokens: bool,
}

/// What a backend returns before accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    /// `(input, output)` as reported by the service.
    pub usage: Option<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Connection trouble, timeouts, 429 and 5xx. Retried.
    #[error("transient: {0}")]
    Transient(String),
    #[error("{0}")]
    Permanent(String),
    /// The mock had nothing scripted for this call.
    #[error("transcript: {0}")]
    Transcript(String),
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &PromptPayload) -> Result<BackendReply, BackendError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("{stage} for {finding}: gave up after {attempts} attempts: {last}")]
    Exhausted {
        finding: String,
        stage: Stage,
        attempts: u32,
        last: String,
    },
    #[error("{stage} for {finding}: {message}")]
    Backend {
        finding: String,
        stage: Stage,
        message: String,
    },
    #[error("test configuration: {0}")]
    Transcript(String),
    #[error("invalid prompt: {0}")]
    InvalidPayload(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Whitespace-separated word count; stands in for a tokenizer when the
/// backend reports no usage.
pub fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub struct LlmGateway {
    backend: Arc<dyn LlmBackend>,
    retry: RetryPolicy,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    peak: AtomicUsize,
    ledger: Mutex<CostLedger>,
    started: Instant,
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        LlmGateway {
            backend,
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            peak: AtomicUsize::new(0),
            ledger: Mutex::new(CostLedger::new()),
            started: Instant::now(),
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Highest number of concurrent backend calls seen so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().clone()
    }

    pub fn cost_for(&self, finding_id: &str) -> CostSummary {
        self.ledger.lock().for_finding(finding_id)
    }

    pub fn complete(&self, prompt: &PromptPayload) -> Result<LlmReply, GatewayError> {
        prompt.validate()?;
        let _slot = self.acquire();
        let started_ms = self.started.elapsed().as_millis() as u64;
        let clock = Instant::now();
        let mut tries = 0;
        let reply = loop {
            tries += 1;
            match self.backend.complete(prompt) {
                Ok(r) => break r,
                Err(BackendError::Transient(msg)) if tries < self.retry.attempts => {
                    let delay = self.retry.base_delay * 2u32.pow(tries - 1);
                    log::warn!(
                        "{} {}: transient failure ({msg}); retrying in {:?}",
                        prompt.finding_id,
                        prompt.stage,
                        delay
                    );
                    std::thread::sleep(delay);
                }
                Err(BackendError::Transient(last)) => {
                    return Err(GatewayError::Exhausted {
                        finding: prompt.finding_id.clone(),
                        stage: prompt.stage,
                        attempts: tries,
                        last,
                    })
                }
                Err(BackendError::Permanent(message)) => {
                    return Err(GatewayError::Backend {
                        finding: prompt.finding_id.clone(),
                        stage: prompt.stage,
                        message,
                    })
                }
                Err(BackendError::Transcript(m)) => return Err(GatewayError::Transcript(m)),
            }
        };
        let seconds = clock.elapsed().as_secs_f64();
        let (input_tokens, output_tokens, estimated) = match reply.usage {
            Some((i, o)) => (i, o, false),
            None => (
                estimate_tokens(&prompt.system_text) + estimate_tokens(&prompt.user_text),
                estimate_tokens(&reply.text),
                true,
            ),
        };
        self.ledger.lock().record(LedgerEntry {
            seq: 0,
            finding_id: prompt.finding_id.clone(),
            stage: prompt.stage,
            attempt: prompt.attempt,
            input_tokens,
            output_tokens,
            seconds,
            started_ms,
            estimated,
            backend: self.backend.id().to_string(),
        });
        Ok(LlmReply {
            text: reply.text,
            input_tokens,
            output_tokens,
            latency_seconds: seconds,
            backend: self.backend.id().to_string(),
            estimated_tokens: estimated,
        })
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut n = self.in_flight.lock();
        while *n >= self.max_in_flight {
            self.slot_freed.wait(&mut n);
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a LlmGateway);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock() -= 1;
        self.0.slot_freed.notify_one();
    }
}
