//! OpenAI-style chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, BackendReply, LlmBackend, PromptPayload};

pub const ENV_API_KEY: &str = "POCGEN_API_KEY";
pub const ENV_BASE_URL: &str = "POCGEN_BASE_URL";
pub const ENV_MODEL: &str = "POCGEN_MODEL";

pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
    id: String,
}

impl HttpBackend {
    /// `base_url` may be the service root (`https://host/v1`) or the full
    /// `.../chat/completions` endpoint.
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        HttpBackend {
            agent,
            id: format!("http:{model}"),
            url,
            model: model.to_string(),
            api_key,
        }
    }

    /// Reads the endpoint, model and key from the environment; explicit
    /// arguments take precedence.
    pub fn from_env(base_url: Option<&str>, model: Option<&str>, timeout: Duration) -> Result<Self, String> {
        let base = base_url
            .map(str::to_string)
            .or_else(|| std::env::var(ENV_BASE_URL).ok())
            .ok_or_else(|| format!("no LLM endpoint: pass --llm-endpoint or set {ENV_BASE_URL}"))?;
        let model = model
            .map(str::to_string)
            .or_else(|| std::env::var(ENV_MODEL).ok())
            .ok_or_else(|| format!("no model: pass --llm-model or set {ENV_MODEL}"))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(Self::new(&base, &model, key, timeout))
    }

    fn request_body(&self, p: &PromptPayload) -> Value {
        json!({
            "model": self.model,
            "temperature": p.temperature,
            "messages": [
                {"role": "system", "content": p.system_text},
                {"role": "user", "content": p.user_text},
            ],
        })
    }
}

fn classify(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::StatusCode(code) if code == 429 || code >= 500 => {
            BackendError::Transient(format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => BackendError::Permanent(format!("HTTP {code}")),
        ureq::Error::Io(_)
        | ureq::Error::Timeout(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound => BackendError::Transient(e.to_string()),
        other => BackendError::Permanent(other.to_string()),
    }
}

/// Pulls the reply text and usage out of a chat-completions response.
pub(crate) fn parse_response(v: &Value) -> Result<BackendReply, BackendError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Permanent("response has no choices[0].message.content".into()))?;
    let usage = match (
        v.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        v.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    ) {
        (Some(i), Some(o)) => Some((i, o)),
        _ => None,
    };
    Ok(BackendReply {
        text: text.to_string(),
        usage,
    })
}

impl LlmBackend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, p: &PromptPayload) -> Result<BackendReply, BackendError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = req.send_json(self.request_body(p)).map_err(classify)?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transient(format!("reading response: {e}")))?;
        parse_response(&v)
    }
}
