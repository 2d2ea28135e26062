use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Straight from the model.
    Generated,
    /// After the sanitizer.
    Sanitized,
    /// Carried into the next round as repair context.
    Carried,
}

/// A test script at some point of the generate/repair loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoCDraft {
    pub text: String,
    pub attempt_index: u32,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("draft is not valid UTF-8 (first bad byte at {offset})")]
pub struct NonUtf8Draft {
    pub offset: usize,
}

impl PoCDraft {
    pub fn new(text: impl Into<String>, attempt_index: u32, provenance: Provenance) -> Self {
        PoCDraft {
            text: text.into(),
            attempt_index,
            provenance,
        }
    }

    pub fn from_bytes(bytes: &[u8], attempt_index: u32, provenance: Provenance) -> Result<Self, NonUtf8Draft> {
        let text = std::str::from_utf8(bytes).map_err(|e| NonUtf8Draft { offset: e.valid_up_to() })?;
        Ok(Self::new(text, attempt_index, provenance))
    }

    pub fn with_provenance(&self, provenance: Provenance) -> Self {
        PoCDraft {
            provenance,
            ..self.clone()
        }
    }
}
