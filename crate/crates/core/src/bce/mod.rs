//! Bug-context extraction: pick the functions a finding is about, add their
//! semantic counterparts and structural neighbourhood, and assemble the code
//! slice plus build metadata that generation works from.

mod bundle;
mod expand;
mod keys;
mod links;

pub use bundle::{assemble_bundle, BugContextBundle, BundleItem, TargetFunction};
pub use expand::{expand_structural, Expansion, SliceItem};
pub use keys::{identify_key_functions, parse_name_list};
pub use links::{candidate_signatures, infer_semantic_links, name_tokens, LinkKind, SemanticLink};

use crate::findings::Finding;
use crate::llm::{GatewayError, LlmGateway};
use crate::solidity::SourceModel;

pub const DEFAULT_CANDIDATE_CAP: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum BceError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("finding {0}: no key function resolves in the project")]
    NoKeyFunctions(String),
    #[error("no pragma solidity in any project file; compiler version unresolvable")]
    MissingPragma,
    #[error("bad pragma `{req}`: {message}")]
    BadPragma { req: String, message: String },
    #[error("empty slice")]
    EmptySlice,
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct BceConfig {
    pub candidate_cap: usize,
    pub temperature: f32,
}

impl Default for BceConfig {
    fn default() -> Self {
        BceConfig {
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            temperature: crate::llm::DEFAULT_TEMPERATURE,
        }
    }
}

/// Keys, one round of semantic links, structural expansion from keys plus
/// link targets, then bundle assembly.
pub fn run_bce(
    f: &Finding,
    model: &SourceModel,
    llm: &LlmGateway,
    cfg: &BceConfig,
) -> Result<BugContextBundle, BceError> {
    let keys = identify_key_functions(f, model, llm, cfg.temperature)?;
    if keys.is_empty() {
        return Err(BceError::NoKeyFunctions(f.id.clone()));
    }
    let candidates = candidate_signatures(model, &keys, cfg.candidate_cap);
    let links = infer_semantic_links(&f.id, model, &keys, &candidates, llm, cfg.temperature)?;
    let mut seeds = keys.clone();
    for l in &links {
        for &t in &l.target_ids {
            if !seeds.contains(&t) {
                seeds.push(t);
            }
        }
    }
    let slice = expand_structural(&seeds, &model.graph);
    assemble_bundle(f, model, &keys, &slice, &links)
}

