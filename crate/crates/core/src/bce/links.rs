use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::{extract_json, GatewayError, LlmGateway, PromptPayload, Stage};
use crate::solidity::{FunctionId, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    /// Undoes or mirrors the key's effect: mint/burn, deposit/withdraw.
    Inverse,
    /// Reads or depends on state the key writes: setFee/checkFee.
    StateCoupled,
}

impl LinkKind {
    fn parse(s: &str) -> Option<Self> {
        let norm: String = s.chars().filter(char::is_ascii_alphabetic).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "inverse" => Some(LinkKind::Inverse),
            "statecoupled" | "coupled" => Some(LinkKind::StateCoupled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticLink {
    /// Qualified name of the key function.
    pub source: String,
    /// Candidate signature as shown to the model.
    pub target: String,
    pub kind: LinkKind,
    pub target_ids: Vec<FunctionId>,
}

/// One signature offered to the model; overloads in several contracts that
/// print identically share an entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub signature: String,
    pub ids: Vec<FunctionId>,
}

/// Lower-cased words of an identifier, split at underscores and case changes.
pub fn name_tokens(name: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for c in name.chars() {
        if c == '_' || c == '$' || !c.is_alphanumeric() {
            prev_lower = false;
            if !cur.is_empty() {
                out.insert(std::mem::take(&mut cur).to_lowercase());
            }
            continue;
        }
        if c.is_uppercase() && prev_lower && !cur.is_empty() {
            out.insert(std::mem::take(&mut cur).to_lowercase());
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        cur.push(c);
    }
    if !cur.is_empty() {
        out.insert(cur.to_lowercase());
    }
    out
}

/// Up to `cap` catalog signatures other than the keys, nearest first by
/// shared name words, then by signature.
pub fn candidate_signatures(model: &SourceModel, keys: &[FunctionId], cap: usize) -> Vec<Candidate> {
    let key_tokens: Vec<BTreeSet<String>> = keys.iter().map(|&k| name_tokens(&model.functions[k].simple_name)).collect();
    let mut grouped: Vec<Candidate> = Vec::new();
    for (id, f) in model.functions.iter().enumerate() {
        if keys.contains(&id) || f.is_constructor() || matches!(f.simple_name.as_str(), "fallback" | "receive") {
            continue;
        }
        let sig = f.display_signature();
        match grouped.iter_mut().find(|c| c.signature == sig) {
            Some(c) => c.ids.push(id),
            None => grouped.push(Candidate { signature: sig, ids: vec![id] }),
        }
    }
    let score = |c: &Candidate| {
        let t = name_tokens(&model.functions[c.ids[0]].simple_name);
        key_tokens.iter().map(|k| k.intersection(&t).count()).max().unwrap_or(0)
    };
    let mut scored: Vec<(usize, Candidate)> = grouped.into_iter().map(|c| (score(&c), c)).collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.signature.cmp(&b.1.signature)));
    scored.into_iter().take(cap).map(|(_, c)| c).collect()
}

const SYSTEM: &str = "You relate smart-contract functions by their signatures. For each key \
function, pick candidates that are its inverse (undo or mirror its effect) or are state-coupled \
with it (read or depend on state it writes). Only pick from the candidate list. Answer with a \
JSON array of objects {\"source\": key name, \"target\": candidate signature, \"kind\": \
\"inverse\" | \"state-coupled\"}; answer [] when nothing fits.

Examples:
Key: deposit(uint256 amount)
Candidates: withdraw(uint256 amount), owner(), pause()
Answer: [{\"source\": \"deposit\", \"target\": \"withdraw(uint256 amount)\", \"kind\": \"inverse\"}]

Key: mint(address to, uint256 id)
Candidates: burn(uint256 id), name()
Answer: [{\"source\": \"mint\", \"target\": \"burn(uint256 id)\", \"kind\": \"inverse\"}]

Key: setFee(uint256 fee)
Candidates: checkFee(uint256 amount), symbol()
Answer: [{\"source\": \"setFee\", \"target\": \"checkFee(uint256 amount)\", \"kind\": \"state-coupled\"}]";

fn bare(s: &str) -> &str {
    let s = s.trim();
    let s = s.split_once('(').map_or(s, |(a, _)| a);
    s.rsplit('.').next().unwrap_or(s).trim()
}

/// One round of counterpart inference. A reply that cannot be read as a
/// link list yields no links.
pub fn infer_semantic_links(
    finding_id: &str,
    model: &SourceModel,
    keys: &[FunctionId],
    candidates: &[Candidate],
    llm: &LlmGateway,
    temperature: f32,
) -> Result<Vec<SemanticLink>, GatewayError> {
    if keys.is_empty() || candidates.is_empty() {
        return Ok(Vec::new());
    }
    let mut user = String::from("Keys:\n");
    for &k in keys {
        user.push_str(&format!("- {}\n", model.functions[k].display_signature()));
    }
    user.push_str("Candidates:\n");
    for c in candidates {
        user.push_str(&format!("- {}\n", c.signature));
    }
    let prompt = PromptPayload::new(finding_id, Stage::BceLinks, SYSTEM, user).with_temperature(temperature);
    let reply = llm.complete(&prompt)?;
    let Some(Value::Array(items)) = extract_json(&reply.text) else {
        log::warn!("{finding_id}: semantic-link reply is not a JSON array; no links used");
        return Ok(Vec::new());
    };
    let mut links: Vec<SemanticLink> = Vec::new();
    for item in items {
        let field = |k: &str| item.get(k).and_then(Value::as_str).map(str::trim);
        let (Some(src), Some(tgt), Some(kind)) = (field("source"), field("target"), field("kind").and_then(LinkKind::parse)) else {
            log::info!("{finding_id}: malformed link entry {item} skipped");
            continue;
        };
        let Some(&key) = keys.iter().find(|&&k| {
            let f = &model.functions[k];
            src == f.qualified_name || src == f.display_signature() || bare(src) == f.simple_name
        }) else {
            log::info!("{finding_id}: link source `{src}` is not a key, skipped");
            continue;
        };
        let exact: Vec<&Candidate> = candidates.iter().filter(|c| c.signature == tgt).collect();
        let hits = if exact.is_empty() {
            candidates.iter().filter(|c| bare(&c.signature) == bare(tgt)).collect()
        } else {
            exact
        };
        for c in hits {
            let link = SemanticLink {
                source: model.functions[key].qualified_name.clone(),
                target: c.signature.clone(),
                kind,
                target_ids: c.ids.clone(),
            };
            if !links.iter().any(|l| l.source == link.source && l.target == link.target) {
                links.push(link);
            }
        }
    }
    Ok(links)
}
