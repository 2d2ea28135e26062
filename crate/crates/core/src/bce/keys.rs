use serde_json::Value;

use crate::findings::Finding;
use crate::llm::{extract_json, GatewayError, LlmGateway, PromptPayload, Stage};
use crate::solidity::{FunctionId, SourceModel};

const SYSTEM: &str = "You are a smart-contract auditor. Given a vulnerability report and the list of \
functions defined in the project, name the functions the report is about: the ones an attacker \
calls and the ones holding the flawed logic. Answer with a JSON array of names taken from the \
list, nothing else.";

fn user_prompt(f: &Finding, model: &SourceModel) -> String {
    let mut s = String::new();
    s.push_str("Report:\n");
    s.push_str(&f.narrative);
    s.push('\n');
    if let Some(t) = &f.vuln_type {
        s.push_str(&format!("Type: {t}\n"));
    }
    if !f.locations.is_empty() {
        let locs: Vec<String> = f.locations.iter().map(ToString::to_string).collect();
        s.push_str(&format!("Reported locations: {}\n", locs.join(", ")));
    }
    s.push_str("\nFunctions:\n");
    for fd in &model.functions {
        let owner = if fd.contract.is_empty() { String::new() } else { format!("{}.", fd.contract) };
        s.push_str(&format!("- {owner}{}\n", fd.display_signature()));
    }
    s
}

/// Names from a reply: a JSON array of strings when one is present,
/// otherwise one name per non-empty line with list markup stripped.
pub fn parse_name_list(reply: &str) -> Vec<String> {
    if let Some(Value::Array(items)) = extract_json(reply) {
        return items
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => Some(s.trim().to_string()),
                Value::Object(o) => o.get("name").and_then(Value::as_str).map(|s| s.trim().to_string()),
                _ => None,
            })
            .filter(|s| !s.is_empty())
            .collect();
    }
    reply
        .lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(['-', '*', '•'])
                .trim()
                .trim_matches(['`', '"', '\'', ','])
                .trim()
                .to_string()
        })
        .filter(|l| !l.is_empty() && !l.starts_with("```") && !l.contains(' '))
        .collect()
}

/// Catalog entries for a proposed name; a parameter list that does not
/// match exactly falls back to the bare name.
fn resolve(model: &SourceModel, name: &str) -> Vec<FunctionId> {
    let hits = model.lookup(name);
    if !hits.is_empty() {
        return hits;
    }
    match name.split_once('(') {
        Some((bare, _)) => model.lookup(bare),
        None => Vec::new(),
    }
}

/// Functions the finding implicates: the model's proposals that exist in
/// the catalog, united with the finding's own normalized locations.
pub fn identify_key_functions(
    f: &Finding,
    model: &SourceModel,
    llm: &LlmGateway,
    temperature: f32,
) -> Result<Vec<FunctionId>, GatewayError> {
    let prompt = PromptPayload::new(&f.id, Stage::BceKeys, SYSTEM, user_prompt(f, model)).with_temperature(temperature);
    let reply = llm.complete(&prompt)?;
    let mut keys: Vec<FunctionId> = Vec::new();
    let mut push = |ids: Vec<FunctionId>| {
        for id in ids {
            if !keys.contains(&id) {
                keys.push(id);
            }
        }
    };
    for name in parse_name_list(&reply.text) {
        let ids = resolve(model, &name);
        if ids.is_empty() {
            log::info!("{}: proposed key `{name}` is not in the catalog, discarded", f.id);
        }
        push(ids);
    }
    for loc in &f.locations {
        if let Some(name) = loc.function_name() {
            push(resolve(model, name));
        }
    }
    Ok(keys)
}
