//! Choosing the bracketing action and the observed state from the public ABI.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::findings::Finding;
use crate::gre::PoCDraft;
use crate::llm::{extract_json, GatewayError, LlmGateway, PromptPayload, Stage};
use crate::solidity::{canonical_type, CallableDescriptor};

use super::markers::valid_query_id;

/// One call of the action or of a state query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedCall {
    pub descriptor: CallableDescriptor,
    /// Solidity argument expressions, as proposed.
    #[serde(default)]
    pub args: String,
}

impl PlannedCall {
    pub fn render(&self) -> String {
        format!("{}.{}({})", self.descriptor.contract, self.descriptor.name, self.args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateQuery {
    pub id: String,
    pub call: PlannedCall,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DvPlan {
    pub action: Vec<PlannedCall>,
    pub state_queries: Vec<StateQuery>,
    pub rationale: String,
    pub expected_direction: String,
    /// Proposals that named nothing in the ABI.
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl DvPlan {
    /// Without a state query there is nothing to compare.
    pub fn is_empty(&self) -> bool {
        self.state_queries.is_empty()
    }

    pub fn query_ids(&self) -> Vec<&str> {
        self.state_queries.iter().map(|q| q.id.as_str()).collect()
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &CallableDescriptor> {
        self.action.iter().map(|c| &c.descriptor).chain(self.state_queries.iter().map(|q| &q.call.descriptor))
    }

    /// Human-readable form used in later prompts.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("action (run once before and once after the trigger):\n");
        if self.action.is_empty() {
            s.push_str("  (none; only read the state)\n");
        }
        for c in &self.action {
            let _ = writeln!(s, "  {}", c.render());
        }
        s.push_str("state queries:\n");
        for q in &self.state_queries {
            let _ = writeln!(s, "  {} = {}", q.id, q.call.render());
        }
        if !self.expected_direction.is_empty() {
            let _ = writeln!(s, "expected change: {}", self.expected_direction);
        }
        if !self.rationale.is_empty() {
            let _ = writeln!(s, "rationale: {}", self.rationale);
        }
        s
    }
}

const SYSTEM_EXTRACT: &str = "You design differential checks for proof-of-concept tests. Given a \
vulnerability report, a passing Foundry test that triggers it and the public ABI of the project, \
pick (a) an action: one or a few public calls whose effect or success should change once the \
vulnerability is triggered, and (b) the state to observe: public getters or view functions whose \
value should differ before and after the trigger. Only use functions listed in the ABI. Reply with \
JSON only.";

const REPLY_SHAPE: &str = r#"{
  "action": [{"function": "Contract.name(type,...)", "args": "solidity argument expressions"}],
  "state": [{"id": "shortId", "function": "Contract.name(type,...)", "args": "..."}],
  "rationale": "why these calls expose the bug",
  "expected_direction": "how the state should change"
}"#;

pub fn extraction_prompt(f: &Finding, poc: &PoCDraft, abi: &[CallableDescriptor], temperature: f32) -> PromptPayload {
    let mut u = String::new();
    u.push_str("## Finding\n");
    let _ = writeln!(u, "report: {}", f.narrative.trim());
    if let Some(t) = &f.vuln_type {
        let _ = writeln!(u, "type: {t}");
    }
    u.push_str("\n## Test\n```solidity\n");
    u.push_str(&poc.text);
    if !poc.text.ends_with('\n') {
        u.push('\n');
    }
    u.push_str("```\n\n## Public ABI\n");
    for d in abi {
        let _ = writeln!(u, "{d}");
    }
    u.push_str("\n## Reply format\n");
    u.push_str(REPLY_SHAPE);
    u.push('\n');
    PromptPayload::new(&f.id, Stage::DvExtract, SYSTEM_EXTRACT, u).with_temperature(temperature)
}

/// `Contract.name(types)` with every part but the name optional.
fn split_reference(s: &str) -> (Option<&str>, &str, Option<Vec<String>>) {
    let s = s.trim().trim_end_matches(';');
    let (head, types) = match s.find('(') {
        Some(i) => {
            let inner = s[i + 1..].trim_end().trim_end_matches(')');
            let types = inner.split(',').map(str::trim).filter(|t| !t.is_empty()).map(|t| {
                // "uint256 id" -> "uint256"
                t.split_whitespace().next().unwrap_or(t).to_string()
            });
            (&s[..i], Some(types.collect()))
        }
        None => (s, None),
    };
    match head.rsplit_once('.') {
        Some((c, n)) => (Some(c.trim()), n.trim(), types),
        None => (None, head.trim(), types),
    }
}

/// The ABI entry a reference names, preferring `primary` among ties.
pub fn resolve_reference<'a>(reference: &str, abi: &'a [CallableDescriptor], primary: &str) -> Option<&'a CallableDescriptor> {
    let (contract, name, types) = split_reference(reference);
    let canon = types.map(|t| t.iter().map(|t| canonical_type(t)).collect::<Vec<_>>());
    let fits = |d: &&CallableDescriptor| {
        d.name == name && canon.as_ref().is_none_or(|c| d.inputs.iter().map(|t| canonical_type(t)).eq(c.iter().cloned()))
    };
    let matching: Vec<&CallableDescriptor> = abi.iter().filter(fits).collect();
    let pick = |from: &[&'a CallableDescriptor]| -> Option<&'a CallableDescriptor> {
        from.iter().find(|d| d.contract == primary).or(from.first()).copied()
    };
    if let Some(c) = contract {
        let exact: Vec<_> = matching.iter().copied().filter(|d| d.contract == c).collect();
        if !exact.is_empty() {
            return pick(&exact);
        }
    }
    pick(&matching)
}

fn text_field(v: &Value, keys: &[&str]) -> String {
    keys.iter().find_map(|k| v.get(k)).map_or_else(String::new, |x| match x {
        Value::String(s) => s.clone(),
        Value::Array(a) => a.iter().map(|e| e.as_str().map_or_else(|| e.to_string(), str::to_string)).collect::<Vec<_>>().join(", "),
        Value::Null => String::new(),
        other => other.to_string(),
    })
}

fn entries<'v>(v: &'v Value, keys: &[&str]) -> Vec<&'v Value> {
    match keys.iter().find_map(|k| v.get(k)) {
        Some(Value::Array(a)) => a.iter().collect(),
        Some(Value::Null) | None => Vec::new(),
        Some(one) => vec![one],
    }
}

fn reference_of(e: &Value) -> String {
    match e {
        Value::String(s) => s.clone(),
        _ => text_field(e, &["function", "call", "signature", "name"]),
    }
}

/// Builds a plan from the model's JSON, keeping only ABI members.
pub fn plan_from_json(v: &Value, abi: &[CallableDescriptor], primary: &str) -> DvPlan {
    let mut plan = DvPlan {
        rationale: text_field(v, &["rationale", "reason"]),
        expected_direction: text_field(v, &["expected_direction", "expected", "direction"]),
        ..DvPlan::default()
    };
    for e in entries(v, &["action", "actions"]) {
        let r = reference_of(e);
        match resolve_reference(&r, abi, primary) {
            Some(d) => plan.action.push(PlannedCall {
                descriptor: d.clone(),
                args: text_field(e, &["args", "arguments"]),
            }),
            None => plan.dropped.push(r),
        }
    }
    for e in entries(v, &["state", "state_queries", "states"]) {
        let r = reference_of(e);
        let Some(d) = resolve_reference(&r, abi, primary) else {
            plan.dropped.push(r);
            continue;
        };
        let proposed = text_field(e, &["id", "query_id"]);
        let base = if valid_query_id(&proposed) { proposed } else { d.name.clone() };
        let mut id = base.clone();
        let mut n = 2;
        while plan.state_queries.iter().any(|q| q.id == id) {
            id = format!("{base}_{n}");
            n += 1;
        }
        plan.state_queries.push(StateQuery {
            id,
            call: PlannedCall {
                descriptor: d.clone(),
                args: text_field(e, &["args", "arguments"]),
            },
        });
    }
    for d in &plan.dropped {
        log::warn!("plan names `{d}`, which is not in the public ABI; dropped");
    }
    plan
}

/// Asks for a plan; an unusable reply yields an empty plan.
pub fn extract_plan(
    f: &Finding,
    poc: &PoCDraft,
    abi: &[CallableDescriptor],
    primary: &str,
    llm: &LlmGateway,
    temperature: f32,
) -> Result<DvPlan, GatewayError> {
    let reply = llm.complete(&extraction_prompt(f, poc, abi, temperature))?;
    Ok(match extract_json(&reply.text) {
        Some(v) => plan_from_json(&v, abi, primary),
        None => {
            log::warn!("{}: extraction reply is not JSON", f.id);
            DvPlan::default()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solidity::CallableKind;
    use serde_json::json;

    fn d(contract: &str, name: &str, inputs: &[&str]) -> CallableDescriptor {
        CallableDescriptor {
            contract: contract.into(),
            name: name.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: vec![],
            kind: CallableKind::Function,
            mutability: None,
        }
    }

    fn abi() -> Vec<CallableDescriptor> {
        vec![
            d("Nft", "ownerOf", &["uint256"]),
            d("Nft", "mintTo", &["address", "uint256"]),
            d("Other", "ownerOf", &["uint256"]),
            d("Nft", "f", &["uint"]),
            d("Nft", "f", &["address"]),
        ]
    }

    #[test]
    fn references_resolve_by_contract_name_and_types() {
        let abi = abi();
        assert_eq!(resolve_reference("Other.ownerOf(uint256)", &abi, "Nft").unwrap().contract, "Other");
        assert_eq!(resolve_reference("ownerOf", &abi, "Nft").unwrap().contract, "Nft");
        assert_eq!(resolve_reference("ownerOf", &abi, "Other").unwrap().contract, "Other");
        assert_eq!(resolve_reference("Nft.f(uint256 x)", &abi, "Nft").unwrap().inputs, ["uint"]);
        assert_eq!(resolve_reference("f(address)", &abi, "Nft").unwrap().inputs, ["address"]);
        assert!(resolve_reference("f(bool)", &abi, "Nft").is_none());
        assert!(resolve_reference("Nft.balanceOf(address)", &abi, "Nft").is_none());
    }

    #[test]
    fn access_control_plan() {
        let v = json!({
            "action": [{"function": "Nft.mintTo(address,uint256)", "args": "attacker, 1"}],
            "state": [{"id": "owner1", "function": "Nft.ownerOf(uint256)", "args": "1"}],
            "rationale": "attacker mints for free",
            "expected_direction": "ownerOf(1) becomes attacker"
        });
        let p = plan_from_json(&v, &abi(), "Nft");
        assert_eq!(p.action[0].render(), "Nft.mintTo(attacker, 1)");
        assert_eq!(p.query_ids(), ["owner1"]);
        assert!(p.dropped.is_empty());
        assert!(p.render().contains("owner1 = Nft.ownerOf(1)"));
    }

    #[test]
    fn invented_functions_are_dropped_and_ids_deduplicated() {
        let v = json!({
            "action": ["Nft.drain()"],
            "state": [
                {"function": "Nft.ownerOf(uint256)", "args": "1"},
                {"function": "Nft.ownerOf(uint256)", "args": "2"},
                {"id": "bal", "function": "Nft.balanceOf(address)"}
            ]
        });
        let p = plan_from_json(&v, &abi(), "Nft");
        assert!(p.action.is_empty());
        assert_eq!(p.query_ids(), ["ownerOf", "ownerOf_2"]);
        assert_eq!(p.dropped, ["Nft.drain()", "Nft.balanceOf(address)"]);
        let abi = abi();
        assert!(p.descriptors().all(|x| abi.contains(x)));
    }

    #[test]
    fn unusable_ids_fall_back_to_the_function_name() {
        let v = json!({"state": [{"id": "has role", "function": "ownerOf"}]});
        assert_eq!(plan_from_json(&v, &abi(), "Nft").query_ids(), ["ownerOf"]);
        assert!(plan_from_json(&json!({}), &abi(), "Nft").is_empty());
    }
}
