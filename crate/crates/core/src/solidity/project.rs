use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::*;
use super::parser::{self, ParsedFile, Qualifier, RawFunction, RawSpan};
use super::version::VersionReq;
use crate::par;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}:{column}: {message}")]
    Syntax {
        file: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("no Solidity files under {0}")]
    NoSources(PathBuf),
    #[error("no contracts defined under {0}")]
    EmptyProject(PathBuf),
    #[error("call-graph export {path} line {line}: {message}")]
    CallGraphImport { path: PathBuf, line: usize, message: String },
}

/// Directories never scanned for sources: build output, dependencies,
/// and the project's own tests/scripts.
const SKIP_DIRS: &[&str] = &["out", "cache", "lib", "node_modules", "test", "tests", "script", "broadcast", "artifacts"];

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Line-delimited `{"caller": "C.f", "callee": "D.g"}` records whose
    /// edges are merged into the native call graph.
    pub external_call_graph: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ExternalEdge {
    caller: String,
    callee: String,
}

/// Parsed project: the function catalog, modifiers, call graph and ABI.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceModel {
    pub root: PathBuf,
    pub files: Vec<SourceFile>,
    pub contracts: Vec<ContractDef>,
    pub functions: Vec<FunctionDef>,
    pub modifiers: Vec<ModifierDef>,
    pub graph: CallGraph,
    pub remappings: Vec<String>,
}

pub fn parse_project(root: &Path) -> Result<SourceModel, ModelError> {
    parse_project_with(root, &ParseOptions::default())
}

pub fn parse_project_with(root: &Path, opts: &ParseOptions) -> Result<SourceModel, ModelError> {
    let mut paths = Vec::new();
    collect_sources(root, root, &mut paths)?;
    paths.sort();
    if paths.is_empty() {
        return Err(ModelError::NoSources(root.to_path_buf()));
    }
    let parsed: Vec<Result<(SourceFile, ParsedFile), ModelError>> = par::map(&paths, |rel| {
        let full = root.join(rel);
        let text = fs::read_to_string(&full).map_err(|source| ModelError::Io { path: full.clone(), source })?;
        let pf = parser::parse_file(&text).map_err(|e| ModelError::Syntax {
            file: rel.clone(),
            line: e.line,
            column: e.column,
            message: e.message,
        })?;
        Ok((
            SourceFile {
                path: rel.clone(),
                text,
                pragma: pf.pragma.clone(),
            },
            pf,
        ))
    });
    let parsed = parsed.into_iter().collect::<Result<Vec<_>, _>>()?;
    if parsed.iter().all(|(_, pf)| pf.contracts.is_empty() && pf.free_functions.is_empty()) {
        return Err(ModelError::EmptyProject(root.to_path_buf()));
    }
    let remappings = read_remappings(root)?;
    let mut model = build(root, parsed, remappings);
    if let Some(path) = &opts.external_call_graph {
        model.import_call_graph(path)?;
    }
    Ok(model)
}

/// Builds a model from in-memory sources; used by tests and by callers that
/// already hold the text.
pub fn parse_sources(root: &Path, sources: &[(&str, &str)]) -> Result<SourceModel, ModelError> {
    let mut parsed = Vec::new();
    for (rel, text) in sources {
        let pf = parser::parse_file(text).map_err(|e| ModelError::Syntax {
            file: PathBuf::from(rel),
            line: e.line,
            column: e.column,
            message: e.message,
        })?;
        parsed.push((
            SourceFile {
                path: PathBuf::from(rel),
                text: text.to_string(),
                pragma: pf.pragma.clone(),
            },
            pf,
        ));
    }
    Ok(build(root, parsed, Vec::new()))
}

fn collect_sources(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ModelError> {
    let entries = fs::read_dir(dir).map_err(|source| ModelError::Io { path: dir.to_path_buf(), source })?;
    for entry in entries {
        let entry = entry.map_err(|source| ModelError::Io { path: dir.to_path_buf(), source })?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        let ft = entry.file_type().map_err(|source| ModelError::Io { path: path.clone(), source })?;
        if ft.is_dir() {
            if !name.starts_with('.') && !SKIP_DIRS.contains(&name.as_str()) {
                collect_sources(root, &path, out)?;
            }
        } else if name.ends_with(".sol") && !name.ends_with(".t.sol") && !name.ends_with(".s.sol") {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

fn read_remappings(root: &Path) -> Result<Vec<String>, ModelError> {
    let path = root.join("remappings.txt");
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(|source| ModelError::Io { path, source })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn span_of(file: &Path, raw: &RawSpan) -> SourceSpan {
    SourceSpan {
        file: file.to_path_buf(),
        start_line: raw.start_line,
        end_line: raw.end_line,
        start_byte: raw.start_byte,
        end_byte: raw.end_byte,
    }
}

fn is_initializer(f: &RawFunction) -> bool {
    let n = f.name.as_str();
    n == "initialize"
        || n == "init"
        || (n.starts_with("__") && n.ends_with("_init"))
        || f.invocations.iter().any(|m| m == "initializer" || m == "reinitializer")
}

struct Pending {
    contract: Option<usize>,
    file: PathBuf,
    raw: RawFunction,
}

fn build(root: &Path, parsed: Vec<(SourceFile, ParsedFile)>, remappings: Vec<String>) -> SourceModel {
    let mut files = Vec::new();
    let mut contracts = Vec::new();
    let mut functions = Vec::new();
    let mut modifiers = Vec::new();
    let mut pending = Vec::new();

    let contract_names: HashSet<String> = parsed
        .iter()
        .flat_map(|(_, pf)| pf.contracts.iter().map(|c| c.name.clone()))
        .collect();

    for (file, pf) in parsed {
        for raw_fn in pf.free_functions {
            pending.push(Pending {
                contract: None,
                file: file.path.clone(),
                raw: raw_fn,
            });
        }
        for rc in pf.contracts {
            let cidx = contracts.len();
            let mut mod_ids = Vec::new();
            for rm in rc.modifiers {
                let span = span_of(&file.path, &rm.span);
                mod_ids.push(modifiers.len());
                modifiers.push(ModifierDef {
                    contract: rc.name.clone(),
                    qualified_name: format!("{}.{}", rc.name, rm.name),
                    name: rm.name,
                    params: rm.params,
                    body_text: file.text[span.start_byte..span.end_byte].to_string(),
                    span,
                });
            }
            let default_vis = if rc.kind == ContractKind::Interface { Visibility::External } else { Visibility::Public };
            contracts.push(ContractDef {
                name: rc.name.clone(),
                kind: rc.kind,
                bases: rc.bases.clone(),
                file: file.path.clone(),
                span: span_of(&file.path, &rc.span),
                state_vars: rc
                    .state_vars
                    .into_iter()
                    .map(|v| StateVar {
                        name: v.name,
                        ty: v.ty,
                        visibility: v.visibility,
                        constant: v.constant,
                        decl_text: v.decl_text,
                    })
                    .collect(),
                structs: rc.structs,
                enums: rc.enums,
                using_libraries: rc.using_libraries,
                functions: Vec::new(),
                modifiers: mod_ids,
            });
            for mut raw_fn in rc.functions {
                if raw_fn.visibility.is_none() {
                    raw_fn.visibility = Some(default_vis);
                }
                pending.push(Pending {
                    contract: Some(cidx),
                    file: file.path.clone(),
                    raw: raw_fn,
                });
            }
        }
        files.push(file);
    }

    let mut raw_calls = Vec::new();
    for (i, p) in pending.iter().enumerate() {
        let cname = p.contract.map(|c| contracts[c].name.clone()).unwrap_or_default();
        let file = p.file.clone();
        let bases: HashSet<&str> = p.contract.map(|c| contracts[c].bases.iter().map(String::as_str).collect()).unwrap_or_default();
        let span = span_of(&file, &p.raw.span);
        let text = &files.iter().find(|f| f.path == file).expect("file present").text;
        let r = &p.raw;
        functions.push(FunctionDef {
            qualified_name: if cname.is_empty() { r.name.clone() } else { format!("{cname}.{}", r.name) },
            contract: cname,
            simple_name: r.name.clone(),
            visibility: r.visibility.unwrap_or(Visibility::Internal),
            mutability: r.mutability.clone(),
            is_underscored: r.name.starts_with('_'),
            params: r.params.clone(),
            returns: r.returns.clone(),
            modifiers: r
                .invocations
                .iter()
                .filter(|m| !(r.is_constructor && (contract_names.contains(*m) || bases.contains(m.as_str()))))
                .cloned()
                .collect(),
            body_text: text[span.start_byte..span.end_byte].to_string(),
            span,
            is_constructor_or_initializer: r.is_constructor || is_initializer(r),
        });
        if let Some(c) = p.contract {
            contracts[c].functions.push(i);
        }
        raw_calls.push((p.contract, r.calls.clone()));
    }

    let resolver = Resolver::new(&contracts, &functions, &modifiers);
    let mut edges = Vec::new();
    for (caller, (cidx, calls)) in raw_calls.iter().enumerate() {
        let vars = resolver.typed_vars(*cidx, &functions[caller]);
        for call in calls {
            for callee in resolver.resolve_call(*cidx, &vars, &call.qualifier, &call.name) {
                edges.push((caller, callee));
            }
        }
    }
    let nodes = functions
        .iter()
        .enumerate()
        .map(|(i, f)| GraphNode {
            underscored: f.is_underscored,
            modifiers: resolver.resolve_modifiers(pending[i].contract, &f.modifiers),
        })
        .collect();
    SourceModel {
        root: root.to_path_buf(),
        files,
        contracts,
        functions,
        modifiers,
        graph: CallGraph::new(nodes, edges),
        remappings,
    }
}

struct Resolver<'a> {
    contracts: &'a [ContractDef],
    functions: &'a [FunctionDef],
    modifiers: &'a [ModifierDef],
    by_name: HashMap<&'a str, usize>,
    free: Vec<FunctionId>,
}

impl<'a> Resolver<'a> {
    fn new(contracts: &'a [ContractDef], functions: &'a [FunctionDef], modifiers: &'a [ModifierDef]) -> Self {
        let mut by_name = HashMap::new();
        for (i, c) in contracts.iter().enumerate() {
            by_name.entry(c.name.as_str()).or_insert(i);
        }
        let free = functions.iter().enumerate().filter(|(_, f)| f.contract.is_empty()).map(|(i, _)| i).collect();
        Resolver {
            contracts,
            functions,
            modifiers,
            by_name,
            free,
        }
    }

    /// The contract followed by its bases, most-derived first, without repeats.
    fn lookup_order(&self, c: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![c];
        let mut seen = HashSet::new();
        while let Some(x) = stack.pop() {
            if !seen.insert(x) {
                continue;
            }
            out.push(x);
            // push in declaration order so the rightmost (most derived) base pops first
            for b in &self.contracts[x].bases {
                if let Some(&bi) = self.by_name.get(b.as_str()) {
                    stack.push(bi);
                }
            }
        }
        out
    }

    fn find_in(&self, order: &[usize], name: &str) -> Vec<FunctionId> {
        for &c in order {
            let hits: Vec<FunctionId> = self.contracts[c]
                .functions
                .iter()
                .copied()
                .filter(|&f| self.functions[f].simple_name == name && !self.functions[f].is_constructor())
                .collect();
            if !hits.is_empty() {
                return hits;
            }
        }
        Vec::new()
    }

    /// Variables visible in `f` whose declared type is a project contract:
    /// parameters, state variables along the inheritance chain, and locals
    /// declared as `Type [location] name`.
    fn typed_vars(&self, contract: Option<usize>, f: &FunctionDef) -> HashMap<String, usize> {
        let mut vars = HashMap::new();
        let mut bind = |name: &str, ty: &str| {
            let ty = ty.split_whitespace().next().unwrap_or("");
            if let Some(&c) = self.by_name.get(ty) {
                if !name.is_empty() {
                    vars.insert(name.to_string(), c);
                }
            }
        };
        if let Some(c) = contract {
            for x in self.lookup_order(c).into_iter().rev() {
                for v in &self.contracts[x].state_vars {
                    bind(&v.name, &v.ty);
                }
            }
        }
        if let Ok(toks) = super::lexer::tokenize(&f.body_text) {
            let words: Vec<&str> = toks
                .iter()
                .map(|t| if t.kind == super::lexer::TokenKind::Ident { t.text(&f.body_text) } else { "" })
                .collect();
            for i in 0..words.len().saturating_sub(1) {
                if !self.by_name.contains_key(words[i]) {
                    continue;
                }
                let mut j = i + 1;
                if matches!(words[j], "memory" | "storage" | "calldata") {
                    j += 1;
                }
                if let Some(&name) = words.get(j) {
                    if !name.is_empty() && !self.by_name.contains_key(name) {
                        bind(name, words[i]);
                    }
                }
            }
        }
        for p in &f.params {
            bind(&p.name, &p.ty);
        }
        vars
    }

    fn resolve_call(
        &self,
        contract: Option<usize>,
        vars: &HashMap<String, usize>,
        qualifier: &Qualifier,
        name: &str,
    ) -> Vec<FunctionId> {
        let free = || -> Vec<FunctionId> {
            self.free.iter().copied().filter(|&f| self.functions[f].simple_name == name).collect()
        };
        match (qualifier, contract) {
            (Qualifier::None, Some(c)) | (Qualifier::This, Some(c)) => {
                let hits = self.find_in(&self.lookup_order(c), name);
                if hits.is_empty() {
                    free()
                } else {
                    hits
                }
            }
            (Qualifier::None, None) => free(),
            (Qualifier::Super, Some(c)) => {
                let order = self.lookup_order(c);
                self.find_in(&order[1..], name)
            }
            (Qualifier::Ident(q), _) if self.by_name.contains_key(q.as_str()) => {
                self.find_in(&self.lookup_order(self.by_name[q.as_str()]), name)
            }
            (Qualifier::Ident(q), _) if vars.contains_key(q.as_str()) => {
                let hits = self.find_in(&self.lookup_order(vars[q.as_str()]), name);
                if hits.is_empty() {
                    log::debug!("call {q}.{name} has no in-project implementation, no edge");
                }
                hits
            }
            (Qualifier::Ident(_) | Qualifier::Expr, Some(c)) => {
                // only library functions bound with `using L for T`
                let libs: Vec<usize> = self
                    .lookup_order(c)
                    .into_iter()
                    .flat_map(|x| self.contracts[x].using_libraries.iter())
                    .filter_map(|l| self.by_name.get(l.as_str()).copied())
                    .filter(|&l| self.contracts[l].kind == ContractKind::Library)
                    .collect();
                self.find_in(&libs, name)
            }
            _ => Vec::new(),
        }
    }

    fn resolve_modifiers(&self, contract: Option<usize>, names: &[String]) -> Vec<ModifierId> {
        let Some(c) = contract else { return Vec::new() };
        let order = self.lookup_order(c);
        let mut out = Vec::new();
        for name in names {
            let hit = order
                .iter()
                .flat_map(|&x| self.contracts[x].modifiers.iter().copied())
                .find(|&m| self.modifiers[m].name == *name);
            if let Some(m) = hit {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }
}

impl SourceModel {
    fn import_call_graph(&mut self, path: &Path) -> Result<usize, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
        let mut extra = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExternalEdge = serde_json::from_str(line).map_err(|e| ModelError::CallGraphImport {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            let callers = self.lookup(&rec.caller);
            let callees = self.lookup(&rec.callee);
            if callers.is_empty() || callees.is_empty() {
                log::debug!("external edge {} -> {} has an unknown endpoint, dropped", rec.caller, rec.callee);
            }
            for &a in &callers {
                for &b in &callees {
                    extra.push((a, b));
                }
            }
        }
        Ok(self.graph.add_edges(extra))
    }

    /// Catalog lookup by simple name, `Contract.name`, or full catalog key.
    pub fn lookup(&self, name: &str) -> Vec<FunctionId> {
        let name = name.trim();
        self.functions
            .iter()
            .enumerate()
            .filter(|(_, f)| f.simple_name == name || f.qualified_name == name || f.key() == name || f.signature() == name)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn contains_function(&self, name: &str) -> bool {
        !self.lookup(name).is_empty()
    }

    pub fn contract(&self, name: &str) -> Option<&ContractDef> {
        self.contracts.iter().find(|c| c.name == name)
    }

    pub fn file(&self, path: &Path) -> Option<&SourceFile> {
        self.files.iter().find(|f| f.path == path)
    }

    /// Function whose span contains `line`. With no file given the line must
    /// fall inside exactly one file's function.
    pub fn function_at_line(&self, file: Option<&Path>, line: usize) -> Option<FunctionId> {
        let hits: Vec<FunctionId> = self
            .functions
            .iter()
            .enumerate()
            .filter(|(_, f)| file.is_none_or(|p| paths_match(&f.span.file, p)) && f.span.contains_line(line))
            .map(|(i, _)| i)
            .collect();
        // nested spans cannot occur for functions, but overlapping files can
        match hits.as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    /// Converts a byte offset in `file` to a 1-based line.
    pub fn line_of_offset(&self, file: Option<&Path>, offset: usize) -> Option<(PathBuf, usize)> {
        let candidates: Vec<&SourceFile> = self.files.iter().filter(|f| file.is_none_or(|p| paths_match(&f.path, p))).collect();
        match candidates.as_slice() {
            [f] if offset <= f.text.len() => {
                let starts = super::lexer::line_starts(&f.text);
                Some((f.path.clone(), super::lexer::line_of(&starts, offset)))
            }
            _ => None,
        }
    }

    /// Externally callable functions of deployable contracts plus one getter
    /// per public state variable.
    pub fn public_abi(&self) -> Vec<CallableDescriptor> {
        let user_types = self.user_type_kinds();
        let mut out = Vec::new();
        for c in &self.contracts {
            if matches!(c.kind, ContractKind::Interface | ContractKind::Library) {
                continue;
            }
            for &fid in &c.functions {
                let f = &self.functions[fid];
                if f.is_constructor() || f.simple_name == "fallback" || f.simple_name == "receive" {
                    continue;
                }
                if f.visibility.is_externally_visible() {
                    out.push(CallableDescriptor {
                        contract: c.name.clone(),
                        name: f.simple_name.clone(),
                        inputs: f.params.iter().map(|p| p.ty.clone()).collect(),
                        outputs: f.returns.iter().map(|p| p.ty.clone()).collect(),
                        kind: CallableKind::Function,
                        mutability: f.mutability.clone(),
                    });
                }
            }
            for v in &c.state_vars {
                if v.visibility != Visibility::Public {
                    continue;
                }
                match getter_shape(&v.ty, &user_types) {
                    Some((inputs, output)) => out.push(CallableDescriptor {
                        contract: c.name.clone(),
                        name: v.name.clone(),
                        inputs,
                        outputs: vec![output],
                        kind: CallableKind::Getter,
                        mutability: Some("view".into()),
                    }),
                    None => log::info!("no getter synthesized for {}.{} of type `{}`", c.name, v.name, v.ty),
                }
            }
        }
        out
    }

    /// Contract/interface/enum names map to `true` (address- or integer-like
    /// values); struct names map to `false`.
    fn user_type_kinds(&self) -> BTreeMap<String, bool> {
        let mut m = BTreeMap::new();
        for c in &self.contracts {
            m.insert(c.name.clone(), true);
            for e in &c.enums {
                m.insert(e.clone(), true);
            }
            for s in &c.structs {
                m.insert(s.clone(), false);
            }
        }
        m
    }
}

fn paths_match(have: &Path, want: &Path) -> bool {
    have == want || have.ends_with(want) || (want.components().count() == 1 && have.file_name() == want.file_name())
}

const ELEMENTARY: &[&str] = &["address", "bool", "string", "bytes", "uint", "int", "byte"];

fn is_elementary(ty: &str) -> bool {
    let base = ty.trim().trim_start_matches("address payable").trim();
    if ty.trim().starts_with("address") {
        return base.is_empty() || ty.trim() == "address";
    }
    ELEMENTARY.iter().any(|e| {
        ty.strip_prefix(e)
            .is_some_and(|rest| rest.chars().all(|c| c.is_ascii_digit()))
    })
}

/// Getter inputs/output for a public variable type, or `None` when the value
/// type is a struct or unknown.
fn getter_shape(ty: &str, user: &BTreeMap<String, bool>) -> Option<(Vec<String>, String)> {
    let ty = ty.trim();
    if let Some(inner) = ty.strip_prefix("mapping") {
        let inner = inner.trim().strip_prefix('(')?.strip_suffix(')')?;
        let (key, value) = split_arrow(inner)?;
        let (mut inputs, out) = getter_shape(value, user)?;
        inputs.insert(0, key.trim().to_string());
        return Some((inputs, out));
    }
    if let Some(open) = ty.rfind('[') {
        if ty.ends_with(']') {
            let (mut inputs, out) = getter_shape(&ty[..open], user)?;
            inputs.insert(0, "uint256".into());
            return Some((inputs, out));
        }
    }
    let simple = ty.rsplit('.').next().unwrap_or(ty);
    if is_elementary(ty) || user.get(simple).copied() == Some(true) {
        Some((Vec::new(), ty.to_string()))
    } else {
        None
    }
}

/// Splits `K => V` at the top-level arrow.
fn split_arrow(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    let bytes = s.as_bytes();
    for i in 0..bytes.len().saturating_sub(1) {
        match bytes[i] {
            b'(' => depth += 1,
            b')' => depth -= 1,
            b'=' if depth == 0 && bytes[i + 1] == b'>' => return Some((&s[..i], &s[i + 2..])),
            _ => {}
        }
    }
    None
}

impl SourceModel {
    /// Total whitespace-delimited tokens across all source files; the size of
    /// a fully flattened project prompt.
    pub fn flattened_token_count(&self) -> usize {
        self.files.iter().map(|f| f.text.split_whitespace().count()).sum()
    }

    pub fn pragma_of(&self, file: &Path) -> Option<&VersionReq> {
        self.file(file).and_then(|f| f.pragma.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(src: &str) -> SourceModel {
        parse_sources(Path::new("/p"), &[("src/A.sol", src)]).unwrap()
    }

    fn edge_names(m: &SourceModel) -> Vec<(String, String)> {
        m.graph
            .edges()
            .map(|(a, b)| (m.functions[a].qualified_name.clone(), m.functions[b].qualified_name.clone()))
            .collect()
    }

    #[test]
    fn wrapper_edge_and_catalog() {
        let m = model(
            "pragma solidity ^0.8.0;\ncontract T {\n function transfer(address to, uint a) public { _transfer(msg.sender, to, a); }\n function _transfer(address f, address t, uint a) internal {}\n}",
        );
        assert_eq!(m.functions.len(), 2);
        assert_eq!(edge_names(&m), vec![("T.transfer".into(), "T._transfer".into())]);
        assert!(m.functions[1].is_underscored);
    }

    #[test]
    fn empty_contract_has_empty_catalog() {
        let m = model("contract E {}");
        assert!(m.functions.is_empty());
        assert_eq!(m.graph.edge_count(), 0);
    }

    #[test]
    fn modifier_attachment() {
        let m = model(
            "contract N {\n address owner;\n modifier onlyOwner() { require(msg.sender == owner); _; }\n function mint(address to) public onlyOwner { }\n}",
        );
        let mint = &m.functions[m.lookup("mint")[0]];
        assert_eq!(mint.modifiers, vec!["onlyOwner"]);
        assert_eq!(m.graph.node(m.lookup("mint")[0]).modifiers, vec![0]);
    }

    #[test]
    fn base_constructor_call_is_not_a_modifier() {
        let m = model("contract B { constructor(uint x) {} }\ncontract C is B { constructor() B(1) {} }");
        let ctor = m.functions.iter().find(|f| f.contract == "C").unwrap();
        assert!(ctor.modifiers.is_empty());
        assert!(ctor.is_constructor_or_initializer);
    }

    #[test]
    fn resolution_order_and_scopes() {
        let src = r#"
library SafeMath { function add(uint a, uint b) internal pure returns (uint) { return a + b; } }
contract Base { function hook() internal virtual {} function _move() internal {} }
contract Child is Base {
    using SafeMath for uint;
    IERC20 token;
    function hook() internal override { super.hook(); }
    function run(uint x) public {
        hook();
        x.add(1);
        token.transfer(msg.sender, 1);
        Base._move();
        this.run(x);
        unknown();
    }
}"#;
        let m = model(src);
        let mut got = edge_names(&m);
        got.sort();
        let mut want: Vec<(String, String)> = vec![
            ("Child.hook", "Base.hook"),
            ("Child.run", "Child.hook"),
            ("Child.run", "SafeMath.add"),
            ("Child.run", "Base._move"),
            ("Child.run", "Child.run"),
        ]
        .into_iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn public_abi_with_getters() {
        let src = r#"
contract Nft {
    struct Info { uint a; }
    mapping(uint => address) public ownerOf;
    mapping(address => mapping(address => bool)) public approved;
    uint[] public ids;
    Info public info;
    Nft public self_;
    uint internal hidden;
    function mint(address to, uint id) public { ownerOf[id] = to; }
    function burn(uint id) external {}
    function _helper() internal {}
}
interface I { function f() external; }
"#;
        let m = model(src);
        let abi: Vec<String> = m.public_abi().iter().map(|d| format!("{}->{}", d.signature(), d.outputs.join(","))).collect();
        assert_eq!(abi, vec![
            "mint(address,uint)->",
            "burn(uint)->",
            "ownerOf(uint)->address",
            "approved(address,address)->bool",
            "ids(uint256)->uint",
            "self_()->Nft",
        ]);
    }

    #[test]
    fn all_internal_contract_has_empty_abi() {
        let m = model("contract X { uint y; function _f() internal {} function g() private {} }");
        assert!(m.public_abi().is_empty());
    }

    #[test]
    fn body_text_matches_span() {
        let src = "contract T {\n  function a() public {\n    b();\n  }\n  function b() internal {}\n}\n";
        let m = model(src);
        for f in &m.functions {
            assert_eq!(&src[f.span.start_byte..f.span.end_byte], f.body_text);
        }
        assert_eq!((m.functions[0].span.start_line, m.functions[0].span.end_line), (2, 4));
    }

    #[test]
    fn line_lookup_finds_enclosing_function() {
        let src = "contract T {\n  function a() public {\n    b();\n  }\n  function b() internal {}\n}\n";
        let m = model(src);
        assert_eq!(m.function_at_line(None, 3), Some(0));
        assert_eq!(m.function_at_line(Some(Path::new("A.sol")), 5), Some(1));
        assert_eq!(m.function_at_line(None, 1), None);
    }

    #[test]
    fn calls_through_contract_typed_variables() {
        let src = "interface I { function ping() external; }
contract B { function hit() public {} }
contract A {
    B stored;
    function viaParam(B b) public { b.hit(); }
    function viaState() public { stored.hit(); }
    function viaLocal(address a) public { B local = B(a); local.hit(); }
    function viaInterface(I i) public { i.ping(); }
}
";
        let m = model(src);
        let edges = edge_names(&m);
        for caller in ["A.viaParam", "A.viaState", "A.viaLocal"] {
            assert!(edges.contains(&(caller.to_string(), "B.hit".to_string())), "{caller}");
        }
        assert_eq!(edges.len(), 3);
    }
}
