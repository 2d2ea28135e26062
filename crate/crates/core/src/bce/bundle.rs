use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::expand::{Expansion, SliceItem};
use super::links::SemanticLink;
use super::BceError;
use crate::findings::Finding;
use crate::solidity::{canonical_type, BuildMetadata, CallableDescriptor, FunctionId, SolcVersion, SourceModel, SourceSpan, VersionReq};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleItem {
    #[serde(flatten)]
    pub item: SliceItem,
    /// `Contract.name(types)` for functions, `Contract.name` for modifiers.
    pub name: String,
    pub file: PathBuf,
    pub start_line: usize,
    pub end_line: usize,
    /// Hops from the nearest seed; absent for constructors and initializers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<u32>,
}

/// A function of a target contract, by simple name and canonical parameter
/// types; what generated test code must not redefine.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TargetFunction {
    pub contract: String,
    pub name: String,
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugContextBundle {
    pub finding_id: String,
    pub project_root: PathBuf,
    pub narrative: String,
    pub key_functions: Vec<String>,
    pub semantic_links: Vec<SemanticLink>,
    pub slice: Vec<BundleItem>,
    pub constructors_and_initializers: Vec<BundleItem>,
    pub build_metadata: BuildMetadata,
    pub public_abi: Vec<CallableDescriptor>,
    /// Contracts that define at least one sliced function, primary first.
    pub target_contracts: Vec<String>,
    /// Source file of the primary target, relative to the project root.
    pub primary_file: PathBuf,
    pub target_functions: Vec<TargetFunction>,
    #[serde(skip)]
    pub assembled_text: String,
}

pub const BUNDLE_TEXT: &str = "bundle.sol.txt";
pub const MANIFEST: &str = "manifest.json";

impl BugContextBundle {
    pub fn primary_contract(&self) -> &str {
        self.target_contracts.first().map_or("", String::as_str)
    }

    /// Whitespace-token size of the assembled code.
    pub fn token_count(&self) -> usize {
        self.assembled_text.split_whitespace().count()
    }

    pub fn slice_names(&self) -> Vec<&str> {
        self.slice.iter().map(|i| i.name.as_str()).collect()
    }

    /// Writes the reviewable text and the JSON manifest into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), BceError> {
        let io = |path: PathBuf| move |source| BceError::Io { path, source };
        std::fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        let text = dir.join(BUNDLE_TEXT);
        std::fs::write(&text, &self.assembled_text).map_err(io(text.clone()))?;
        let manifest = dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(self).expect("bundle serializes");
        std::fs::write(&manifest, json + "\n").map_err(io(manifest.clone()))?;
        Ok(())
    }

    pub fn import(dir: &Path) -> Result<Self, BceError> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|source| BceError::Io { path: p, source })
        };
        let mut b: BugContextBundle = serde_json::from_str(&read(MANIFEST)?).map_err(|e| BceError::Io {
            path: dir.join(MANIFEST),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
        b.assembled_text = read(BUNDLE_TEXT)?;
        Ok(b)
    }
}

fn item_of(model: &SourceModel, item: SliceItem, distance: Option<u32>) -> BundleItem {
    let (name, span) = match item {
        SliceItem::Function(f) => (model.functions[f].key(), &model.functions[f].span),
        SliceItem::Modifier(m) => (model.modifiers[m].qualified_name.clone(), &model.modifiers[m].span),
    };
    BundleItem {
        item,
        name,
        file: span.file.clone(),
        start_line: span.start_line,
        end_line: span.end_line,
        distance,
    }
}

/// A definition's first line starts at its keyword; strip the shared
/// indentation of the remaining lines so the block reads flush left.
fn dedent_tail(text: &str) -> String {
    let mut lines = text.lines();
    let Some(first) = lines.next() else { return String::new() };
    let rest: Vec<&str> = lines.collect();
    let indent = rest.iter().filter(|l| !l.trim().is_empty()).map(|l| l.len() - l.trim_start().len()).min().unwrap_or(0);
    let mut out = first.to_string();
    for l in rest {
        out.push('\n');
        out.push_str(l.get(indent..).unwrap_or_else(|| l.trim_start()));
    }
    out
}

fn body(model: &SourceModel, item: SliceItem) -> (&SourceSpan, &str) {
    match item {
        SliceItem::Function(f) => (&model.functions[f].span, &model.functions[f].body_text),
        SliceItem::Modifier(m) => (&model.modifiers[m].span, &model.modifiers[m].body_text),
    }
}

/// Highest minimum compiler among `files` that carry a pragma.
fn resolve_compiler<'a>(model: &'a SourceModel, files: impl Iterator<Item = &'a Path>) -> Result<Option<(SolcVersion, VersionReq)>, BceError> {
    let mut best: Option<(SolcVersion, VersionReq)> = None;
    let mut last_err = None;
    for p in files {
        let Some(req) = model.pragma_of(p) else { continue };
        match req.minimum() {
            Ok(v) if best.as_ref().is_none_or(|(b, _)| v > *b) => best = Some((v, req.clone())),
            Ok(_) => {}
            Err(message) => {
                log::warn!("{}: {message}", p.display());
                last_err = Some(BceError::BadPragma { req: req.0.clone(), message });
            }
        }
    }
    match (best, last_err) {
        (None, Some(e)) => Err(e),
        (b, _) => Ok(b),
    }
}

/// Adds constructors and initializers of every contract that defines a
/// sliced function, resolves build metadata, and concatenates the code in
/// reachability order.
pub fn assemble_bundle(
    f: &Finding,
    model: &SourceModel,
    keys: &[FunctionId],
    slice: &Expansion,
    links: &[SemanticLink],
) -> Result<BugContextBundle, BceError> {
    if slice.is_empty() {
        return Err(BceError::EmptySlice);
    }
    let mut ordered = slice.ordered(model);

    // primary contract first, then the rest in slice order
    let mut targets: Vec<String> = Vec::new();
    let contract_of = |id: FunctionId| model.functions[id].contract.clone();
    for c in keys.iter().map(|&k| contract_of(k)).chain(slice.functions.keys().map(|&k| contract_of(k))) {
        if !c.is_empty() && !targets.contains(&c) {
            targets.push(c);
        }
    }

    let mut ctors: Vec<BundleItem> = Vec::new();
    let mut ctor_ids: Vec<FunctionId> = Vec::new();
    for c in &targets {
        let Some(cd) = model.contract(c) else { continue };
        for &fid in &cd.functions {
            if model.functions[fid].is_constructor_or_initializer && !slice.functions.contains_key(&fid) {
                ctors.push(item_of(model, SliceItem::Function(fid), None));
                ctor_ids.push(fid);
            }
        }
    }
    // modifiers on constructors/initializers join the slice after everything else
    let tail = ordered.last().map_or(0, |(_, d)| d + 1);
    let mut extra_mods: BTreeSet<usize> = BTreeSet::new();
    for &fid in &ctor_ids {
        for &m in &model.graph.node(fid).modifiers {
            if !slice.modifiers.contains_key(&m) {
                extra_mods.insert(m);
            }
        }
    }
    ordered.extend(extra_mods.into_iter().map(|m| (SliceItem::Modifier(m), tail)));

    let slice_items: Vec<BundleItem> = ordered.iter().map(|&(it, d)| item_of(model, it, Some(d))).collect();

    let files_in_slice: Vec<&Path> = ordered
        .iter()
        .map(|&(it, _)| body(model, it).0.file.as_path())
        .chain(ctor_ids.iter().map(|&c| model.functions[c].span.file.as_path()))
        .collect();
    let (compiler, pragma) = match resolve_compiler(model, files_in_slice.iter().copied())? {
        Some(found) => found,
        None => resolve_compiler(model, model.files.iter().map(|f| f.path.as_path()))?.ok_or(BceError::MissingPragma)?,
    };
    let build_metadata = BuildMetadata {
        compiler,
        pragma,
        remappings: model.remappings.clone(),
    };

    let primary_file = keys
        .first()
        .map(|&k| model.functions[k].span.file.clone())
        .or_else(|| targets.first().and_then(|c| model.contract(c)).map(|c| c.file.clone()))
        .unwrap_or_else(|| files_in_slice[0].to_path_buf());

    let mut target_functions = Vec::new();
    for c in &targets {
        let Some(cd) = model.contract(c) else { continue };
        for &fid in &cd.functions {
            let fd = &model.functions[fid];
            if fd.is_constructor() || matches!(fd.simple_name.as_str(), "fallback" | "receive") {
                continue;
            }
            let tf = TargetFunction {
                contract: c.clone(),
                name: fd.simple_name.clone(),
                params: fd.params.iter().map(|p| canonical_type(&p.ty)).collect(),
            };
            if !target_functions.contains(&tf) {
                target_functions.push(tf);
            }
        }
    }

    let assembled_text = render(f, model, &build_metadata, &targets, &ordered, &ctor_ids);

    Ok(BugContextBundle {
        finding_id: f.id.clone(),
        project_root: model.root.clone(),
        narrative: f.narrative.clone(),
        key_functions: keys.iter().map(|&k| model.functions[k].key()).collect(),
        semantic_links: links.to_vec(),
        slice: slice_items,
        constructors_and_initializers: ctors,
        build_metadata,
        public_abi: model.public_abi(),
        target_contracts: targets,
        primary_file,
        target_functions,
        assembled_text,
    })
}

fn render(
    f: &Finding,
    model: &SourceModel,
    meta: &BuildMetadata,
    targets: &[String],
    ordered: &[(SliceItem, u32)],
    ctors: &[FunctionId],
) -> String {
    let mut out = String::new();
    out.push_str(&format!("// finding {}\n", f.id));
    out.push_str(&format!("// compiler {} (pragma solidity {})\n", meta.compiler, meta.pragma));
    if !meta.remappings.is_empty() {
        out.push_str(&format!("// remappings: {}\n", meta.remappings.join(" ")));
    }

    let mut outlined: Vec<&str> = targets.iter().map(String::as_str).collect();
    for &(it, _) in ordered {
        if let SliceItem::Modifier(m) = it {
            let c = model.modifiers[m].contract.as_str();
            if !c.is_empty() && !outlined.contains(&c) {
                outlined.push(c);
            }
        }
    }
    out.push_str("\n// ---- contracts ----\n");
    for name in outlined {
        let Some(c) = model.contract(name) else { continue };
        out.push_str(&format!("// {}\n{} {{\n", c.file.display(), c.header()));
        for v in &c.state_vars {
            out.push_str(&format!("    {}\n", v.decl_text.trim()));
        }
        out.push_str("}\n");
    }

    let emit = |out: &mut String, it: SliceItem| {
        let (span, text) = body(model, it);
        let name = item_of(model, it, None).name;
        out.push_str(&format!("\n// {}:{}-{} {}\n", span.file.display(), span.start_line, span.end_line, name));
        out.push_str(&dedent_tail(text));
        out.push('\n');
    };
    out.push_str("\n// ---- slice ----\n");
    for &(it, _) in ordered {
        emit(&mut out, it);
    }
    if !ctors.is_empty() {
        out.push_str("\n// ---- constructors and initializers ----\n");
        for &c in ctors {
            emit(&mut out, SliceItem::Function(c));
        }
    }
    out
}
