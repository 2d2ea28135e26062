use std::collections::BTreeSet;
use std::ops::Range;
use std::path::PathBuf;

use crate::bce::{BugContextBundle, TargetFunction};
use crate::solidity::lexer::{tokenize, TokenKind};
use crate::solidity::parser::{parse_file, RawSpan};
use crate::solidity::{canonical_type, SolcVersion};

use super::draft::{PoCDraft, Provenance};
use super::prompt::import_path;

const ABI_V2: &str = "pragma experimental ABIEncoderV2;";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SanitizeError {
    #[error("draft has no contract definition")]
    NoContract,
}

/// What the sanitizer aligns a draft with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SanitizeTarget {
    pub pragma: String,
    pub compiler: SolcVersion,
    pub primary_file: PathBuf,
    /// All project files holding sliced definitions.
    pub files: Vec<PathBuf>,
    pub contracts: Vec<String>,
    /// `(name, canonical parameter types)`.
    pub functions: BTreeSet<(String, Vec<String>)>,
}

impl SanitizeTarget {
    pub fn from_bundle(b: &BugContextBundle) -> Self {
        let mut files: Vec<PathBuf> = vec![b.primary_file.clone()];
        for it in b.slice.iter().chain(&b.constructors_and_initializers) {
            if !files.contains(&it.file) {
                files.push(it.file.clone());
            }
        }
        SanitizeTarget {
            pragma: b.build_metadata.pragma.0.clone(),
            compiler: b.build_metadata.compiler,
            primary_file: b.primary_file.clone(),
            files,
            contracts: b.target_contracts.clone(),
            functions: function_set(&b.target_functions),
        }
    }
}

pub fn function_set(fns: &[TargetFunction]) -> BTreeSet<(String, Vec<String>)> {
    fns.iter().map(|t| (t.name.clone(), t.params.clone())).collect()
}

/// Bundle-facing entry point.
pub fn sanitize_draft(draft: &PoCDraft, bundle: &BugContextBundle) -> Result<PoCDraft, SanitizeError> {
    sanitize_with(draft, &SanitizeTarget::from_bundle(bundle))
}

/// Removes conflicting definitions, then aligns the pragma, adds the ABI
/// encoder pragma for pre-0.8 targets and fixes or adds the target import.
pub fn sanitize_with(draft: &PoCDraft, t: &SanitizeTarget) -> Result<PoCDraft, SanitizeError> {
    if !has_contract(&draft.text) {
        return Err(SanitizeError::NoContract);
    }
    let mut text = remove_conflicts(&draft.text, t);
    text = align_pragma(&text, &t.pragma);
    if t.compiler.needs_legacy_abi_option() {
        text = ensure_abi_v2(&text);
    }
    text = fix_imports(&text, t);
    Ok(PoCDraft {
        text,
        attempt_index: draft.attempt_index,
        provenance: Provenance::Sanitized,
    })
}

fn has_contract(text: &str) -> bool {
    match tokenize(text) {
        Ok(toks) => toks.windows(2).any(|w| {
            w[0].kind == TokenKind::Ident && w[0].text(text) == "contract" && w[1].kind == TokenKind::Ident
        }),
        Err(_) => text.split_whitespace().any(|w| w == "contract"),
    }
}

/// Widens a span to whole lines when it is alone on them.
fn whole_lines(text: &str, span: &RawSpan) -> Range<usize> {
    let bytes = text.as_bytes();
    let mut start = span.start_byte;
    while start > 0 && matches!(bytes[start - 1], b' ' | b'\t') {
        start -= 1;
    }
    if start > 0 && bytes[start - 1] != b'\n' {
        start = span.start_byte;
    }
    let mut end = span.end_byte;
    while end < bytes.len() && matches!(bytes[end], b' ' | b'\t' | b'\r') {
        end += 1;
    }
    if end < bytes.len() && bytes[end] == b'\n' {
        end += 1;
    } else if end < bytes.len() {
        end = span.end_byte;
    }
    start..end
}

fn remove_conflicts(text: &str, t: &SanitizeTarget) -> String {
    let parsed = match parse_file(text) {
        Ok(p) => p,
        Err(e) => {
            log::debug!("draft does not parse ({}); conflict removal skipped", e.message);
            return text.to_string();
        }
    };
    let mut cuts: Vec<Range<usize>> = Vec::new();
    let conflicting = |f: &crate::solidity::parser::RawFunction| {
        if f.is_constructor || matches!(f.name.as_str(), "fallback" | "receive" | "") {
            return false;
        }
        let params: Vec<String> = f.params.iter().map(|p| canonical_type(&p.ty)).collect();
        t.functions.contains(&(f.name.clone(), params))
    };
    for c in &parsed.contracts {
        if t.contracts.contains(&c.name) {
            // a pasted copy of the target contract
            cuts.push(whole_lines(text, &c.span));
            continue;
        }
        for f in c.functions.iter().filter(|f| conflicting(f)) {
            cuts.push(whole_lines(text, &f.span));
        }
    }
    for f in parsed.free_functions.iter().filter(|f| conflicting(f)) {
        cuts.push(whole_lines(text, &f.span));
    }
    if cuts.is_empty() {
        return text.to_string();
    }
    cuts.sort_by_key(|r| r.start);
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for r in cuts {
        if r.start < at {
            continue;
        }
        out.push_str(&text[at..r.start]);
        at = r.end;
    }
    out.push_str(&text[at..]);
    out
}

/// Byte range of the first `pragma solidity ...;` directive.
fn find_pragma(text: &str) -> Option<Range<usize>> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let lead = line.len() - line.trim_start().len();
        if line.trim_start().starts_with("pragma solidity") {
            let start = offset + lead;
            let end = text[start..].find(';').map(|i| start + i + 1)?;
            return Some(start..end);
        }
        offset += line.len();
    }
    None
}

fn align_pragma(text: &str, req: &str) -> String {
    let want = format!("pragma solidity {req};");
    match find_pragma(text) {
        Some(r) if text[r.clone()] == want => text.to_string(),
        Some(r) => format!("{}{}{}", &text[..r.start], want, &text[r.end..]),
        None => format!("{want}\n{text}"),
    }
}

/// End offset of the line holding byte `at`, newline included.
fn line_end(text: &str, at: usize) -> usize {
    text[at..].find('\n').map_or(text.len(), |i| at + i + 1)
}

fn ensure_abi_v2(text: &str) -> String {
    let has = text.lines().any(|l| {
        let l = l.trim();
        l.starts_with("pragma experimental ABIEncoderV2") || l.starts_with("pragma abicoder v2")
    });
    if has {
        return text.to_string();
    }
    match find_pragma(text) {
        Some(r) => {
            let at = line_end(text, r.end);
            let nl = if text[..at].ends_with('\n') { "" } else { "\n" };
            format!("{}{nl}{ABI_V2}\n{}", &text[..at], &text[at..])
        }
        None => format!("{ABI_V2}\n{text}"),
    }
}

struct ImportLine {
    path: String,
    path_range: Range<usize>,
    line_end: usize,
}

fn imports(text: &str) -> Vec<ImportLine> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let t = line.trim_start();
        if t.starts_with("import ") || t.starts_with("import\"") || t.starts_with("import{") {
            if let Some(q) = line.find(['"', '\'']) {
                let quote = line.as_bytes()[q] as char;
                if let Some(len) = line[q + 1..].find(quote) {
                    out.push(ImportLine {
                        path: line[q + 1..q + 1 + len].to_string(),
                        path_range: offset + q + 1..offset + q + 1 + len,
                        line_end: offset + line.len(),
                    });
                }
            }
        }
        offset += line.len();
    }
    out
}

fn file_name(p: &str) -> &str {
    p.rsplit(['/', '\\']).next().unwrap_or(p)
}

fn fix_imports(text: &str, t: &SanitizeTarget) -> String {
    let mut text = text.to_string();
    // rewrite wrong paths to any target file, last first so offsets hold
    let wanted: Vec<(String, String)> = t
        .files
        .iter()
        .map(|f| (file_name(&f.to_string_lossy()).to_string(), import_path(f)))
        .collect();
    let mut edits: Vec<(Range<usize>, String)> = Vec::new();
    for imp in imports(&text) {
        if wanted.iter().any(|(_, p)| *p == imp.path) {
            continue;
        }
        let name = file_name(&imp.path);
        let matches: Vec<&(String, String)> = wanted.iter().filter(|(n, _)| n == name).collect();
        if let [only] = matches.as_slice() {
            edits.push((imp.path_range.clone(), only.1.clone()));
        }
    }
    for (r, p) in edits.into_iter().rev() {
        text.replace_range(r, &p);
    }
    let primary = import_path(&t.primary_file);
    let present = imports(&text);
    if present.iter().any(|i| i.path == primary) {
        return text;
    }
    let line = format!("import \"{primary}\";\n");
    let at = match present.last() {
        Some(i) => i.line_end,
        None => last_pragma_end(&text),
    };
    let nl = if at > 0 && !text[..at].ends_with('\n') { "\n" } else { "" };
    text.insert_str(at, &format!("{nl}{line}"));
    text
}

fn last_pragma_end(text: &str) -> usize {
    let mut offset = 0;
    let mut end = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with("pragma ") {
            end = offset + line.len();
        }
        offset += line.len();
    }
    end
}
