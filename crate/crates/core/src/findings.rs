//! Static-analysis findings: the native line-delimited record format,
//! adapters for third-party analyzer reports, and normalization of reported
//! locations to function names.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::solidity::SourceModel;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("duplicate finding id `{0}`")]
    DuplicateId(String),
    #[error("unknown findings format `{0}` (expected native, slither or mythril)")]
    UnknownFormat(String),
    #[error("finding {id}: location `{raw}` does not fall inside any function body")]
    UnresolvableLocation { id: String, raw: String },
    #[error("finding {id}: function `{name}` is not defined in the project")]
    UnknownFunction { id: String, name: String },
    #[error("finding {id}: no narrative and no vulnerability type to substitute")]
    EmptyNarrative { id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    High,
    Other,
}

impl Severity {
    /// `high` and `critical` (any case) are high; everything else is not.
    pub fn from_label(label: &str) -> Self {
        match label.trim().to_ascii_lowercase().as_str() {
            "high" | "critical" => Severity::High,
            _ => Severity::Other,
        }
    }
}

impl Serialize for Severity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            Severity::High => "High",
            Severity::Other => "Other",
        })
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Severity::from_label(&String::deserialize(d)?))
    }
}

/// Where a finding points. Text forms: `withdraw` or `Bank.withdraw`;
/// `Bank.sol:42` or `line:42`; `Bank.sol@1234` or `offset:1234`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Location {
    Function(String),
    Line { file: Option<PathBuf>, line: usize },
    Offset { file: Option<PathBuf>, offset: usize },
}

impl Location {
    pub fn function_name(&self) -> Option<&str> {
        match self {
            Location::Function(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Function(n) => f.write_str(n),
            Location::Line { file: None, line } => write!(f, "line:{line}"),
            Location::Line { file: Some(p), line } => write!(f, "{}:{line}", p.display()),
            Location::Offset { file: None, offset } => write!(f, "offset:{offset}"),
            Location::Offset { file: Some(p), offset } => write!(f, "{}@{offset}", p.display()),
        }
    }
}

impl FromStr for Location {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty location".into());
        }
        let numeric = |n: &str| n.parse::<usize>().map_err(|_| format!("bad number in location `{s}`"));
        if let Some(n) = s.strip_prefix("offset:") {
            return Ok(Location::Offset { file: None, offset: numeric(n)? });
        }
        if let Some((file, n)) = s.rsplit_once(':') {
            let line = numeric(n)?;
            let file = (file != "line").then(|| PathBuf::from(file));
            return Ok(Location::Line { file, line });
        }
        if let Some((file, n)) = s.rsplit_once('@') {
            let offset = numeric(n)?;
            return Ok(Location::Offset {
                file: Some(PathBuf::from(file)),
                offset,
            });
        }
        Ok(Location::Function(s.to_string()))
    }
}

impl Serialize for Location {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Location {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One analyzer report item, as carried through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    pub tool: String,
    /// Project directory, relative to the run's project root. Empty means the
    /// root itself.
    #[serde(default)]
    pub project_ref: PathBuf,
    #[serde(default)]
    pub narrative: String,
    /// Vulnerability class name, e.g. `reentrancy`.
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub vuln_type: Option<String>,
    pub severity: Severity,
    #[serde(default)]
    pub locations: Vec<Location>,
    /// Ground truth (benchmark mode only): `true` when the finding is a real,
    /// exploitable bug.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingFormat {
    Native,
    Slither,
    Mythril,
}

impl FromStr for FindingFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "native" | "native-json" | "jsonl" => Ok(FindingFormat::Native),
            "slither" | "slither-json" => Ok(FindingFormat::Slither),
            "mythril" | "mythril-json" => Ok(FindingFormat::Mythril),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FindingCorpus {
    pub items: Vec<Finding>,
}

impl FindingCorpus {
    pub fn new(items: Vec<Finding>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for f in &items {
            if !seen.insert(f.id.as_str()) {
                return Err(IngestError::DuplicateId(f.id.clone()));
            }
        }
        Ok(FindingCorpus { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Keeps only high-severity items; retained items are untouched.
    pub fn retain_high(mut self) -> Self {
        self.items.retain(|f| f.severity == Severity::High);
        self
    }

    /// Finding ids grouped by project, in corpus order.
    pub fn by_project(&self) -> BTreeMap<PathBuf, Vec<&Finding>> {
        let mut m: BTreeMap<PathBuf, Vec<&Finding>> = BTreeMap::new();
        for f in &self.items {
            m.entry(f.project_ref.clone()).or_default().push(f);
        }
        m
    }

    /// All findings carry a label.
    pub fn is_benchmark(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|f| f.label.is_some())
    }

    /// Writes the native line-delimited form.
    pub fn to_native(&self) -> String {
        let mut out = String::new();
        for f in &self.items {
            out.push_str(&serde_json::to_string(f).expect("finding serializes"));
            out.push('\n');
        }
        out
    }
}

pub fn load_findings(path: &Path, format: FindingFormat) -> Result<FindingCorpus, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_findings(path, &text, format)
}

pub fn parse_findings(path: &Path, text: &str, format: FindingFormat) -> Result<FindingCorpus, IngestError> {
    let items = match format {
        FindingFormat::Native => parse_native(path, text)?,
        FindingFormat::Slither => adapt_slither(path, text)?,
        FindingFormat::Mythril => adapt_mythril(path, text)?,
    };
    FindingCorpus::new(items)
}

fn parse_native(path: &Path, text: &str) -> Result<Vec<Finding>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Finding = serde_json::from_str(line).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(f);
    }
    Ok(out)
}

fn whole_document(path: &Path, text: &str) -> Result<Value, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn field_error(path: &Path, message: String) -> IngestError {
    IngestError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message,
    }
}

/// `slither --json` output: `results.detectors[*]`.
fn adapt_slither(path: &Path, text: &str) -> Result<Vec<Finding>, IngestError> {
    let doc = whole_document(path, text)?;
    let detectors = doc
        .pointer("/results/detectors")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    let mut out = Vec::new();
    for (i, d) in detectors.iter().enumerate() {
        let check = d.get("check").and_then(Value::as_str).unwrap_or("unknown");
        let impact = d
            .get("impact")
            .and_then(Value::as_str)
            .ok_or_else(|| field_error(path, format!("detectors[{i}]: missing field `impact`")))?;
        let mut locations = Vec::new();
        for el in d.get("elements").and_then(Value::as_array).into_iter().flatten() {
            let ty = el.get("type").and_then(Value::as_str).unwrap_or("");
            let name = el.get("name").and_then(Value::as_str).unwrap_or("");
            if ty == "function" && !name.is_empty() {
                let parent = el
                    .pointer("/type_specific_fields/parent/name")
                    .and_then(Value::as_str);
                let loc = match parent {
                    Some(p) => format!("{p}.{name}"),
                    None => name.to_string(),
                };
                locations.push(Location::Function(loc));
            } else if ty == "node" {
                let file = el.pointer("/source_mapping/filename_relative").and_then(Value::as_str);
                let line = el
                    .pointer("/source_mapping/lines/0")
                    .and_then(Value::as_u64);
                if let Some(line) = line {
                    locations.push(Location::Line {
                        file: file.map(PathBuf::from),
                        line: line as usize,
                    });
                }
            }
        }
        dedup(&mut locations);
        out.push(Finding {
            id: d
                .get("id")
                .and_then(Value::as_str)
                .map(|s| format!("slither-{}", &s[..s.len().min(12)]))
                .unwrap_or_else(|| format!("slither-{i}")),
            tool: "slither".into(),
            project_ref: PathBuf::new(),
            narrative: d.get("description").and_then(Value::as_str).unwrap_or("").trim().to_string(),
            vuln_type: Some(check.to_string()),
            severity: Severity::from_label(impact),
            locations,
            label: None,
        });
    }
    Ok(out)
}

/// `myth analyze -o json` output: `issues[*]`.
fn adapt_mythril(path: &Path, text: &str) -> Result<Vec<Finding>, IngestError> {
    let doc = whole_document(path, text)?;
    let issues = doc.get("issues").and_then(Value::as_array).cloned().unwrap_or_default();
    let mut out = Vec::new();
    for (i, issue) in issues.iter().enumerate() {
        let severity = issue
            .get("severity")
            .and_then(Value::as_str)
            .ok_or_else(|| field_error(path, format!("issues[{i}]: missing field `severity`")))?;
        let mut locations = Vec::new();
        match issue.get("function").and_then(Value::as_str) {
            Some(func) if !func.is_empty() && !func.starts_with("fallback") && !func.starts_with("_function_0x") => {
                let name = func.split('(').next().unwrap_or(func);
                locations.push(Location::Function(name.to_string()));
            }
            _ => {
                if let Some(line) = issue.get("lineno").and_then(Value::as_u64) {
                    locations.push(Location::Line {
                        file: issue.get("filename").and_then(Value::as_str).map(PathBuf::from),
                        line: line as usize,
                    });
                }
            }
        }
        let title = issue.get("title").and_then(Value::as_str).unwrap_or("unknown");
        out.push(Finding {
            id: format!("mythril-{i}"),
            tool: "mythril".into(),
            project_ref: PathBuf::new(),
            narrative: issue.get("description").and_then(Value::as_str).unwrap_or("").trim().to_string(),
            vuln_type: Some(title.to_string()),
            severity: Severity::from_label(severity),
            locations,
            label: None,
        });
    }
    Ok(out)
}

fn dedup(locations: &mut Vec<Location>) {
    let mut seen = HashSet::new();
    locations.retain(|l| seen.insert(l.clone()));
}

/// Resolves every location to a function name present in `model` and fills
/// an empty narrative with the vulnerability type name.
pub fn normalize_finding(f: &Finding, model: &SourceModel) -> Result<Finding, IngestError> {
    let mut out = f.clone();
    if out.narrative.trim().is_empty() {
        match out.vuln_type.as_deref().map(str::trim).filter(|t| !t.is_empty()) {
            Some(t) => out.narrative = t.to_string(),
            None => return Err(IngestError::EmptyNarrative { id: f.id.clone() }),
        }
    }
    let mut locations = Vec::with_capacity(f.locations.len());
    for loc in &f.locations {
        let name = match loc {
            Location::Function(name) => {
                if !model.contains_function(name) {
                    return Err(IngestError::UnknownFunction {
                        id: f.id.clone(),
                        name: name.clone(),
                    });
                }
                name.clone()
            }
            Location::Line { file, line } => {
                resolve_line(model, file.as_deref(), *line).ok_or_else(|| unresolvable(f, loc))?
            }
            Location::Offset { file, offset } => {
                let (path, line) = model.line_of_offset(file.as_deref(), *offset).ok_or_else(|| unresolvable(f, loc))?;
                resolve_line(model, Some(&path), line).ok_or_else(|| unresolvable(f, loc))?
            }
        };
        locations.push(Location::Function(name));
    }
    dedup(&mut locations);
    out.locations = locations;
    Ok(out)
}

fn unresolvable(f: &Finding, loc: &Location) -> IngestError {
    IngestError::UnresolvableLocation {
        id: f.id.clone(),
        raw: loc.to_string(),
    }
}

/// Simple name when unambiguous in the catalog, otherwise `Contract.name`.
fn resolve_line(model: &SourceModel, file: Option<&Path>, line: usize) -> Option<String> {
    let fid = model.function_at_line(file, line)?;
    let def = &model.functions[fid];
    if model.lookup(&def.simple_name).len() == 1 {
        Some(def.simple_name.clone())
    } else {
        Some(def.qualified_name.clone())
    }
}
