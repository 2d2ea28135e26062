use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::version::{SolcVersion, VersionReq};

/// Index into [`SourceModel::functions`].
pub type FunctionId = usize;
/// Index into [`SourceModel::modifiers`].
pub type ModifierId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    External,
    Internal,
    Private,
}

impl Visibility {
    pub fn from_keyword(word: &str) -> Option<Self> {
        match word {
            "public" => Some(Self::Public),
            "external" => Some(Self::External),
            "internal" => Some(Self::Internal),
            "private" => Some(Self::Private),
            _ => None,
        }
    }

    pub fn is_externally_visible(self) -> bool {
        matches!(self, Self::Public | Self::External)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    Contract,
    Abstract,
    Interface,
    Library,
}

/// Location of a definition. Lines are 1-based and inclusive; bytes are a
/// half-open range into the file text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: PathBuf,
    pub start_line: usize,
    pub end_line: usize,
    pub start_byte: usize,
    pub end_byte: usize,
}

impl SourceSpan {
    pub fn contains_line(&self, line: usize) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    /// Empty for file-level free functions.
    pub contract: String,
    pub simple_name: String,
    pub qualified_name: String,
    pub visibility: Visibility,
    pub mutability: Option<String>,
    pub is_underscored: bool,
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
    /// Names as written in the header, base-constructor calls excluded.
    pub modifiers: Vec<String>,
    pub span: SourceSpan,
    pub body_text: String,
    pub is_constructor_or_initializer: bool,
}

impl FunctionDef {
    /// `name(type,type)` with canonical elementary types.
    pub fn signature(&self) -> String {
        let tys: Vec<String> = self.params.iter().map(|p| canonical_type(&p.ty)).collect();
        format!("{}({})", self.simple_name, tys.join(","))
    }

    /// Unique catalog key, `Contract.name(type,type)`.
    pub fn key(&self) -> String {
        if self.contract.is_empty() {
            self.signature()
        } else {
            format!("{}.{}", self.contract, self.signature())
        }
    }

    /// Name plus parameter list as written, used when showing candidates to a model.
    pub fn display_signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| if p.name.is_empty() { p.ty.clone() } else { format!("{} {}", p.ty, p.name) })
            .collect();
        format!("{}({})", self.simple_name, params.join(", "))
    }

    pub fn is_constructor(&self) -> bool {
        self.simple_name == "constructor"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModifierDef {
    pub contract: String,
    pub name: String,
    pub qualified_name: String,
    pub params: Vec<Param>,
    pub span: SourceSpan,
    pub body_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVar {
    pub name: String,
    pub ty: String,
    pub visibility: Visibility,
    pub constant: bool,
    pub decl_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractDef {
    pub name: String,
    pub kind: ContractKind,
    pub bases: Vec<String>,
    pub file: PathBuf,
    pub span: SourceSpan,
    pub state_vars: Vec<StateVar>,
    pub structs: Vec<String>,
    pub enums: Vec<String>,
    pub using_libraries: Vec<String>,
    pub functions: Vec<FunctionId>,
    pub modifiers: Vec<ModifierId>,
}

impl ContractDef {
    /// `contract Name is A, B` header line used in bundle outlines.
    pub fn header(&self) -> String {
        let kw = match self.kind {
            ContractKind::Contract => "contract",
            ContractKind::Abstract => "abstract contract",
            ContractKind::Interface => "interface",
            ContractKind::Library => "library",
        };
        if self.bases.is_empty() {
            format!("{kw} {}", self.name)
        } else {
            format!("{kw} {} is {}", self.name, self.bases.join(", "))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    /// Relative to the project root.
    pub path: PathBuf,
    pub text: String,
    pub pragma: Option<VersionReq>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallableKind {
    Function,
    Getter,
}

/// One entry of a contract's public ABI.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallableDescriptor {
    pub contract: String,
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub kind: CallableKind,
    pub mutability: Option<String>,
}

impl CallableDescriptor {
    /// `name(type,type)` as written in source.
    pub fn signature(&self) -> String {
        format!("{}({})", self.name, self.inputs.join(","))
    }

    /// Signature with canonical elementary types, for matching.
    pub fn canonical_signature(&self) -> String {
        let tys: Vec<String> = self.inputs.iter().map(|t| canonical_type(t)).collect();
        format!("{}({})", self.name, tys.join(","))
    }
}

impl fmt::Display for CallableDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.contract, self.signature())?;
        if !self.outputs.is_empty() {
            write!(f, " returns ({})", self.outputs.join(","))?;
        }
        if let Some(m) = &self.mutability {
            write!(f, " {m}")?;
        }
        Ok(())
    }
}

/// Strips data locations and whitespace and expands `uint`/`int`/`byte`
/// aliases so textual signatures compare the way the compiler would.
pub fn canonical_type(ty: &str) -> String {
    let words: Vec<&str> = ty
        .split_whitespace()
        .filter(|w| !matches!(*w, "memory" | "storage" | "calldata" | "payable"))
        .collect();
    let joined = words.join(" ");
    let mut out = String::with_capacity(joined.len() + 3);
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        match word.as_str() {
            "uint" => out.push_str("uint256"),
            "int" => out.push_str("int256"),
            "byte" => out.push_str("bytes1"),
            w => out.push_str(w),
        }
        word.clear();
    };
    for c in joined.chars() {
        if c.is_alphanumeric() || c == '_' || c == '$' {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            if !c.is_whitespace() {
                out.push(c);
            }
        }
    }
    flush(&mut word, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub underscored: bool,
    /// Resolved modifier attachments, in header order.
    pub modifiers: Vec<ModifierId>,
}

/// Directed caller→callee graph over the function catalog. Node `i` is
/// function `i`; edges are kept sorted so iteration order is stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    nodes: Vec<GraphNode>,
    edges: BTreeSet<(FunctionId, FunctionId)>,
    #[serde(skip)]
    succ: Vec<Vec<FunctionId>>,
    #[serde(skip)]
    pred: Vec<Vec<FunctionId>>,
}

impl CallGraph {
    /// Edges whose endpoints are out of range are dropped.
    pub fn new(nodes: Vec<GraphNode>, edges: impl IntoIterator<Item = (FunctionId, FunctionId)>) -> Self {
        let n = nodes.len();
        let edges: BTreeSet<_> = edges.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        let mut g = CallGraph {
            nodes,
            edges,
            succ: Vec::new(),
            pred: Vec::new(),
        };
        g.reindex();
        g
    }

    fn reindex(&mut self) {
        let n = self.nodes.len();
        self.succ = vec![Vec::new(); n];
        self.pred = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            self.succ[a].push(b);
            self.pred[b].push(a);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: FunctionId) -> &GraphNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (FunctionId, FunctionId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: FunctionId, to: FunctionId) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn callees(&self, id: FunctionId) -> &[FunctionId] {
        &self.succ[id]
    }

    pub fn callers(&self, id: FunctionId) -> &[FunctionId] {
        &self.pred[id]
    }

    pub(crate) fn add_edges(&mut self, extra: impl IntoIterator<Item = (FunctionId, FunctionId)>) -> usize {
        let n = self.nodes.len();
        let before = self.edges.len();
        self.edges.extend(extra.into_iter().filter(|&(a, b)| a < n && b < n));
        self.reindex();
        self.edges.len() - before
    }
}

/// Compiler and import configuration needed to rebuild the project.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildMetadata {
    pub compiler: SolcVersion,
    pub pragma: VersionReq,
    pub remappings: Vec<String>,
}
