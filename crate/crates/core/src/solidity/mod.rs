//! Solidity source modeling: a token-level parser that recovers contracts,
//! functions, modifiers, state variables and an intra-project call graph.

pub mod lexer;
pub mod model;
pub mod parser;
mod project;
pub mod version;

pub use model::*;
pub use project::{parse_project, parse_project_with, parse_sources, ModelError, ParseOptions, SourceModel};
pub use version::{SolcVersion, VersionReq};
