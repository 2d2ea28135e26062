//! Small on-disk project plus its bundle and workspace, for unit tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::bce::{assemble_bundle, expand_structural, BugContextBundle};
use crate::findings::{Finding, Severity};
use crate::harness::{init_workspace, Workspace};
use crate::llm::{LlmGateway, TranscriptBackend, TranscriptRecord};
use crate::solidity::parse_project;

pub const TOKEN: &str = "// SPDX-License-Identifier: MIT
pragma solidity ^0.8.0;

contract Token {
    address public owner;
    mapping(address => uint256) public balanceOf;

    modifier onlyOwner() {
        require(msg.sender == owner, \"not owner\");
        _;
    }

    constructor() {
        owner = msg.sender;
    }

    function transfer(address to, uint256 amount) public returns (bool) {
        _transfer(msg.sender, to, amount);
        return true;
    }

    function _transfer(address from, address to, uint256 amount) internal {
        balanceOf[from] -= amount;
        balanceOf[to] += amount;
    }

    function mint(address to, uint256 amount) public {
        balanceOf[to] += amount;
    }
}
";

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub finding: Finding,
    pub bundle: BugContextBundle,
    pub ws: Workspace,
}

impl Fixture {
    pub fn project_root(&self) -> PathBuf {
        self.dir.path().join("project")
    }

    pub fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }
}

pub fn finding(id: &str, narrative: &str) -> Finding {
    Finding {
        id: id.into(),
        tool: "fixture".into(),
        project_ref: PathBuf::from("project"),
        narrative: narrative.into(),
        vuln_type: Some("access-control".into()),
        severity: Severity::High,
        locations: vec![],
        label: None,
    }
}

pub fn fixture(key: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("project");
    fs::create_dir_all(root.join("src")).unwrap();
    fs::write(root.join("src/Token.sol"), TOKEN).unwrap();
    let model = parse_project(&root).unwrap();
    let f = finding("F1", "Anyone can mint tokens");
    let keys = model.lookup(key);
    let slice = expand_structural(&keys, &model.graph);
    let bundle = assemble_bundle(&f, &model, &keys, &slice, &[]).unwrap();
    let ws = init_workspace(&f, &bundle, &dir.path().join("out/F1/workspace"), &Default::default()).unwrap();
    Fixture {
        dir,
        finding: f,
        bundle,
        ws,
    }
}

pub fn gateway(records: Vec<TranscriptRecord>) -> (Arc<TranscriptBackend>, LlmGateway) {
    let b = Arc::new(TranscriptBackend::from_records(records).unwrap());
    (b.clone(), LlmGateway::new(b))
}

/// Every file under `dir` with its bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// A syntactically complete test draft, tagged so prompts can be traced.
pub fn draft(tag: &str) -> String {
    format!(
        "```solidity\npragma solidity ^0.8.0;\nimport \"forge-std/Test.sol\";\nimport \"../src/Token.sol\";\ncontract PocF1 is Test {{\n    // {tag}\n    function testExploit() public {{}}\n}}\n```\n"
    )
}
