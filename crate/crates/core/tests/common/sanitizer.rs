//! Random draft/target pairs for the sanitizer and the properties it must keep.

use std::collections::BTreeSet;
use std::path::PathBuf;

use pocgen::gre::{sanitize_with, PoCDraft, Provenance, SanitizeTarget};
use pocgen::solidity::parser::parse_file;
use pocgen::solidity::{canonical_type, SolcVersion};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const ABI_V2: &str = "pragma experimental ABIEncoderV2;";

const TARGET_FNS: &[(&str, &[&str])] = &[
    ("transfer", &["address", "uint256"]),
    ("mint", &["address", "uint256"]),
    ("setOwner", &["address"]),
    ("withdraw", &[]),
    ("approve", &["address", "uint"]),
];

const HELPER_BODIES: &[&str] = &[
    "{}",
    "{\n        vm.prank(address(1));\n    }",
    "{\n        uint256 x = 1;\n        x += 2;\n    }",
    "{ emit log(\"hi\"); }",
];

#[derive(Debug, Clone)]
pub struct Case {
    pub target: SanitizeTarget,
    pub draft: String,
    /// Non-conflicting members that must survive byte for byte, in order.
    pub keep: Vec<String>,
    /// The draft already satisfies every rule.
    pub clean: bool,
}

#[derive(Debug, Clone)]
enum Member {
    Helper(usize, usize),
    Conflict(usize, bool),
    Overload(usize),
}

#[derive(Debug, Clone, Copy)]
enum ImportForm {
    Missing,
    Correct,
    Rooted,
    Deep,
    Named,
}

fn member_strategy() -> impl Strategy<Value = Member> {
    prop_oneof![
        3 => (0..100usize, 0..HELPER_BODIES.len()).prop_map(|(i, b)| Member::Helper(i, b)),
        2 => (0..TARGET_FNS.len(), any::<bool>()).prop_map(|(i, alias)| Member::Conflict(i, alias)),
        1 => (0..TARGET_FNS.len()).prop_map(Member::Overload),
    ]
}

fn version() -> impl Strategy<Value = SolcVersion> {
    prop_oneof![(6u32..=7, 0u32..13), (8u32..=8, 0u32..26)].prop_map(|(minor, patch)| SolcVersion::new(0, minor, patch))
}

pub fn case() -> impl Strategy<Value = Case> {
    (
        version(),
        any::<bool>(),
        prop::sample::subsequence((0..TARGET_FNS.len()).collect::<Vec<_>>(), 1..=TARGET_FNS.len()),
        prop::option::of(prop_oneof![Just("^0.8.13".to_string()), Just(">=0.6.0 <0.9.0".to_string()), version().prop_map(|v| v.to_string())]),
        any::<bool>(),
        prop_oneof![
            Just(ImportForm::Missing),
            Just(ImportForm::Correct),
            Just(ImportForm::Rooted),
            Just(ImportForm::Deep),
            Just(ImportForm::Named)
        ],
        any::<bool>(),
        prop::collection::vec(member_strategy(), 0..6),
    )
        .prop_map(|(compiler, caret, fns, draft_pragma, legacy_line, import, pasted, members)| build(compiler, caret, fns, draft_pragma, legacy_line, import, pasted, members))
}

#[allow(clippy::too_many_arguments)]
fn build(
    compiler: SolcVersion,
    caret: bool,
    fns: Vec<usize>,
    draft_pragma: Option<String>,
    legacy_line: bool,
    import: ImportForm,
    pasted: bool,
    members: Vec<Member>,
) -> Case {
    let pragma = if caret { format!("^{compiler}") } else { compiler.to_string() };
    let functions: BTreeSet<(String, Vec<String>)> = fns
        .iter()
        .map(|&i| (TARGET_FNS[i].0.to_string(), TARGET_FNS[i].1.iter().map(|t| canonical_type(t)).collect()))
        .collect();
    let target = SanitizeTarget {
        pragma: pragma.clone(),
        compiler,
        primary_file: PathBuf::from("src/Token.sol"),
        files: vec![PathBuf::from("src/Token.sol")],
        contracts: vec!["Token".into()],
        functions: functions.clone(),
    };

    let mut d = String::new();
    if let Some(p) = &draft_pragma {
        d.push_str(&format!("pragma solidity {p};\n"));
    }
    if legacy_line {
        d.push_str(ABI_V2);
        d.push('\n');
    }
    d.push_str("import \"forge-std/Test.sol\";\n");
    match import {
        ImportForm::Missing => {}
        ImportForm::Correct => d.push_str("import \"../src/Token.sol\";\n"),
        ImportForm::Rooted => d.push_str("import \"src/Token.sol\";\n"),
        ImportForm::Deep => d.push_str("import \"../../contracts/src/Token.sol\";\n"),
        ImportForm::Named => d.push_str("import {Token} from \"./Token.sol\";\n"),
    }
    d.push('\n');
    if pasted {
        d.push_str("contract Token {\n    uint256 public supply;\n    function mint(address to, uint256 v) public {}\n}\n\n");
    }
    let mut keep = Vec::new();
    let header = "contract PocF1 is Test {\n    Token token;\n";
    d.push_str(header);
    keep.push(header.to_string());
    let mut conflicted = false;
    let mut seen_helpers = BTreeSet::new();
    for m in members {
        match m {
            Member::Helper(i, b) => {
                if !seen_helpers.insert(i) {
                    continue;
                }
                let text = format!("    function helper{i}() internal {}\n", HELPER_BODIES[b]);
                d.push_str(&text);
                keep.push(text);
            }
            Member::Conflict(i, alias) => {
                let (name, params) = TARGET_FNS[i];
                let ps: Vec<String> = params
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let t = if alias && *t == "uint256" { "uint" } else { t };
                        format!("{t} a{k}")
                    })
                    .collect();
                let text = format!("    function {name}({}) public {{\n        revert();\n    }}\n", ps.join(", "));
                if functions.contains(&(name.to_string(), params.iter().map(|t| canonical_type(t)).collect())) {
                    conflicted = true;
                } else {
                    keep.push(text.clone());
                }
                d.push_str(&text);
            }
            Member::Overload(i) => {
                let text = format!("    function {}(bytes32 tag, bool flag) external {{}}\n", TARGET_FNS[i].0);
                d.push_str(&text);
                keep.push(text);
            }
        }
    }
    d.push_str("    function testExploit() public {\n        token = new Token();\n    }\n}\n");
    keep.push("    function testExploit() public {\n        token = new Token();\n    }\n}\n".into());

    let legacy = compiler.needs_legacy_abi_option();
    let clean = draft_pragma.as_deref() == Some(pragma.as_str())
        && matches!(import, ImportForm::Correct)
        && !pasted
        && !conflicted
        && legacy_line == legacy;
    Case { target, draft: d, keep, clean }
}

pub fn sanitize(text: &str, t: &SanitizeTarget) -> String {
    sanitize_with(&PoCDraft::new(text, 0, Provenance::Generated), t).expect("draft has a contract").text
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

pub fn idempotent(c: &Case) -> Result<(), TestCaseError> {
    let once = sanitize(&c.draft, &c.target);
    let twice = sanitize(&once, &c.target);
    prop_assert_eq!(once, twice);
    Ok(())
}

pub fn no_duplicate_definitions(c: &Case) -> Result<(), TestCaseError> {
    let out = sanitize(&c.draft, &c.target);
    let parsed = parse_file(&out).map_err(|e| fail(format!("output does not parse: {e:?}\n{out}")))?;
    for k in &parsed.contracts {
        prop_assert!(!c.target.contracts.contains(&k.name), "target contract {} kept\n{}", k.name, out);
        for f in &k.functions {
            if f.is_constructor {
                continue;
            }
            let key = (f.name.clone(), f.params.iter().map(|p| canonical_type(&p.ty)).collect::<Vec<_>>());
            prop_assert!(!c.target.functions.contains(&key), "conflicting {:?} kept\n{}", key, out);
        }
    }
    prop_assert!(parsed.contracts.iter().any(|k| k.name == "PocF1"));
    Ok(())
}

pub fn pragma_aligned(c: &Case) -> Result<(), TestCaseError> {
    let out = sanitize(&c.draft, &c.target);
    let lines: Vec<&str> = out.lines().filter(|l| l.trim_start().starts_with("pragma solidity")).collect();
    prop_assert_eq!(lines, vec![format!("pragma solidity {};", c.target.pragma)]);
    Ok(())
}

pub fn legacy_abi(c: &Case) -> Result<(), TestCaseError> {
    let out = sanitize(&c.draft, &c.target);
    let n = out.matches(ABI_V2).count();
    if c.target.compiler.needs_legacy_abi_option() {
        prop_assert_eq!(n, 1, "{}", out);
        let sol = out.find("pragma solidity").unwrap();
        prop_assert!(out.find(ABI_V2).unwrap() > sol);
    } else {
        prop_assert_eq!(n, c.draft.matches(ABI_V2).count());
    }
    Ok(())
}

pub fn preserves_the_rest(c: &Case) -> Result<(), TestCaseError> {
    let out = sanitize(&c.draft, &c.target);
    if c.clean {
        prop_assert_eq!(&out, &c.draft);
    }
    let mut from = 0;
    for chunk in &c.keep {
        match out[from..].find(chunk.as_str()) {
            Some(i) => from += i + chunk.len(),
            None => return Err(fail(format!("lost or reordered:\n{chunk}\nin\n{out}"))),
        }
    }
    prop_assert!(out.contains("import \"forge-std/Test.sol\";"));
    prop_assert_eq!(out.matches("Token.sol\"").count(), 1, "{}", out);
    prop_assert!(out.contains("\"../src/Token.sol\""));
    Ok(())
}
