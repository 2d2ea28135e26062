use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bce::BugContextBundle;
use crate::findings::Finding;
use crate::gre::PoCDraft;
use crate::solidity::SolcVersion;

/// Directories never copied into a workspace.
const SKIP: &[&str] = &["out", "cache", ".git", "test", "tests", "script", "broadcast", "artifacts"];
/// Directories linked rather than copied.
const LINK: &[&str] = &["lib", "node_modules"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundryConfig {
    pub solc_version: SolcVersion,
    pub remappings: Vec<String>,
    /// Compiler predates 0.8; tests need the experimental ABI encoder pragma.
    pub legacy_abi: bool,
    pub src_dir: String,
    pub libs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkConfig {
    pub url: String,
    pub block_number: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    pub root: PathBuf,
    pub finding_id: String,
    /// Contract name of the test, also its file stem.
    pub test_name: String,
    pub test_path: PathBuf,
    pub project_root: PathBuf,
    pub config: FoundryConfig,
    pub fork: Option<ForkConfig>,
}

#[derive(Debug, Clone, Default)]
pub struct WorkspaceOptions {
    pub fork_url: Option<String>,
    /// Use this block instead of asking the endpoint for its head.
    pub pinned_block: Option<u64>,
}

impl Workspace {
    /// `test/<Name>.t.sol` relative to the root.
    pub fn test_rel_path(&self) -> PathBuf {
        PathBuf::from("test").join(format!("{}.t.sol", self.test_name))
    }

    pub fn read_test(&self) -> Result<String, HarnessError> {
        fs::read_to_string(&self.test_path).map_err(|e| HarnessError::io(&self.test_path, e))
    }
}

/// `Poc` followed by the id's alphanumerics, so it is a valid identifier.
pub fn test_name_for(finding_id: &str) -> String {
    let mut s = String::from("Poc");
    let mut upper = true;
    for c in finding_id.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(if upper { c.to_ascii_uppercase() } else { c });
            upper = false;
        } else {
            upper = true;
        }
    }
    s
}

fn copy_tree(from: &Path, to: &Path, top: bool) -> io::Result<()> {
    fs::create_dir_all(to)?;
    let mut entries: Vec<_> = fs::read_dir(from)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = e.file_name();
        let name_s = name.to_string_lossy();
        let src = e.path();
        let dst = to.join(&name);
        let ty = e.file_type()?;
        if top && SKIP.contains(&name_s.as_ref()) {
            continue;
        }
        if top && ty.is_dir() && LINK.contains(&name_s.as_ref()) {
            link_dir(&src, &dst)?;
            continue;
        }
        if ty.is_dir() {
            copy_tree(&src, &dst, false)?;
        } else if ty.is_file() {
            fs::copy(&src, &dst)?;
        } else if ty.is_symlink() {
            // follow links so the workspace stands alone
            if src.is_dir() {
                copy_tree(&src, &dst, false)?;
            } else if src.is_file() {
                fs::copy(&src, &dst)?;
            }
        }
    }
    Ok(())
}

#[cfg(unix)]
fn link_dir(src: &Path, dst: &Path) -> io::Result<()> {
    std::os::unix::fs::symlink(fs::canonicalize(src)?, dst)
}

#[cfg(not(unix))]
fn link_dir(src: &Path, dst: &Path) -> io::Result<()> {
    copy_tree(src, dst, false)
}

fn toml_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn foundry_toml(cfg: &FoundryConfig, fork: Option<&ForkConfig>, finding_id: &str) -> String {
    let mut s = format!("# generated for finding {finding_id}\n[profile.default]\n");
    s.push_str(&format!("src = {}\n", toml_str(&cfg.src_dir)));
    s.push_str("test = \"test\"\nout = \"out\"\n");
    let libs: Vec<String> = cfg.libs.iter().map(|l| toml_str(l)).collect();
    s.push_str(&format!("libs = [{}]\n", libs.join(", ")));
    s.push_str(&format!("solc_version = \"{}\"\n", cfg.solc_version));
    s.push_str("auto_detect_solc = false\n");
    if !cfg.remappings.is_empty() {
        let r: Vec<String> = cfg.remappings.iter().map(|r| toml_str(r)).collect();
        s.push_str(&format!("remappings = [{}]\n", r.join(", ")));
    }
    if cfg.legacy_abi {
        s.push_str("# legacy compiler: tests declare `pragma experimental ABIEncoderV2;`\n");
    }
    if let Some(b) = fork.and_then(|f| f.block_number) {
        s.push_str(&format!("fork_block_number = {b}\n"));
    }
    s
}

/// Asks a JSON-RPC endpoint for its latest block number.
pub fn fetch_head_block(url: &str, timeout: Duration) -> Result<u64, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
    let body = serde_json::json!({"jsonrpc": "2.0", "id": 1, "method": "eth_blockNumber", "params": []});
    let v: serde_json::Value = agent
        .post(url)
        .send_json(body)
        .map_err(|e| e.to_string())?
        .body_mut()
        .read_json()
        .map_err(|e| e.to_string())?;
    let hex = v["result"].as_str().ok_or_else(|| format!("unexpected eth_blockNumber reply: {v}"))?;
    u64::from_str_radix(hex.trim_start_matches("0x"), 16).map_err(|e| format!("bad block number `{hex}`: {e}"))
}

/// Fresh per-finding copy of the project under `root` with a foundry.toml
/// matching the bundle's build metadata. An existing `root` is removed.
pub fn init_workspace(
    f: &Finding,
    bundle: &BugContextBundle,
    root: &Path,
    opts: &WorkspaceOptions,
) -> Result<Workspace, HarnessError> {
    let project = &bundle.project_root;
    if !project.join(&bundle.primary_file).is_file() {
        return Err(HarnessError::MissingSources {
            project: project.clone(),
            file: bundle.primary_file.clone(),
        });
    }
    if root.exists() {
        fs::remove_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
    }
    copy_tree(project, root, true).map_err(|e| HarnessError::io(root, e))?;
    fs::create_dir_all(root.join("test")).map_err(|e| HarnessError::io(root, e))?;

    let src_dir = bundle
        .primary_file
        .components()
        .next()
        .filter(|_| bundle.primary_file.components().count() > 1)
        .map_or_else(|| ".".to_string(), |c| c.as_os_str().to_string_lossy().into_owned());
    let libs = LINK.iter().filter(|l| root.join(l).exists()).map(|l| l.to_string()).collect();
    let meta = &bundle.build_metadata;
    let config = FoundryConfig {
        solc_version: meta.compiler,
        remappings: meta.remappings.clone(),
        legacy_abi: meta.compiler.needs_legacy_abi_option(),
        src_dir,
        libs,
    };
    let fork = match &opts.fork_url {
        None => None,
        Some(url) => {
            let block_number = match opts.pinned_block {
                Some(b) => Some(b),
                None => match fetch_head_block(url, Duration::from_secs(30)) {
                    Ok(b) => Some(b),
                    Err(e) => {
                        log::warn!("{}: head block unavailable ({e}); fork is unpinned", f.id);
                        None
                    }
                },
            };
            if let Some(b) = block_number {
                log::info!("{}: fork pinned at block {b}", f.id);
            }
            Some(ForkConfig { url: url.clone(), block_number })
        }
    };
    let toml = root.join("foundry.toml");
    fs::write(&toml, foundry_toml(&config, fork.as_ref(), &f.id)).map_err(|e| HarnessError::io(&toml, e))?;
    let test_name = test_name_for(&f.id);
    let test_path = root.join("test").join(format!("{test_name}.t.sol"));
    Ok(Workspace {
        root: root.to_path_buf(),
        finding_id: f.id.clone(),
        test_name,
        test_path,
        project_root: project.clone(),
        config,
        fork,
    })
}

/// Replaces the test file with exactly the draft text.
pub fn write_test(ws: &Workspace, script: &PoCDraft) -> Result<(), HarnessError> {
    fs::write(&ws.test_path, &script.text).map_err(|e| HarnessError::io(&ws.test_path, e))
}

/// Byte-level variant for drafts that did not come through the gateway.
pub fn write_test_bytes(ws: &Workspace, bytes: &[u8]) -> Result<(), HarnessError> {
    let draft = PoCDraft::from_bytes(bytes, 0, crate::gre::Provenance::Generated)?;
    write_test(ws, &draft)
}
