//! Per-finding Foundry workspaces and the compile/test executors that run
//! drafts inside them.

mod diag;
mod exec;
mod workspace;

use std::path::{Path, PathBuf};

pub use diag::{extract_logs, Diagnostics, ExecutionOutcome, FailureItem, Phase};
pub use exec::{forge_test_args, ExecContext, Executor, FakeCall, FakeExecutor, FakeRecord, ForgeExecutor, LoopKind, DEFAULT_TIMEOUT};
pub use workspace::{
    fetch_head_block, init_workspace, test_name_for, write_test, write_test_bytes, ForkConfig, FoundryConfig, Workspace,
    WorkspaceOptions,
};

use crate::gre::NonUtf8Draft;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("forge not found (`{0}`); install Foundry or run with the fake executor")]
    ToolchainMissing(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bundle source `{}` missing under {}", file.display(), project.display())]
    MissingSources { project: PathBuf, file: PathBuf },
    #[error(transparent)]
    NonUtf8(#[from] NonUtf8Draft),
    #[error("test configuration: {0}")]
    Script(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Problems with the machine or the test setup rather than the draft.
    pub fn is_environment(&self) -> bool {
        !matches!(self, HarnessError::NonUtf8(_))
    }
}
