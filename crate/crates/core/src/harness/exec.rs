use std::collections::HashMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::diag::{extract_logs, Diagnostics, ExecutionOutcome, Phase};
use super::workspace::Workspace;
use super::HarnessError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

/// Which engine loop an execution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopKind {
    /// Plain PoC generation.
    Gre,
    /// Differential instrumentation.
    Dv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecContext<'a> {
    pub finding_id: &'a str,
    pub loop_kind: LoopKind,
    pub attempt: u32,
}

pub trait Executor: Send + Sync {
    fn compile(&self, ws: &Workspace, ctx: &ExecContext<'_>) -> Result<Diagnostics, HarnessError>;

    /// Runtime diagnostics plus the log lines the test emitted.
    fn run_tests(&self, ws: &Workspace, ctx: &ExecContext<'_>) -> Result<(Diagnostics, Vec<String>), HarnessError>;

    /// Compile, then run only if compilation succeeded.
    fn execute(&self, ws: &Workspace, ctx: &ExecContext<'_>) -> Result<ExecutionOutcome, HarnessError> {
        let compile = self.compile(ws, ctx)?;
        if !compile.success {
            return Ok(ExecutionOutcome {
                ok_c: false,
                ok_r: false,
                compile,
                runtime: None,
                logs: Vec::new(),
            });
        }
        let (runtime, logs) = self.run_tests(ws, ctx)?;
        Ok(ExecutionOutcome {
            ok_c: true,
            ok_r: runtime.success,
            compile,
            runtime: Some(runtime),
            logs,
        })
    }
}

/// Runs the real `forge` binary.
#[derive(Debug, Clone)]
pub struct ForgeExecutor {
    pub forge: PathBuf,
    pub timeout: Duration,
}

impl Default for ForgeExecutor {
    fn default() -> Self {
        ForgeExecutor {
            forge: PathBuf::from("forge"),
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

/// Argument vector for the test step.
pub fn forge_test_args(fork_url: Option<&str>) -> Vec<String> {
    let mut args = vec!["test".to_string(), "-vvvv".to_string()];
    if let Some(u) = fork_url {
        args.push("--fork-url".into());
        args.push(u.into());
    }
    args
}

struct RunResult {
    success: bool,
    output: String,
    timed_out: bool,
}

impl ForgeExecutor {
    pub fn new(forge: impl Into<PathBuf>, timeout: Duration) -> Self {
        ForgeExecutor {
            forge: forge.into(),
            timeout,
        }
    }

    /// `forge --version`, failing with [`HarnessError::ToolchainMissing`].
    pub fn check(&self) -> Result<String, HarnessError> {
        let r = self.run(Path::new("."), &["--version".to_string()])?;
        Ok(r.output.trim().to_string())
    }

    fn run(&self, cwd: &Path, args: &[String]) -> Result<RunResult, HarnessError> {
        let mut child = Command::new(&self.forge)
            .args(args)
            .current_dir(cwd)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => HarnessError::ToolchainMissing(self.forge.display().to_string()),
                _ => HarnessError::io(&self.forge, e),
            })?;
        // grandchildren may keep the pipes open after a kill, so reads are
        // collected through channels with a bounded wait
        let drain = |mut r: Box<dyn Read + Send>| {
            let (tx, rx) = std::sync::mpsc::channel();
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                let _ = r.read_to_end(&mut buf);
                let _ = tx.send(String::from_utf8_lossy(&buf).into_owned());
            });
            rx
        };
        let out = drain(Box::new(child.stdout.take().expect("piped")));
        let err = drain(Box::new(child.stderr.take().expect("piped")));
        let start = Instant::now();
        let (status, timed_out) = loop {
            if let Some(s) = child.try_wait().map_err(|e| HarnessError::io(cwd, e))? {
                break (Some(s), false);
            }
            if start.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                break (None, true);
            }
            std::thread::sleep(Duration::from_millis(50));
        };
        let deadline = Instant::now() + if timed_out { Duration::from_millis(500) } else { Duration::from_secs(3600) };
        let left = || deadline.saturating_duration_since(Instant::now());
        let mut output = out.recv_timeout(left()).unwrap_or_default();
        let stderr = err.recv_timeout(left()).unwrap_or_default();
        if !stderr.is_empty() {
            if !output.is_empty() && !output.ends_with('\n') {
                output.push('\n');
            }
            output.push_str(&stderr);
        }
        if timed_out {
            output.push_str(&format!("\ntimed out after {} s\n", self.timeout.as_secs()));
        }
        Ok(RunResult {
            success: status.is_some_and(|s| s.success()),
            output,
            timed_out,
        })
    }
}

impl Executor for ForgeExecutor {
    fn compile(&self, ws: &Workspace, _: &ExecContext<'_>) -> Result<Diagnostics, HarnessError> {
        let r = self.run(&ws.root, &["build".to_string()])?;
        Ok(Diagnostics::from_output(Phase::Compile, r.success, r.output))
    }

    fn run_tests(&self, ws: &Workspace, _: &ExecContext<'_>) -> Result<(Diagnostics, Vec<String>), HarnessError> {
        let args = forge_test_args(ws.fork.as_ref().map(|f| f.url.as_str()));
        let r = self.run(&ws.root, &args)?;
        let logs = extract_logs(&r.output);
        let mut d = Diagnostics::from_output(Phase::Runtime, r.success && !r.timed_out, r.output);
        if r.timed_out {
            d.items.insert(
                0,
                super::diag::FailureItem {
                    message: format!("test run timed out after {} s", self.timeout.as_secs()),
                    file: None,
                    line: None,
                },
            );
        }
        Ok((d, logs))
    }
}

/// One scripted execution. `finding` may be `"*"`; `loop` and `attempt`
/// may be omitted to match any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FakeRecord {
    #[serde(default = "wildcard")]
    pub finding: String,
    #[serde(default, rename = "loop", skip_serializing_if = "Option::is_none")]
    pub loop_kind: Option<LoopKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
    pub compile_ok: bool,
    #[serde(default)]
    pub compile_output: String,
    #[serde(default)]
    pub test_ok: bool,
    #[serde(default)]
    pub test_output: String,
    #[serde(default)]
    pub logs: Vec<String>,
    #[serde(default)]
    pub delay_ms: u64,
    /// Fault injection: the call panics with this message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panic: Option<String>,
}

fn wildcard() -> String {
    "*".into()
}

impl FakeRecord {
    pub fn new(finding: &str, loop_kind: Option<LoopKind>, attempt: Option<u32>) -> Self {
        FakeRecord {
            finding: finding.into(),
            loop_kind,
            attempt,
            compile_ok: true,
            compile_output: String::new(),
            test_ok: true,
            test_output: String::new(),
            logs: Vec::new(),
            delay_ms: 0,
            panic: None,
        }
    }

    pub fn compile_fails(mut self, output: &str) -> Self {
        self.compile_ok = false;
        self.compile_output = output.into();
        self
    }

    pub fn test_fails(mut self, output: &str) -> Self {
        self.test_ok = false;
        self.test_output = output.into();
        self
    }

    pub fn with_logs<S: Into<String>>(mut self, logs: impl IntoIterator<Item = S>) -> Self {
        self.logs = logs.into_iter().map(Into::into).collect();
        self
    }
}

/// What the fake saw for one call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FakeCall {
    pub finding_id: String,
    pub loop_kind: LoopKind,
    pub attempt: u32,
    pub phase: Phase,
    /// Test file content at the time of the call.
    pub test_text: String,
    pub workspace: PathBuf,
}

/// Scripted stand-in for `forge`, keyed like the LLM transcript.
#[derive(Debug)]
pub struct FakeExecutor {
    records: HashMap<(String, Option<LoopKind>, Option<u32>), FakeRecord>,
    calls: Mutex<Vec<FakeCall>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl FakeExecutor {
    pub fn new(records: Vec<FakeRecord>) -> Result<Self, String> {
        let mut map = HashMap::new();
        for r in records {
            let key = (r.finding.clone(), r.loop_kind, r.attempt);
            if map.insert(key, r.clone()).is_some() {
                return Err(format!("duplicate fake record for {}/{:?}/{:?}", r.finding, r.loop_kind, r.attempt));
            }
        }
        Ok(FakeExecutor {
            records: map,
            calls: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with("//") {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1))?);
        }
        Self::new(records)
    }

    pub fn calls(&self) -> Vec<FakeCall> {
        self.calls.lock().clone()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn lookup(&self, ctx: &ExecContext<'_>) -> Result<&FakeRecord, HarnessError> {
        let f = ctx.finding_id.to_string();
        let keys = [
            (f.clone(), Some(ctx.loop_kind), Some(ctx.attempt)),
            (f.clone(), Some(ctx.loop_kind), None),
            (f.clone(), None, Some(ctx.attempt)),
            (f, None, None),
            ("*".into(), Some(ctx.loop_kind), Some(ctx.attempt)),
            ("*".into(), Some(ctx.loop_kind), None),
            ("*".into(), None, Some(ctx.attempt)),
            ("*".into(), None, None),
        ];
        keys.iter().find_map(|k| self.records.get(k)).ok_or_else(|| {
            HarnessError::Script(format!(
                "no fake execution scripted for finding {} loop {:?} attempt {}",
                ctx.finding_id, ctx.loop_kind, ctx.attempt
            ))
        })
    }

    fn enter(&self, ws: &Workspace, ctx: &ExecContext<'_>, phase: Phase) -> Result<&FakeRecord, HarnessError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let rec = self.lookup(ctx);
        let test_text = std::fs::read_to_string(&ws.test_path).unwrap_or_default();
        self.calls.lock().push(FakeCall {
            finding_id: ctx.finding_id.to_string(),
            loop_kind: ctx.loop_kind,
            attempt: ctx.attempt,
            phase,
            test_text,
            workspace: ws.root.clone(),
        });
        if let Ok(r) = &rec {
            if r.delay_ms > 0 {
                std::thread::sleep(Duration::from_millis(r.delay_ms));
            }
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if let Ok(FakeRecord { panic: Some(msg), .. }) = rec {
            panic!("injected fault: {msg}");
        }
        rec
    }
}

impl Executor for FakeExecutor {
    fn compile(&self, ws: &Workspace, ctx: &ExecContext<'_>) -> Result<Diagnostics, HarnessError> {
        let r = self.enter(ws, ctx, Phase::Compile)?;
        Ok(Diagnostics::from_output(Phase::Compile, r.compile_ok, r.compile_output.clone()))
    }

    fn run_tests(&self, ws: &Workspace, ctx: &ExecContext<'_>) -> Result<(Diagnostics, Vec<String>), HarnessError> {
        let r = self.enter(ws, ctx, Phase::Runtime)?;
        Ok((Diagnostics::from_output(Phase::Runtime, r.test_ok, r.test_output.clone()), r.logs.clone()))
    }
}
