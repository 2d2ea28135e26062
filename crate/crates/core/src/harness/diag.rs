use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Compile,
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureItem {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

/// Outcome of one compile or test invocation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub phase: Phase,
    pub success: bool,
    pub raw: String,
    pub items: Vec<FailureItem>,
}

impl Diagnostics {
    /// Builds diagnostics from captured output, extracting failure items. A
    /// failure with no output gets a placeholder so the raw text is never empty.
    pub fn from_output(phase: Phase, success: bool, raw: impl Into<String>) -> Self {
        let mut raw = raw.into();
        if !success && raw.trim().is_empty() {
            raw = format!("{phase:?} step failed without output").to_lowercase();
        }
        let items = if success {
            Vec::new()
        } else {
            match phase {
                Phase::Compile => compile_items(&raw),
                Phase::Runtime => runtime_items(&raw),
            }
        };
        Diagnostics { phase, success, raw, items }
    }

    pub fn ok(phase: Phase, raw: impl Into<String>) -> Self {
        Self::from_output(phase, true, raw)
    }

    pub fn failed(phase: Phase, raw: impl Into<String>) -> Self {
        Self::from_output(phase, false, raw)
    }

    /// Text handed back to the model as feedback.
    pub fn render(&self) -> String {
        let phase = match self.phase {
            Phase::Compile => "compile",
            Phase::Runtime => "runtime",
        };
        let mut s = format!("{phase} {}\n", if self.success { "succeeded" } else { "failed" });
        for it in &self.items {
            match (&it.file, it.line) {
                (Some(f), Some(l)) => s.push_str(&format!("- {f}:{l}: {}\n", it.message)),
                _ => s.push_str(&format!("- {}\n", it.message)),
            }
        }
        s.push_str("--- output ---\n");
        s.push_str(&self.raw);
        if !self.raw.ends_with('\n') {
            s.push('\n');
        }
        s
    }
}

/// solc errors: a `Error...:` / `ParserError:` line followed by ` --> file:line:col:`.
fn compile_items(raw: &str) -> Vec<FailureItem> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut items = Vec::new();
    for (i, l) in lines.iter().enumerate() {
        let t = l.trim();
        let is_error = (t.starts_with("Error") || t.contains("Error (") || t.starts_with("ParserError") || t.starts_with("TypeError") || t.starts_with("DeclarationError"))
            && !t.starts_with("Error: Compiler run failed");
        if !is_error {
            continue;
        }
        let message = t.split_once(": ").map_or(t, |(_, m)| m).trim().to_string();
        let (file, line) = lines
            .iter()
            .skip(i + 1)
            .take(3)
            .find_map(|n| n.trim().strip_prefix("--> "))
            .map(parse_location)
            .unwrap_or((None, None));
        items.push(FailureItem { message, file, line });
    }
    items
}

fn parse_location(loc: &str) -> (Option<String>, Option<usize>) {
    let mut parts = loc.trim_end_matches(':').split(':');
    let file = parts.next().map(str::to_string);
    let line = parts.next().and_then(|l| l.parse().ok());
    (file, line)
}

/// forge test failures: `[FAIL. Reason: ...] name()` or `[FAIL: ...] name()`.
fn runtime_items(raw: &str) -> Vec<FailureItem> {
    let mut items: Vec<FailureItem> = raw
        .lines()
        .filter_map(|l| {
            let t = l.trim();
            let rest = t.strip_prefix("[FAIL")?;
            let (reason, test) = rest.split_once(']')?;
            let reason = reason.trim_start_matches(['.', ':']).trim();
            let reason = reason.strip_prefix("Reason:").unwrap_or(reason).trim();
            let test = test.trim().split(" (").next().unwrap_or("").trim();
            let message = match (reason.is_empty(), test.is_empty()) {
                (true, _) => format!("{test} failed"),
                (false, true) => reason.to_string(),
                (false, false) => format!("{test}: {reason}"),
            };
            Some(FailureItem { message, file: None, line: None })
        })
        .collect();
    if items.is_empty() {
        if let Some(l) = raw.lines().find(|l| l.contains("Error") || l.contains("error")) {
            items.push(FailureItem {
                message: l.trim().to_string(),
                file: None,
                line: None,
            });
        }
    }
    items
}

/// Lines of every `Logs:` section of `forge test -vvvv` output, in order,
/// with the section indentation removed.
pub fn extract_logs(output: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut inside = false;
    for line in output.lines() {
        if inside {
            if line.trim().is_empty() || !line.starts_with(' ') {
                inside = false;
            } else {
                out.push(line.strip_prefix("  ").unwrap_or(line).to_string());
                continue;
            }
        }
        if line.trim() == "Logs:" {
            inside = true;
        }
    }
    out
}

/// Both phases of one attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub ok_c: bool,
    pub ok_r: bool,
    pub compile: Diagnostics,
    /// Absent when compilation failed.
    pub runtime: Option<Diagnostics>,
    pub logs: Vec<String>,
}

impl ExecutionOutcome {
    pub fn succeeded(&self) -> bool {
        self.ok_c && self.ok_r
    }

    /// The diagnostics of the step that decided the outcome.
    pub fn deciding(&self) -> &Diagnostics {
        match (&self.runtime, self.ok_c) {
            (Some(r), true) => r,
            _ => &self.compile,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLC: &str = "Compiling 2 files with 0.8.19
Error: Compiler run failed:
Error (2314): Expected ';' but got '}'
  --> test/PocF1.t.sol:12:5:
   |
12 |     }
   |     ^
";

    #[test]
    fn solc_error_items() {
        let d = Diagnostics::failed(Phase::Compile, SOLC);
        assert_eq!(
            d.items,
            [FailureItem {
                message: "Expected ';' but got '}'".into(),
                file: Some("test/PocF1.t.sol".into()),
                line: Some(12),
            }]
        );
    }

    #[test]
    fn revert_reason_items() {
        let out = "Ran 1 test for test/PocF1.t.sol:PocF1\n[FAIL. Reason: revert: not owner] testExploit() (gas: 1234)\n";
        let d = Diagnostics::failed(Phase::Runtime, out);
        assert_eq!(d.items[0].message, "testExploit(): revert: not owner");
        let newer = "[FAIL: revert: not owner] testExploit() (gas: 1234)";
        assert_eq!(Diagnostics::failed(Phase::Runtime, newer).items[0].message, "testExploit(): revert: not owner");
    }

    #[test]
    fn failure_never_has_empty_output() {
        let d = Diagnostics::failed(Phase::Runtime, "");
        assert!(!d.raw.is_empty());
        assert!(Diagnostics::ok(Phase::Compile, "").raw.is_empty());
    }

    #[test]
    fn logs_are_taken_in_order_from_every_section() {
        let out = "[PASS] testA() (gas: 1)\nLogs:\n  SMARTPOC|PRE|q|1\n  SMARTPOC|TRIGGER|exploit|\n\nTraces:\n  [123] T::testA()\n[PASS] testB() (gas: 2)\nLogs:\n  second\nSuite result: ok\n";
        assert_eq!(extract_logs(out), ["SMARTPOC|PRE|q|1", "SMARTPOC|TRIGGER|exploit|", "second"]);
    }
}
