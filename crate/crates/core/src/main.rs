use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use pocgen::bce::BceConfig;
use pocgen::findings::FindingFormat;
use pocgen::gre::EngineConfig;
use pocgen::harness::{Executor, FakeExecutor, ForgeExecutor};
use pocgen::llm::{HttpBackend, LlmBackend, LlmGateway, TranscriptBackend, DEFAULT_MAX_IN_FLIGHT};
use pocgen::pipeline::{self, RunConfig, DEFAULT_WORKERS};
use pocgen::report::render_summary;

#[derive(Parser)]
#[command(name = "pocgen", version, about = "Turn static-analysis findings into verified Foundry PoC tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Slice, generate, execute and verify every high-severity finding.
    Validate(ValidateArgs),
    /// Only build the bug-context bundles.
    Slice(SliceArgs),
    /// Rebuild report.json and summary.txt from a run directory.
    Report {
        /// Run directory written by `validate`.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Findings file.
    #[arg(long)]
    findings: PathBuf,
    /// native, slither or mythril.
    #[arg(long, default_value = "native")]
    format: FindingFormat,
    /// Directory that finding project paths are relative to.
    #[arg(long)]
    project: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WORKERS)]
    workers: usize,
    #[arg(long)]
    out: PathBuf,
    /// Replay LLM replies from a JSONL transcript instead of calling a model.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// OpenAI-compatible base URL; the key comes from POCGEN_API_KEY.
    #[arg(long, env = "POCGEN_BASE_URL")]
    llm_endpoint: Option<String>,
    #[arg(long, env = "POCGEN_MODEL")]
    llm_model: Option<String>,
    /// Seconds per LLM request.
    #[arg(long, default_value_t = 300)]
    llm_timeout: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_IN_FLIGHT)]
    max_in_flight: usize,
    #[arg(long, default_value_t = pocgen::llm::DEFAULT_TEMPERATURE)]
    temperature: f32,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Generate/repair rounds per loop.
    #[arg(long, default_value_t = 5)]
    budget: u32,
    /// Use a scripted executor instead of forge. Without a value, reads
    /// fake-executor.jsonl next to the transcript.
    #[arg(long, num_args = 0..=1)]
    fake_executor: Option<Option<PathBuf>>,
    #[arg(long, default_value = "forge")]
    forge: PathBuf,
    /// Seconds per forge invocation.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
    #[arg(long)]
    fork_url: Option<String>,
    /// Pin the fork to this block instead of the endpoint's head.
    #[arg(long, requires = "fork_url")]
    fork_block: Option<u64>,
    /// Keep verdicts already present in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct SliceArgs {
    #[command(flatten)]
    common: Common,
    /// Only this finding.
    #[arg(long)]
    id: Option<String>,
}

fn gateway(c: &Common) -> Result<(LlmGateway, serde_json::Value), String> {
    let backend: Arc<dyn LlmBackend> = match &c.transcript {
        Some(t) => Arc::new(TranscriptBackend::load(t)?),
        None => Arc::new(HttpBackend::from_env(c.llm_endpoint.as_deref(), c.llm_model.as_deref(), Duration::from_secs(c.llm_timeout))?),
    };
    let gw = LlmGateway::new(backend).with_max_in_flight(c.max_in_flight.max(1));
    let desc = serde_json::json!({ "llm": gw.backend_id() });
    Ok((gw, desc))
}

fn run_config(c: &Common) -> RunConfig {
    let mut cfg = RunConfig::new(&c.findings, &c.project, &c.out);
    cfg.format = c.format;
    cfg.workers = c.workers;
    cfg.engine.temperature = c.temperature;
    cfg.bce = BceConfig {
        temperature: c.temperature,
        ..BceConfig::default()
    };
    cfg
}

fn fake_script(arg: Option<&Path>, transcript: Option<&Path>) -> Result<PathBuf, String> {
    if let Some(p) = arg {
        return Ok(p.to_path_buf());
    }
    let dir = transcript.and_then(Path::parent).ok_or("--fake-executor without a path needs --transcript")?;
    Ok(dir.join("fake-executor.jsonl"))
}

fn validate(a: ValidateArgs) -> Result<ExitCode, String> {
    let (llm, mut desc) = gateway(&a.common)?;
    let executor: Box<dyn Executor> = match &a.fake_executor {
        Some(p) => {
            let script = fake_script(p.as_deref(), a.common.transcript.as_deref())?;
            desc["executor"] = serde_json::json!("fake");
            Box::new(FakeExecutor::load(&script)?)
        }
        None => {
            let forge = ForgeExecutor::new(&a.forge, Duration::from_secs(a.timeout));
            let version = forge.check().map_err(|e| format!("{e}\ninstall Foundry (https://getfoundry.sh) or pass --fake-executor"))?;
            desc["executor"] = serde_json::json!(version.trim());
            Box::new(forge)
        }
    };
    let mut cfg = run_config(&a.common);
    cfg.engine = EngineConfig {
        retry_budget: a.budget,
        timeout: Duration::from_secs(a.timeout),
        ..cfg.engine
    };
    cfg.fork_url = a.fork_url;
    cfg.fork_block = a.fork_block;
    cfg.resume = a.resume;
    cfg.backends = desc;
    let report = pipeline::validate(&cfg, &llm, executor.as_ref()).map_err(|e| e.to_string())?;
    print!("{}", render_summary(&report));
    Ok(ExitCode::SUCCESS)
}

fn slice(a: SliceArgs) -> Result<ExitCode, String> {
    let (llm, _) = gateway(&a.common)?;
    let cfg = run_config(&a.common);
    let results = pipeline::slice(&cfg, &llm, a.id.as_deref()).map_err(|e| e.to_string())?;
    let mut failed = false;
    for (id, r) in results {
        match r {
            Ok(p) => println!("{id}: {}", p.display()),
            Err(e) => {
                failed = true;
                println!("{id}: failed: {e}");
            }
        }
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Validate(a) => validate(a),
        Command::Slice(a) => slice(a),
        Command::Report { dir } => pipeline::report_from_dir(&dir).map(|r| {
            print!("{}", render_summary(&r));
            ExitCode::SUCCESS
        }).map_err(|e| e.to_string()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
