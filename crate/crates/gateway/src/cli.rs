//! The `vsa` command-line tool.
//!
//! Exit codes: 0 on success, 1 when a run, validation or lint check comes out
//! negative, 2 for unreadable or malformed input.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use vsa_core::agents::AgentSetup;
use vsa_core::config::Config;
use vsa_core::engine::{read_event_log, write_event_log, EventLogError};
use vsa_core::handling::HandlingRecord;
use vsa_core::library::{load_template_file, Parallelism};
use vsa_core::remedy::{lint_remedy, parse_remedy_document};
use vsa_core::scenario::{run_scenario, ExpectationResult, RunConfig, RunResult, ScenarioScript};
use vsa_core::task::{deserialize_task, ValueMap};
use vsa_core::validator::{validate_plan, Outcome};
use vsa_core::{AgentRegistry, CaseLibrary, Predicate, SituationStatus, TaskStatus, WorldState};

use crate::api;
use crate::session::Session;

#[derive(Debug, Parser)]
#[command(name = "vsa", version, about = "Run, inspect and repair service-agent task plans")]
pub struct Cli {
    /// Machine-readable output; errors go to stderr as {code, message, path}.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON configuration file; `VSA_*` environment variables override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a scenario script and check its expectations.
    Run(RunArgs),
    /// Simulate a plan against a world state and report the verdict.
    Validate(ValidateArgs),
    /// Print the event sequence of a stored event log.
    Replay {
        log: PathBuf,
    },
    /// Inspect a case library directory.
    Library {
        /// Library directory (defaults to the configured one).
        #[arg(long, global = true)]
        library: Option<PathBuf>,
        #[command(subcommand)]
        action: LibraryCommand,
    },
    /// Static remedy checks.
    Remedy {
        #[command(subcommand)]
        action: RemedyCommand,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Serve the gateway API on this address while the run executes.
    #[arg(long, value_name = "ADDR")]
    pub serve: Option<String>,
    /// Take escalation remedies from the gateway instead of the script.
    #[arg(long)]
    pub interactive: bool,
    /// Recorded for reproducibility; the engine itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Situation similarity threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Persistent case library directory.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Write the execution events as JSON lines.
    #[arg(long, value_name = "FILE")]
    pub events: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    pub plan: PathBuf,
    #[arg(long)]
    pub state: PathBuf,
    /// JSON list of extra goal predicates.
    #[arg(long)]
    pub goals: Option<PathBuf>,
    /// Template file used to plan unplanned tasks.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum LibraryCommand {
    /// List stored cases.
    Ls,
    /// Print one case.
    Show { id: String },
    /// Rank situation cases against a context.
    Query {
        #[arg(long)]
        name: Option<String>,
        /// Context as a JSON object.
        #[arg(long, default_value = "{}")]
        context: String,
        #[arg(long, default_value_t = 0.0)]
        min_score: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum RemedyCommand {
    /// Parse and lint a remedy document without a plan.
    Check { file: PathBuf },
}

#[derive(Debug, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
    pub path: Option<String>,
    #[serde(skip)]
    pub exit: u8,
}

impl CliError {
    fn input(code: &str, message: impl Into<String>) -> Self {
        CliError { code: code.into(), message: message.into(), path: None, exit: 2 }
    }

    fn negative(code: &str, message: impl Into<String>) -> Self {
        CliError { code: code.into(), message: message.into(), path: None, exit: 1 }
    }

    fn at(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }
}

type CliResult = Result<(), CliError>;

pub fn main_with(cli: Cli) -> ExitCode {
    let json = cli.json;
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if json {
                eprintln!("{}", serde_json::to_string(&e).expect("error serializes"));
            } else {
                match &e.path {
                    Some(p) => eprintln!("error [{}] at {p}: {}", e.code, e.message),
                    None => eprintln!("error [{}]: {}", e.code, e.message),
                }
            }
            ExitCode::from(e.exit)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let config = Config::load(cli.config.as_deref())
        .and_then(Config::with_env)
        .map_err(|e| CliError::input("invalid_config", e.to_string()))?;
    let out = Output { json: cli.json };
    match cli.command {
        Command::Run(args) => run(&config, args, out),
        Command::Validate(args) => validate(&config, args, out),
        Command::Replay { log } => replay(&log, out),
        Command::Library { library, action } => library_command(&config, library, action, out),
        Command::Remedy { action: RemedyCommand::Check { file } } => remedy_check(&file, out),
    }
}

#[derive(Clone, Copy)]
struct Output {
    json: bool,
}

impl Output {
    fn emit(&self, value: &impl Serialize, human: impl FnOnce() -> String) {
        let text = if self.json {
            format!("{}\n", serde_json::to_string_pretty(value).expect("output serializes"))
        } else {
            human()
        };
        write_stdout(&text);
    }
}

/// Writes to stdout, ignoring a reader that closed the pipe early.
fn write_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::input("io_error", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input("invalid_json", format!("{}: {e}", path.display())).at(path.display().to_string()))
}

fn open_library(config: &Config, dir: Option<&Path>) -> Result<CaseLibrary, CliError> {
    let base = match dir {
        Some(d) => CaseLibrary::open(d).map_err(|e| CliError::input("library_error", e.to_string()))?,
        None => CaseLibrary::in_memory(),
    };
    let mode = if config.parallel { Parallelism::Parallel } else { Parallelism::Sequential };
    Ok(base.configured(mode, config.template_threshold))
}

#[derive(Serialize)]
struct SituationLine {
    id: String,
    name: String,
    status: SituationStatus,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    status: TaskStatus,
    passed: bool,
    seed: Option<u64>,
    events: usize,
    clock: u64,
    situations: Vec<SituationLine>,
    handling: &'a [HandlingRecord],
    cases_stored: usize,
    expectations: &'a [ExpectationResult],
    elapsed_ms: u128,
}

fn summarize<'a>(r: &'a RunResult, seed: Option<u64>) -> RunSummary<'a> {
    RunSummary {
        scenario: &r.scenario,
        status: r.status,
        passed: r.passed(),
        seed,
        events: r.events.len(),
        clock: r.state.clock,
        situations: r
            .situations
            .iter()
            .map(|s| SituationLine { id: s.id.clone(), name: s.name.clone(), status: s.status })
            .collect(),
        handling: &r.handling,
        cases_stored: r.cases_stored,
        expectations: &r.expectations,
        elapsed_ms: r.elapsed.as_millis(),
    }
}

fn render_run(s: &RunSummary) -> String {
    let mut out = format!("scenario {}: {} in {} ms\n", s.scenario, s.status.as_str(), s.elapsed_ms);
    for line in &s.situations {
        let h = s.handling.iter().find(|h| h.situation_id == line.id);
        let detail = h.map_or(String::new(), |h| {
            let scores: Vec<String> = h.probes.iter().map(|p| format!("{:.3}", p.score)).collect();
            format!(" probes [{}] escalations {}", scores.join(", "), h.escalations)
        });
        out.push_str(&format!("  {} {} {}{detail}\n", line.id, line.name, line.status.as_str()));
    }
    out.push_str(&format!("  cases stored: {}\n", s.cases_stored));
    for e in s.expectations {
        out.push_str(&format!("  {} {}: {}\n", if e.passed { "ok  " } else { "FAIL" }, e.name, e.detail));
    }
    out
}

fn run(config: &Config, args: RunArgs, out: Output) -> CliResult {
    let script = ScenarioScript::load(&args.scenario).map_err(|e| CliError::input("invalid_scenario", e.to_string()))?;
    let mut engine = config.engine_config();
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(CliError::input("invalid_argument", format!("threshold {t} outside [0, 1]")).at("--threshold"));
        }
        engine.threshold = t;
    }
    let dir = args.library.as_deref().or(config.library.as_deref());
    let run_config = RunConfig { engine, library: Some(open_library(config, dir)?), ..RunConfig::default() };

    let result = if args.serve.is_some() || args.interactive {
        let addr = args.serve.clone().unwrap_or_else(|| format!("{}:{}", config.host, config.port));
        serve_run(script, run_config, &addr, args.interactive)?
    } else {
        run_scenario(&script, run_config).map_err(|e| CliError::input("invalid_scenario", e.to_string()))?
    };

    if let Some(path) = &args.events {
        let file = File::create(path).map_err(|e| CliError::input("io_error", format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        write_event_log(&result.events, &mut w)
            .and_then(|()| w.flush())
            .map_err(|e| CliError::input("io_error", format!("{}: {e}", path.display())))?;
    }
    let summary = summarize(&result, args.seed);
    out.emit(&summary, || render_run(&summary));
    if result.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = result.expectations.iter().filter(|e| !e.passed).map(|e| e.name.as_str()).collect();
        Err(CliError::negative("expectations_failed", format!("failed: {}", failed.join(", "))))
    }
}

fn serve_run(script: ScenarioScript, config: RunConfig, addr: &str, interactive: bool) -> Result<RunResult, CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::input("runtime_error", e.to_string()))?;
    rt.block_on(async move {
        let listener = api::bind(addr).await.map_err(|e| CliError::input("address_in_use", format!("{addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::input("io_error", e.to_string()))?;
        eprintln!("listening on http://{local}");
        let session = Session::start(script, config, interactive)
            .map_err(|e| CliError::input("invalid_scenario", e.to_string()))?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let server = tokio::spawn(api::serve(listener, session.hub.clone(), async {
            let _ = stopped.await;
        }));
        let result = tokio::task::spawn_blocking(move || session.join())
            .await
            .map_err(|e| CliError::input("runtime_error", e.to_string()))?
            .map_err(|e| CliError::input("invalid_scenario", e.to_string()))?;
        if interactive {
            eprintln!("run finished ({}); serving until interrupted", result.status.as_str());
            let _ = tokio::signal::ctrl_c().await;
        }
        let _ = stop.send(());
        match server.await {
            Ok(Ok(())) => Ok(result),
            Ok(Err(e)) => Err(CliError::input("io_error", e.to_string())),
            Err(e) => Err(CliError::input("runtime_error", e.to_string())),
        }
    })
}

fn validate(config: &Config, args: ValidateArgs, out: Output) -> CliResult {
    let text = std::fs::read_to_string(&args.plan)
        .map_err(|e| CliError::input("io_error", format!("{}: {e}", args.plan.display())))?;
    let mut plan = deserialize_task(&text).map_err(|e| CliError::input("invalid_plan", e.to_string()))?;
    plan.relink();
    let state = WorldState::from_json(&read_json(&args.state)?).map_err(|e| CliError::input("invalid_state", e.to_string()))?;
    let goals: Vec<Predicate> = match &args.goals {
        None => Vec::new(),
        Some(p) => serde_json::from_value(read_json(p)?).map_err(|e| CliError::input("invalid_goals", e.to_string()))?,
    };
    let library = open_library(config, None)?;
    if let Some(path) = &args.templates {
        library.add_templates(load_template_file(path).map_err(|e| CliError::input("invalid_templates", e.to_string()))?);
    }
    let agents = AgentRegistry::with_defaults(&AgentSetup::default());
    let report = validate_plan(&plan, &state, &goals, &agents, Some(&library));
    out.emit(&report, || {
        let mut s = format!("verdict: {}\n", if report.passed() { "pass" } else { "fail" });
        for e in &report.trace {
            let mark = match e.outcome {
                Outcome::Fail => "FAIL",
                _ => "ok  ",
            };
            s.push_str(&format!("  {mark} {} {:?} {}\n", e.task_name, e.phase, e.detail));
        }
        if let Some(g) = &report.failed_goal {
            s.push_str(&format!("failed goal: {g}\n"));
        }
        s
    });
    if report.passed() {
        Ok(())
    } else {
        let goal = report.failed_goal.as_ref().map(|g| g.path.to_string());
        let err = CliError::negative("validation_failed", "plan failed validation");
        Err(match goal {
            Some(p) => err.at(p),
            None => err,
        })
    }
}

fn replay(log: &Path, out: Output) -> CliResult {
    let file = File::open(log).map_err(|e| CliError::input("io_error", format!("{}: {e}", log.display())))?;
    let events = read_event_log(BufReader::new(file)).map_err(|e| match e {
        EventLogError::Parse { line, source } => {
            CliError::input("invalid_event_log", source.to_string()).at(format!("line {line}"))
        }
        other => CliError::input("io_error", other.to_string()),
    })?;
    if let Some((i, w)) = events.windows(2).enumerate().find(|(_, w)| w[1].seq != w[0].seq + 1) {
        return Err(CliError::negative("event_log_gap", format!("seq {} follows {}", w[1].seq, w[0].seq))
            .at(format!("line {}", i + 2)));
    }
    let kinds: Vec<Value> = events.iter().map(|e| serde_json::to_value(e.kind).expect("kind serializes")).collect();
    out.emit(&json!({"count": events.len(), "kinds": kinds}), || {
        events
            .iter()
            .zip(&kinds)
            .map(|(e, k)| format!("{:>5} t={:<6} {:<18} {}\n", e.seq, e.time, k.as_str().unwrap_or_default(), e.task_id))
            .collect()
    });
    Ok(())
}

fn library_command(config: &Config, dir: Option<PathBuf>, action: LibraryCommand, out: Output) -> CliResult {
    let dir = dir
        .or_else(|| config.library.clone())
        .ok_or_else(|| CliError::input("no_library", "pass --library or set VSA_LIBRARY"))?;
    if !dir.is_dir() {
        return Err(CliError::input("no_library", format!("{} is not a directory", dir.display())));
    }
    let library = open_library(config, Some(&dir))?;
    match action {
        LibraryCommand::Ls => {
            let rows: Vec<Value> = library
                .records()
                .iter()
                .map(|r| json!({"id": r.id, "kind": r.kind, "name": r.name, "seq": r.seq}))
                .collect();
            out.emit(&json!({"cases": rows, "templates": library.templates().len()}), || {
                let mut s: String = library
                    .records()
                    .iter()
                    .map(|r| format!("{}  {:<9} {}\n", r.id, format!("{:?}", r.kind).to_lowercase(), r.name))
                    .collect();
                s.push_str(&format!("{} cases, {} templates\n", rows.len(), library.templates().len()));
                s
            });
            Ok(())
        }
        LibraryCommand::Show { id } => {
            let record = library.fetch(&id).ok_or_else(|| CliError::negative("not_found", format!("no case `{id}`")))?;
            write_stdout(&format!("{}\n", serde_json::to_string_pretty(&*record).expect("record serializes")));
            Ok(())
        }
        LibraryCommand::Query { name, context, min_score } => {
            let ctx: ValueMap = serde_json::from_str(&context)
                .map_err(|e| CliError::input("invalid_json", e.to_string()).at("--context"))?;
            let hits = library.query_situations(name.as_deref(), &ctx, min_score);
            let rows: Vec<Value> =
                hits.iter().map(|(r, s)| json!({"case_id": r.id, "name": r.name, "score": s.value})).collect();
            out.emit(&rows, || hits.iter().map(|(r, s)| format!("{:.3}  {}  {}\n", s.value, r.id, r.name)).collect());
            Ok(())
        }
    }
}

fn remedy_check(file: &Path, out: Output) -> CliResult {
    let doc = read_json(file)?;
    let remedy = parse_remedy_document(&doc).map_err(|e| CliError::input("schema_violation", e.message).at(e.path))?;
    let issues = lint_remedy(&remedy);
    if let Some(first) = issues.first() {
        if !out.json {
            for i in &issues {
                eprintln!("action {}: {}: {}", i.index, i.code, i.message);
            }
        }
        let exit = if issues.iter().any(|i| i.code == "parse_error") { 2 } else { 1 };
        let field = if first.code == "parse_error" { "/operation" } else { "" };
        return Err(CliError { code: first.code.clone(), message: first.message.clone(), path: None, exit }
            .at(format!("/{}{field}", first.index)));
    }
    out.emit(&json!({"ok": true, "actions": remedy.len()}), || format!("ok: {} actions\n", remedy.len()));
    Ok(())
}
