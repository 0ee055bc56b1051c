//! Scripted scenario runs.
//!
//! A scenario bundles a trip order, templates, seeded situation cases, agent
//! parameters, a timeline of triggers and the expected outcome. Running one
//! is deterministic: the same script always yields the same event log.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{AgentRegistry, AgentSetup, CannedResponse};
use crate::engine::{Directive, Engine, EngineConfig, EngineObserver, EventKind, ExecutionEvent, RaiseSpec};
use crate::handling::{EscalationHandler, EscalationPayload, HandlingRecord, Submission};
use crate::library::{load_template_file, CaseKind, CaseLibrary, LibraryError};
use crate::remedy::RemedyAction;
use crate::situation::{Situation, SituationStatus};
use crate::task::{Task, TaskStatus};
use crate::world::{Scalar, WorldError, WorldState};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error("initial state: {0}")]
    State(#[from] WorldError),
    #[error("scripted response: {0}")]
    Agent(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TriggerWhen {
    /// Right after the n-th action result.
    Step { n: u64 },
    /// On the n-th event of a kind, optionally for one task name.
    Event {
        event: EventKind,
        #[serde(default)]
        task_name: Option<String>,
        #[serde(default = "one")]
        occurrence: usize,
    },
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RespondSpec {
    pub reference: String,
    pub responses: Vec<CannedResponse>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub on: TriggerWhen,
    #[serde(default)]
    pub raise: Option<RaiseSpec>,
    #[serde(default)]
    pub respond: Option<RespondSpec>,
}

/// A human remedy delivered to the first escalation of a situation class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedSubmission {
    pub situation: String,
    pub remedy: Vec<RemedyAction>,
    #[serde(default)]
    pub after_seconds: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildExpectation {
    pub name: String,
    #[serde(default)]
    pub status: Option<TaskStatus>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expectations {
    pub root_status: Option<TaskStatus>,
    pub situations_resolved: Option<usize>,
    pub escalations_at_most: Option<usize>,
    pub cases_stored: Option<usize>,
    pub facts: BTreeMap<String, Scalar>,
    /// Task name whose children are checked against `children`.
    pub parent: Option<String>,
    pub children: Vec<ChildExpectation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub order: Task,
    #[serde(default)]
    pub initial_state: Value,
    #[serde(default)]
    pub templates: Vec<Task>,
    /// Template files relative to the script.
    #[serde(default)]
    pub template_files: Vec<PathBuf>,
    #[serde(default)]
    pub situation_cases: Vec<Situation>,
    /// Situation case files (a JSON array each) relative to the script.
    #[serde(default)]
    pub case_files: Vec<PathBuf>,
    #[serde(default)]
    pub agents: AgentSetup,
    #[serde(default)]
    pub responses: BTreeMap<String, Vec<CannedResponse>>,
    #[serde(default)]
    pub simulation_results: BTreeMap<String, Value>,
    #[serde(default)]
    pub timeline: Vec<Trigger>,
    #[serde(default)]
    pub submissions: Vec<ScriptedSubmission>,
    #[serde(default)]
    pub expect: Expectations,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
        path: path.into(),
        message: format!("{}: {}", e.path(), e.inner()),
    })
}

impl ScenarioScript {
    /// Reads a script and inlines its template and case files.
    pub fn load(path: &Path) -> Result<ScenarioScript, ScenarioError> {
        let mut script: ScenarioScript = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for file in std::mem::take(&mut script.template_files) {
            script.templates.extend(load_template_file(&base.join(file))?);
        }
        for file in std::mem::take(&mut script.case_files) {
            let cases: Vec<Situation> = read_json(&base.join(file))?;
            script.situation_cases.extend(cases);
        }
        Ok(script)
    }
}

struct Timeline {
    triggers: Vec<Trigger>,
    seen: Vec<usize>,
    fired: Vec<bool>,
}

impl EngineObserver for Timeline {
    fn on_event(&mut self, event: &ExecutionEvent, engine: &Engine) -> Vec<Directive> {
        let mut out = Vec::new();
        for (i, trigger) in self.triggers.iter().enumerate() {
            if self.fired[i] {
                continue;
            }
            let fire = match &trigger.on {
                TriggerWhen::Step { n } => event.kind == EventKind::ActionResult && engine.steps() == *n,
                TriggerWhen::Event { event: kind, task_name, occurrence } => {
                    let name_ok = task_name
                        .as_deref()
                        .is_none_or(|n| event.detail.get("task_name").and_then(Value::as_str) == Some(n));
                    if event.kind == *kind && name_ok {
                        self.seen[i] += 1;
                        self.seen[i] == *occurrence
                    } else {
                        false
                    }
                }
            };
            if !fire {
                continue;
            }
            self.fired[i] = true;
            if let Some(r) = &trigger.respond {
                out.push(Directive::Respond { reference: r.reference.clone(), responses: r.responses.clone() });
            }
            if let Some(r) = &trigger.raise {
                out.push(Directive::Raise(r.clone()));
            }
        }
        out
    }
}

/// Answers escalations from the script. A submission slower than the
/// timeout counts as no answer.
#[derive(Debug, Default)]
pub struct ScriptedHandler {
    pending: Vec<ScriptedSubmission>,
}

impl ScriptedHandler {
    pub fn new(submissions: Vec<ScriptedSubmission>) -> Self {
        ScriptedHandler { pending: submissions }
    }
}

impl EscalationHandler for ScriptedHandler {
    fn await_remedy(&mut self, payload: &EscalationPayload, timeout_secs: u64) -> Option<Submission> {
        let i = self.pending.iter().position(|s| s.situation == payload.situation.name)?;
        let sub = self.pending.remove(i);
        (sub.after_seconds <= timeout_secs).then(|| Submission {
            situation_id: payload.situation.id.clone(),
            remedy: sub.remedy,
            waited: sub.after_seconds,
        })
    }
}

#[derive(Default)]
pub struct RunConfig {
    pub engine: EngineConfig,
    /// Library to run against; a fresh in-memory one when absent.
    pub library: Option<CaseLibrary>,
    pub observers: Vec<Box<dyn EngineObserver>>,
    /// Replaces the scripted submissions.
    pub handler: Option<Box<dyn EscalationHandler>>,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub scenario: String,
    pub status: TaskStatus,
    pub plan: Task,
    pub state: WorldState,
    pub events: Vec<ExecutionEvent>,
    pub situations: Vec<Situation>,
    pub handling: Vec<HandlingRecord>,
    pub cases_stored: usize,
    pub expectations: Vec<ExpectationResult>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }

    pub fn resolved(&self) -> usize {
        self.situations.iter().filter(|s| s.status == SituationStatus::Resolved).count()
    }

    pub fn escalations(&self) -> usize {
        self.handling.iter().map(|h| h.escalations).sum()
    }
}

/// Builds the engine for a script without running it.
pub fn prepare(script: &ScenarioScript, config: RunConfig) -> Result<Engine, ScenarioError> {
    let library = config.library.unwrap_or_else(CaseLibrary::in_memory);
    library.add_templates(script.templates.iter().cloned());
    if library.count(CaseKind::Situation) == 0 {
        for case in &script.situation_cases {
            library.store_situation(case)?;
        }
    }
    let mut agents = AgentRegistry::with_defaults(&script.agents);
    for (reference, responses) in &script.responses {
        agents
            .push_responses(reference, responses.iter().cloned())
            .map_err(|e| ScenarioError::Agent(e.to_string()))?;
    }
    for (reference, value) in &script.simulation_results {
        agents.set_simulation_result(reference, value.clone());
    }
    let state = if script.initial_state.is_null() {
        WorldState::new()
    } else {
        WorldState::from_json(&script.initial_state)?
    };
    let mut order = script.order.clone();
    order.relink();
    let mut engine = Engine::new(order, state, library, agents, config.engine);
    engine.add_observer(Box::new(Timeline {
        triggers: script.timeline.clone(),
        seen: vec![0; script.timeline.len()],
        fired: vec![false; script.timeline.len()],
    }));
    for o in config.observers {
        engine.add_observer(o);
    }
    engine.set_handler(config.handler.unwrap_or_else(|| Box::new(ScriptedHandler::new(script.submissions.clone()))));
    Ok(engine)
}

pub fn run_scenario(script: &ScenarioScript, config: RunConfig) -> Result<RunResult, ScenarioError> {
    let started = Instant::now();
    let mut engine = prepare(script, config)?;
    let status = engine.run();
    let cases_stored = engine.handling_records().iter().filter(|h| h.case_id.is_some()).count();
    let mut result = RunResult {
        scenario: script.name.clone(),
        status,
        plan: engine.plan().clone(),
        state: engine.state().clone(),
        events: engine.events().to_vec(),
        situations: engine.situations().to_vec(),
        handling: engine.handling_records().to_vec(),
        cases_stored,
        expectations: Vec::new(),
        elapsed: Duration::ZERO,
    };
    result.expectations = check_expectations(&script.expect, &result);
    result.elapsed = started.elapsed();
    Ok(result)
}

fn expect(name: &str, passed: bool, detail: String) -> ExpectationResult {
    ExpectationResult { name: name.into(), passed, detail }
}

pub fn check_expectations(exp: &Expectations, run: &RunResult) -> Vec<ExpectationResult> {
    let mut out = Vec::new();
    if let Some(s) = exp.root_status {
        out.push(expect("root_status", run.status == s, format!("expected {s}, got {}", run.status)));
    }
    if let Some(n) = exp.situations_resolved {
        let got = run.resolved();
        out.push(expect("situations_resolved", got == n, format!("expected {n}, got {got}")));
    }
    if let Some(n) = exp.escalations_at_most {
        let got = run.escalations();
        out.push(expect("escalations_at_most", got <= n, format!("at most {n}, got {got}")));
    }
    if let Some(n) = exp.cases_stored {
        out.push(expect("cases_stored", run.cases_stored == n, format!("expected {n}, got {}", run.cases_stored)));
    }
    for (path, want) in &exp.facts {
        let got = run.state.get(path);
        out.push(expect(
            &format!("fact {path}"),
            got == Some(want),
            format!("expected {}, got {}", want.to_value(), got.map_or(Value::Null, Scalar::to_value)),
        ));
    }
    if let Some(parent) = &exp.parent {
        let node = run.plan.preorder().into_iter().find(|t| &t.task_name == parent);
        let got: Vec<ChildExpectation> = node
            .map(|n| {
                n.sub_tasks
                    .iter()
                    .map(|c| ChildExpectation { name: c.task_name.clone(), status: Some(c.status) })
                    .collect()
            })
            .unwrap_or_default();
        let ok = got.len() == exp.children.len()
            && got
                .iter()
                .zip(&exp.children)
                .all(|(g, e)| g.name == e.name && e.status.is_none_or(|s| Some(s) == g.status));
        let render = |v: &[ChildExpectation]| {
            v.iter()
                .map(|c| match c.status {
                    Some(s) => format!("{}:{s}", c.name),
                    None => c.name.clone(),
                })
                .collect::<Vec<_>>()
                .join(", ")
        };
        out.push(expect(
            &format!("children of {parent}"),
            ok,
            format!("expected [{}], got [{}]", render(&exp.children), render(&got)),
        ));
    }
    out
}
