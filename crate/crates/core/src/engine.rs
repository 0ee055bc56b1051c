//! Recursive plan execution.
//!
//! The engine owns the plan tree and world state. Each task goes through
//! conditions, planning, its children or a dispatched action, effects, goals
//! and archival. The situation queue is polled once before the root and once
//! before each child of a composite; remedies replace the plan between steps,
//! so every step looks tasks up by id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{AgentError, AgentRegistry, CannedResponse, InvokeMode};
use crate::handling::{EscalationHandler, HandlingRecord};
use crate::library::{CaseLibrary, LibraryError, TemplateSource, DEFAULT_THRESHOLD};
use crate::situation::{raise_situation, Situation, SituationQueue, SituationStatus};
use crate::task::{
    apply_mapping, shallow_view, ConditionKind, IdGen, MappingError, Task, TaskId, TaskStatus, ValueMap,
};
use crate::validator::{merge_result, ValidationReport};
use crate::world::{apply_effect_in_place, check_goals, eval_predicate, Predicate, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StatusChange,
    ActionDispatched,
    ActionResult,
    ConditionSkip,
    SituationPolled,
    Archived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionEvent {
    pub seq: u64,
    pub time: u64,
    pub task_id: TaskId,
    pub kind: EventKind,
    pub detail: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub threshold: f64,
    pub retry_budget: usize,
    /// Seconds an escalation may wait for a remedy.
    pub escalation_timeout: u64,
    pub max_escalations: usize,
    pub run_prefix: String,
    pub invoke_mode: InvokeMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            threshold: DEFAULT_THRESHOLD,
            retry_budget: 3,
            escalation_timeout: 300,
            max_escalations: 2,
            run_prefix: "run".into(),
            invoke_mode: InvokeMode::Real,
        }
    }
}

/// Situation raised on behalf of an observer (a scripted rider, the dialogue
/// agent, a timeline trigger).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaiseSpec {
    pub name: String,
    /// `executing:<task_name>`, a task id, or empty for the deepest
    /// executing task.
    #[serde(default)]
    pub task: String,
    #[serde(default)]
    pub context: ValueMap,
    #[serde(default)]
    pub goals: Vec<Predicate>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Directive {
    Raise(RaiseSpec),
    Respond { reference: String, responses: Vec<CannedResponse> },
}

/// Receives every event and may react by raising situations or scripting
/// agent answers.
pub trait EngineObserver: Send {
    fn on_event(&mut self, _event: &ExecutionEvent, _engine: &Engine) -> Vec<Directive> {
        Vec::new()
    }

    /// Called when situations change outside the event stream.
    fn on_snapshot(&mut self, _engine: &Engine) {}
}

/// Immutable view published to readers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub seq: u64,
    pub last_event_seq: u64,
    pub plan: Task,
    pub state: WorldState,
    pub situations: Vec<Situation>,
    pub last_validation: Option<ValidationReport>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no template or case for `{0}`")]
    NoTemplateFound(String),
    #[error("mapping failed for `{task}`: {source}")]
    Mapping { task: TaskId, source: MappingError },
}

/// Develops `task` from the best template: fresh-id copy of the template's
/// sub-tasks, specs and context overlaid with the task's own, and every
/// child's mapping applied top-down.
pub fn plan_task(task: &Task, templates: &dyn TemplateSource, ids: &mut IdGen) -> Result<Task, PlanError> {
    let template = templates
        .template_for(&task.task_name, &task.context)
        .ok_or_else(|| PlanError::NoTemplateFound(task.task_name.clone()))?;
    let mut planned = task.clone();
    planned.sub_tasks = template
        .sub_tasks
        .iter()
        .map(|c| c.copy_with_fresh_ids(ids, Some(task.id.clone())))
        .collect();
    for child in &mut planned.sub_tasks {
        child.for_each_mut(&mut |t| {
            t.actual_duration = None;
            t.status = if !t.is_leaf() || !templates.knows(&t.task_name) {
                TaskStatus::Planned
            } else {
                TaskStatus::Unplanned
            };
        });
    }
    let mut specs = template.specs.clone();
    specs.extend(task.specs.clone());
    planned.specs = specs;
    let mut context = template.context.clone();
    context.extend(task.context.clone());
    planned.context = context;
    if planned.conditions.is_empty() {
        planned.conditions = template.conditions.clone();
    }
    if planned.effects.is_empty() {
        planned.effects = template.effects.clone();
    }
    if planned.goals.is_empty() {
        planned.goals = template.goals.clone();
    }
    if planned.est_time == 0 {
        planned.est_time = template.est_time;
    }
    planned.status = TaskStatus::Planned;
    map_children(&mut planned)?;
    Ok(planned)
}

/// Applies each descendant's mapping with `parent` and `this` bound.
pub fn map_children(node: &mut Task) -> Result<(), PlanError> {
    let parent = shallow_view(node);
    for child in &mut node.sub_tasks {
        let bindings = BTreeMap::from([
            ("parent".to_owned(), parent.clone()),
            ("this".to_owned(), shallow_view(child)),
        ]);
        *child = apply_mapping(child, &child.mapping, &bindings)
            .map_err(|source| PlanError::Mapping { task: child.id.clone(), source })?;
        map_children(child)?;
    }
    Ok(())
}

/// Plans an unplanned task. One that already carries sub-tasks keeps them and
/// only has its children's mappings applied; a leaf with no seeded template
/// is a primitive action and is planned as is.
pub fn develop_task(task: &Task, templates: &dyn TemplateSource, ids: &mut IdGen) -> Result<Task, PlanError> {
    if task.is_leaf() && templates.knows(&task.task_name) {
        return plan_task(task, templates, ids);
    }
    let mut t = task.clone();
    t.status = TaskStatus::Planned;
    map_children(&mut t)?;
    Ok(t)
}

/// Sends a leaf task to its actor.
pub fn dispatch_action(task: &Task, agents: &mut AgentRegistry, mode: InvokeMode) -> Result<Value, AgentError> {
    agents.invoke(&task.action.reference(), &task.action_args(), mode)
}

/// Saves a deep snapshot of an executed task to the task case library.
pub fn archive_task(task: &Task, library: &CaseLibrary) -> Result<String, LibraryError> {
    library.archive_task(task)
}

/// Marks every ancestor of `id` failed; returns them leaf to root.
pub fn propagate_failure(root: &mut Task, id: &str) -> Vec<TaskId> {
    let ancestors = root.ancestors(id);
    for a in &ancestors {
        if let Some(t) = root.find_mut(a) {
            t.status = TaskStatus::Failed;
        }
    }
    ancestors
}

#[derive(Debug, Clone)]
pub(crate) enum FailureCause {
    Condition(String),
    Planning(String),
    Actor { message: String, context: Value },
    Unreachable(String),
    Effect(String),
    Goal(String),
}

impl FailureCause {
    fn message(&self) -> String {
        match self {
            FailureCause::Condition(m)
            | FailureCause::Planning(m)
            | FailureCause::Unreachable(m)
            | FailureCause::Effect(m)
            | FailureCause::Goal(m) => m.clone(),
            FailureCause::Actor { message, .. } => message.clone(),
        }
    }
}

pub struct Engine {
    pub config: EngineConfig,
    pub(crate) plan: Task,
    pub(crate) state: WorldState,
    pub(crate) library: CaseLibrary,
    pub(crate) agents: AgentRegistry,
    pub(crate) queue: SituationQueue,
    pub(crate) ids: IdGen,
    pub(crate) events: Vec<ExecutionEvent>,
    observers: Vec<Box<dyn EngineObserver>>,
    pub(crate) handler: Option<Box<dyn EscalationHandler>>,
    pub(crate) situations: Vec<Situation>,
    pub(crate) handled: Vec<HandlingRecord>,
    pub(crate) last_validation: Option<ValidationReport>,
    situation_seq: u64,
    snapshot_seq: u64,
    steps: u64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("root", &self.plan.id)
            .field("events", &self.events.len())
            .finish()
    }
}

impl Engine {
    pub fn new(
        plan: Task,
        state: WorldState,
        library: CaseLibrary,
        agents: AgentRegistry,
        config: EngineConfig,
    ) -> Self {
        let ids = IdGen::new(config.run_prefix.clone());
        Engine {
            config,
            plan,
            state,
            library,
            agents,
            queue: SituationQueue::new(),
            ids,
            events: Vec::new(),
            observers: Vec::new(),
            handler: None,
            situations: Vec::new(),
            handled: Vec::new(),
            last_validation: None,
            situation_seq: 0,
            snapshot_seq: 0,
            steps: 0,
        }
    }

    pub fn add_observer(&mut self, observer: Box<dyn EngineObserver>) {
        self.observers.push(observer);
    }

    pub fn set_handler(&mut self, handler: Box<dyn EscalationHandler>) {
        self.handler = Some(handler);
    }

    pub fn plan(&self) -> &Task {
        &self.plan
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn library(&self) -> &CaseLibrary {
        &self.library
    }

    pub fn agents_mut(&mut self) -> &mut AgentRegistry {
        &mut self.agents
    }

    pub fn queue(&self) -> &SituationQueue {
        &self.queue
    }

    pub fn events(&self) -> &[ExecutionEvent] {
        &self.events
    }

    pub fn situations(&self) -> &[Situation] {
        &self.situations
    }

    pub fn handling_records(&self) -> &[HandlingRecord] {
        &self.handled
    }

    pub fn last_validation(&self) -> Option<&ValidationReport> {
        self.last_validation.as_ref()
    }

    /// Number of actions dispatched so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            seq: self.snapshot_seq,
            last_event_seq: self.events.last().map_or(0, |e| e.seq),
            plan: self.plan.clone(),
            state: self.state.clone(),
            situations: self.situations.clone(),
            last_validation: self.last_validation.clone(),
        }
    }

    /// Polls once, then executes the plan root to completion.
    pub fn run(&mut self) -> TaskStatus {
        let root = self.plan.id.clone();
        self.poll(&root);
        self.execute(&root)
    }

    fn task(&self, id: &str) -> Option<&Task> {
        self.plan.find(id)
    }

    fn status(&self, id: &str) -> Option<TaskStatus> {
        self.task(id).map(|t| t.status)
    }

    fn with_task(&mut self, id: &str, f: impl FnOnce(&mut Task)) {
        if let Some(t) = self.plan.find_mut(id) {
            f(t);
        }
    }

    pub(crate) fn emit(&mut self, task_id: &str, kind: EventKind, detail: Value) {
        let event = ExecutionEvent {
            seq: self.events.last().map_or(1, |e| e.seq + 1),
            time: self.state.clock,
            task_id: task_id.to_owned(),
            kind,
            detail,
        };
        self.events.push(event.clone());
        self.snapshot_seq += 1;
        let mut observers = std::mem::take(&mut self.observers);
        let mut directives = Vec::new();
        for o in &mut observers {
            directives.extend(o.on_event(&event, self));
        }
        self.observers = observers;
        for d in directives {
            self.apply_directive(d);
        }
    }

    pub(crate) fn publish(&mut self) {
        self.snapshot_seq += 1;
        let mut observers = std::mem::take(&mut self.observers);
        for o in &mut observers {
            o.on_snapshot(self);
        }
        self.observers = observers;
    }

    fn apply_directive(&mut self, directive: Directive) {
        match directive {
            Directive::Raise(spec) => {
                self.raise(spec);
            }
            Directive::Respond { reference, responses } => {
                if let Err(e) = self.agents.push_responses(&reference, responses) {
                    log::warn!("scripted response dropped: {e}");
                }
            }
        }
    }

    fn select_task(&self, selector: &str) -> Option<TaskId> {
        let executing = || {
            self.plan
                .preorder()
                .into_iter()
                .filter(|t| t.status == TaskStatus::Executing)
        };
        match selector.strip_prefix("executing:") {
            Some(name) => executing().rfind(|t| t.task_name == name).map(|t| t.id.clone()),
            None if selector.is_empty() || selector == "executing" => executing().next_back().map(|t| t.id.clone()),
            None => self.task(selector).map(|t| t.id.clone()),
        }
    }

    /// Builds a situation header, runs its class logics and enqueues it.
    pub fn raise(&mut self, spec: RaiseSpec) -> Situation {
        self.situation_seq += 1;
        let task = self.select_task(&spec.task).unwrap_or_default();
        let mut header = Situation::header(&spec.name, &task, spec.context);
        header.id = format!("{}-s{:03}", self.config.run_prefix, self.situation_seq);
        header.time = self.state.clock;
        header.goals = spec.goals;
        let (situation, outcome) = raise_situation(header, &self.library, &mut self.agents, &self.queue);
        if !outcome.unavailable.is_empty() {
            log::warn!("{}: unavailable logics {:?}", situation.name, outcome.unavailable);
        }
        self.situations.push(situation.clone());
        self.publish();
        situation
    }

    pub(crate) fn update_situation(&mut self, situation: &Situation) {
        match self.situations.iter_mut().find(|s| s.id == situation.id) {
            Some(s) => *s = situation.clone(),
            None => self.situations.push(situation.clone()),
        }
        self.publish();
    }

    /// Handles every queued situation in FIFO order.
    fn drain_queue(&mut self) -> Vec<Value> {
        let mut handled = Vec::new();
        while let Some(situation) = self.queue.pop() {
            let record = self.handle_situation(situation);
            handled.push(json!({
                "situation": record.situation_id,
                "name": record.name,
                "outcome": record.outcome,
            }));
        }
        handled
    }

    fn poll(&mut self, at: &str) {
        let pending = self.queue.len();
        let handled = if pending > 0 { self.drain_queue() } else { Vec::new() };
        self.emit(at, EventKind::SituationPolled, json!({"pending": pending, "handled": handled}));
    }

    fn set_status(&mut self, id: &str, to: TaskStatus, extra: Value) {
        let Some(task) = self.task(id) else { return };
        let from = task.status;
        if from == to {
            return;
        }
        debug_assert!(from.can_transition(to), "{from} -> {to}");
        let name = task.task_name.clone();
        self.with_task(id, |t| t.status = to);
        let mut detail = json!({"task_name": name, "from": from, "to": to});
        if let (Value::Object(d), Value::Object(e)) = (&mut detail, extra) {
            d.extend(e);
        }
        self.emit(id, EventKind::StatusChange, detail);
    }

    fn archive(&mut self, id: &str) {
        let Some(task) = self.task(id).cloned() else { return };
        let detail = match archive_task(&task, &self.library) {
            Ok(case_id) => json!({"task_name": task.task_name, "case_id": case_id}),
            Err(e) => json!({"task_name": task.task_name, "error": e.to_string()}),
        };
        self.emit(id, EventKind::Archived, detail);
    }

    /// Executes one task and returns its final status.
    pub fn execute(&mut self, id: &str) -> TaskStatus {
        let Some(task) = self.task(id).cloned() else { return TaskStatus::Failed };
        if !task.status.is_pending() {
            return task.status;
        }

        let view = shallow_view(&task);
        let mut generated = Vec::new();
        for cond in &task.conditions {
            let held = cond.predicate.bind_task(&view).and_then(|p| eval_predicate(&self.state, &p));
            let (held, why) = match held {
                Ok(h) => (h, cond.predicate.to_string()),
                Err(e) => (false, e.to_string()),
            };
            if held {
                continue;
            }
            match cond.kind {
                ConditionKind::Hard => return self.fail_task(id, FailureCause::Condition(why)),
                ConditionKind::FailSkip => {
                    self.emit(id, EventKind::ConditionSkip, json!({"task_name": task.task_name, "condition": why}));
                    self.set_status(id, TaskStatus::Skipped, json!({}));
                    self.archive(id);
                    return TaskStatus::Skipped;
                }
                ConditionKind::ContextGen => generated.push(cond.predicate.clone()),
            }
        }
        if !generated.is_empty() {
            self.with_task(id, |t| {
                for p in generated {
                    t.context.insert(
                        format!("condition:{}", p.path),
                        serde_json::to_value(&p).unwrap_or(Value::Null),
                    );
                }
            });
        }

        if task.status == TaskStatus::Unplanned {
            let current = self.task(id).cloned().expect("task exists");
            match develop_task(&current, &self.library, &mut self.ids) {
                Ok(mut planned) => {
                    planned.status = TaskStatus::Unplanned;
                    self.with_task(id, |t| *t = planned);
                    self.set_status(id, TaskStatus::Planned, json!({}));
                }
                Err(e) => return self.fail_task(id, FailureCause::Planning(e.to_string())),
            }
        }

        self.set_status(id, TaskStatus::Executing, json!({}));

        if self.task(id).is_some_and(|t| !t.is_leaf()) {
            loop {
                self.poll(id);
                if self.status(id).is_none_or(|s| s.is_terminal()) {
                    break;
                }
                let Some(next) = self.task(id).and_then(|t| t.first_pending_child()).map(|c| c.id.clone())
                else {
                    break;
                };
                self.execute(&next);
                if self.status(id).is_none_or(|s| s.is_terminal()) {
                    break;
                }
            }
            match self.status(id) {
                Some(TaskStatus::Executing) => {}
                Some(TaskStatus::Aborted) => {
                    self.archive(id);
                    return TaskStatus::Aborted;
                }
                Some(other) => return other,
                None => return TaskStatus::Failed,
            }
            let total = self
                .task(id)
                .map(|t| t.sub_tasks.iter().filter_map(|c| c.actual_duration).sum::<u64>())
                .unwrap_or(0);
            self.with_task(id, |t| t.actual_duration = Some(total));
        } else {
            let current = self.task(id).cloned().expect("task exists");
            let reference = current.action.reference();
            self.steps += 1;
            self.emit(
                id,
                EventKind::ActionDispatched,
                json!({"task_name": current.task_name, "reference": reference, "args": current.action_args(), "step": self.steps}),
            );
            let mode = self.config.invoke_mode;
            let result = dispatch_action(&current, &mut self.agents, mode);
            self.state.advance(current.est_time);
            self.with_task(id, |t| t.actual_duration = Some(t.est_time));
            match result {
                Ok(value) => {
                    self.with_task(id, |t| merge_result(t, value.clone()));
                    self.emit(
                        id,
                        EventKind::ActionResult,
                        json!({"task_name": current.task_name, "reference": reference, "ok": true, "result": value, "step": self.steps}),
                    );
                }
                Err(err) => {
                    self.emit(
                        id,
                        EventKind::ActionResult,
                        json!({"task_name": current.task_name, "reference": reference, "ok": false, "error": err.to_string(), "step": self.steps}),
                    );
                    let cause = match err {
                        AgentError::ActorFailure { message, context, .. } => FailureCause::Actor { message, context },
                        other => FailureCause::Unreachable(other.to_string()),
                    };
                    return self.fail_task(id, cause);
                }
            }
            if self.status(id) != Some(TaskStatus::Executing) {
                return self.status(id).unwrap_or(TaskStatus::Failed);
            }
        }

        let current = self.task(id).cloned().expect("task exists");
        let view = shallow_view(&current);
        for effect in &current.effects {
            let applied = effect.bind_task(&view).and_then(|e| apply_effect_in_place(&mut self.state, &e));
            if let Err(e) = applied {
                return self.fail_task(id, FailureCause::Effect(e.to_string()));
            }
        }
        let mut goals = Vec::with_capacity(current.goals.len());
        for g in &current.goals {
            match g.bind_task(&view) {
                Ok(b) => goals.push(b),
                Err(e) => return self.fail_task(id, FailureCause::Goal(e.to_string())),
            }
        }
        let report = check_goals(&self.state, &goals);
        if let Some(f) = report.first_failure() {
            let why = f.error.clone().unwrap_or_else(|| format!("goal not met: {}", f.goal));
            return self.fail_task(id, FailureCause::Goal(why));
        }
        self.set_status(id, TaskStatus::Finished, json!({}));
        self.archive(id);
        TaskStatus::Finished
    }

    fn situation_name(&self, task: &Task, cause: &FailureCause) -> String {
        if let Some(name) = task.context.get("on_failure").and_then(Value::as_str) {
            return name.to_owned();
        }
        match cause {
            FailureCause::Planning(_) => "planning_failure".into(),
            FailureCause::Unreachable(_) => "agent_unreachable".into(),
            _ => format!("{}_failed", task.task_name),
        }
    }

    /// Raises a situation for the failure and handles it at once. A resolved
    /// situation leaves the task skipped; otherwise it fails and the failure
    /// propagates to the root.
    fn fail_task(&mut self, id: &str, cause: FailureCause) -> TaskStatus {
        let Some(task) = self.task(id).cloned() else { return TaskStatus::Failed };
        let name = self.situation_name(&task, &cause);
        let context: ValueMap = match &cause {
            FailureCause::Actor { context: Value::Object(obj), .. } => obj.clone().into_iter().collect(),
            _ => ValueMap::new(),
        };
        let situation = self.raise(RaiseSpec { name, task: id.to_owned(), context, goals: Vec::new() });
        let handled = self.drain_queue();
        let resolved = self
            .situations
            .iter()
            .any(|s| s.id == situation.id && s.status == SituationStatus::Resolved);
        let detail = json!({
            "situation": situation.id,
            "name": situation.name,
            "reason": cause.message(),
            "handled": handled,
        });
        match self.status(id) {
            Some(s) if s.is_terminal() => return s,
            None => return TaskStatus::Failed,
            _ => {}
        }
        if resolved {
            self.set_status(id, TaskStatus::Skipped, detail);
            self.archive(id);
            return TaskStatus::Skipped;
        }
        self.set_status(id, TaskStatus::Failed, detail);
        self.archive(id);
        for a in self.plan.ancestors(id) {
            self.set_status(&a, TaskStatus::Failed, json!({"propagated_from": id}));
        }
        TaskStatus::Failed
    }

    /// Emits status changes between the current plan and `next`, then installs it.
    pub(crate) fn commit_plan(&mut self, next: Task, touched: &[TaskId]) {
        let changes: Vec<(TaskId, TaskStatus)> = next
            .preorder()
            .into_iter()
            .filter_map(|t| {
                let before = self.plan.find(&t.id)?;
                (before.status != t.status).then(|| (t.id.clone(), t.status))
            })
            .collect();
        let mut next = next;
        for id in touched {
            if let Some(t) = next.find_mut(id) {
                t.context.insert("repaired".into(), Value::Bool(true));
            }
        }
        let old = std::mem::replace(&mut self.plan, next);
        for (id, to) in changes {
            let from = old.find(&id).map(|t| t.status).unwrap_or(to);
            let name = self.plan.find(&id).map(|t| t.task_name.clone()).unwrap_or_default();
            self.emit(&id, EventKind::StatusChange, json!({"task_name": name, "from": from, "to": to, "remedy": true}));
        }
    }
}

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Writes one JSON event per line.
pub fn write_event_log(events: &[ExecutionEvent], mut out: impl std::io::Write) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a JSON-lines event log; blank lines are ignored.
pub fn read_event_log(input: impl std::io::BufRead) -> Result<Vec<ExecutionEvent>, EventLogError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|source| EventLogError::Parse { line: i + 1, source })?);
    }
    Ok(events)
}

/// Resets a finished tree so it can be executed again: every node planned,
/// durations cleared.
pub fn reset_for_replay(task: &Task) -> Task {
    let mut copy = task.clone();
    copy.for_each_mut(&mut |t| {
        t.status = TaskStatus::Planned;
        t.actual_duration = None;
    });
    copy
}
