//! Simulation-based validation of the unexecuted part of a plan.
//!
//! Starting from the committed state, pending tasks are visited depth-first in
//! execution order: conditions, planning (when a template source is given),
//! simulated action or children, effects, goals. Executing composites have
//! their pending children simulated and then their own effects and goals
//! checked. Terminal tasks and executing leaves are not revisited.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::AgentRegistry;
use crate::engine::develop_task;
use crate::library::{Parallelism, TemplateSource};
use crate::task::{shallow_view, task_view, ConditionKind, IdGen, Task, TaskId, TaskStatus};
use crate::world::{apply_effect_in_place, check_goals, eval_predicate, Predicate, WorldState};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Conditions,
    Plan,
    Simulate,
    Effects,
    Goals,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub task_id: TaskId,
    pub task_name: String,
    pub phase: Phase,
    pub outcome: Outcome,
    #[serde(default)]
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub trace: Vec<TraceEntry>,
    pub failed_goal: Option<Predicate>,
    /// State at the end of the simulation.
    pub final_state: WorldState,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

struct Sim<'a> {
    agents: &'a AgentRegistry,
    planner: Option<&'a dyn TemplateSource>,
    ids: IdGen,
    state: WorldState,
    trace: Vec<TraceEntry>,
    failed_goal: Option<Predicate>,
}

enum Flow {
    Continue,
    Stop,
}

impl Sim<'_> {
    fn log(&mut self, task: &Task, phase: Phase, outcome: Outcome, detail: impl Into<String>) {
        self.trace.push(TraceEntry {
            task_id: task.id.clone(),
            task_name: task.task_name.clone(),
            phase,
            outcome,
            detail: detail.into(),
        });
    }

    fn visit(&mut self, task: &mut Task) -> Flow {
        match task.status {
            s if s.is_terminal() => Flow::Continue,
            TaskStatus::Executing => {
                if task.is_leaf() {
                    return Flow::Continue;
                }
                for child in &mut task.sub_tasks {
                    if let Flow::Stop = self.visit(child) {
                        return Flow::Stop;
                    }
                }
                self.finish(task)
            }
            _ => self.visit_pending(task),
        }
    }

    fn visit_pending(&mut self, task: &mut Task) -> Flow {
        let view = shallow_view(task);
        let mut generated = Vec::new();
        for cond in &task.conditions {
            let held = cond
                .predicate
                .bind_task(&view)
                .and_then(|p| eval_predicate(&self.state, &p));
            let (held, why) = match held {
                Ok(h) => (h, cond.predicate.to_string()),
                Err(e) => (false, e.to_string()),
            };
            if held {
                continue;
            }
            match cond.kind {
                ConditionKind::Hard => {
                    self.log(task, Phase::Conditions, Outcome::Fail, format!("hard condition failed: {why}"));
                    return Flow::Stop;
                }
                ConditionKind::FailSkip => {
                    self.log(task, Phase::Conditions, Outcome::Skip, format!("fail-skip condition failed: {why}"));
                    return Flow::Continue;
                }
                ConditionKind::ContextGen => generated.push(cond.predicate.clone()),
            }
        }
        for p in generated {
            task.context.insert(
                format!("condition:{}", p.path),
                serde_json::to_value(&p).unwrap_or(Value::Null),
            );
        }
        self.log(task, Phase::Conditions, Outcome::Pass, "");

        if task.status == TaskStatus::Unplanned {
            if let Some(planner) = self.planner {
                match develop_task(task, planner, &mut self.ids) {
                    Ok(planned) => {
                        *task = planned;
                        self.log(task, Phase::Plan, Outcome::Pass, format!("{} sub-tasks", task.sub_tasks.len()));
                    }
                    Err(e) => {
                        self.log(task, Phase::Plan, Outcome::Fail, e.to_string());
                        return Flow::Stop;
                    }
                }
            }
        }

        if task.is_leaf() {
            match simulate_leaf(task, &mut self.state, self.agents) {
                Ok(()) => self.log(task, Phase::Simulate, Outcome::Pass, task.action.reference()),
                Err(detail) => {
                    self.log(task, Phase::Simulate, Outcome::Fail, detail);
                    return Flow::Stop;
                }
            }
        } else {
            for child in &mut task.sub_tasks {
                if let Flow::Stop = self.visit(child) {
                    return Flow::Stop;
                }
            }
        }
        self.finish(task)
    }

    /// Effects then goals of a task whose body has been simulated.
    fn finish(&mut self, task: &Task) -> Flow {
        let view = shallow_view(task);
        for effect in &task.effects {
            let applied = effect
                .bind_task(&view)
                .and_then(|e| apply_effect_in_place(&mut self.state, &e));
            if let Err(e) = applied {
                self.log(task, Phase::Effects, Outcome::Fail, e.to_string());
                return Flow::Stop;
            }
        }
        if !task.effects.is_empty() {
            self.log(task, Phase::Effects, Outcome::Pass, format!("{} applied", task.effects.len()));
        }
        let mut bound = Vec::with_capacity(task.goals.len());
        for goal in &task.goals {
            match goal.bind_task(&view) {
                Ok(g) => bound.push(g),
                Err(e) => {
                    self.failed_goal = Some(goal.clone());
                    self.log(task, Phase::Goals, Outcome::Fail, e.to_string());
                    return Flow::Stop;
                }
            }
        }
        let report = check_goals(&self.state, &bound);
        if let Some(failure) = report.first_failure() {
            let detail = failure.error.clone().unwrap_or_else(|| format!("goal not met: {}", failure.goal));
            self.failed_goal = Some(failure.goal.clone());
            self.log(task, Phase::Goals, Outcome::Fail, detail);
            return Flow::Stop;
        }
        if !task.goals.is_empty() {
            self.log(task, Phase::Goals, Outcome::Pass, "");
        }
        Flow::Continue
    }
}

/// Runs a leaf in simulation mode on `state`: the predicted result is merged
/// into the task's context and the clock advances by `est_time`. Effects are
/// applied separately.
fn simulate_leaf(task: &mut Task, state: &mut WorldState, agents: &AgentRegistry) -> Result<(), String> {
    let result = agents
        .simulate(&task.action.reference(), &task.action_args())
        .map_err(|e| e.to_string())?;
    merge_result(task, result);
    state.advance(task.est_time);
    Ok(())
}

/// Merges an agent result into a task's context: object keys are copied,
/// anything else lands under `result`.
pub fn merge_result(task: &mut Task, result: Value) {
    match result {
        Value::Object(obj) => task.context.extend(obj),
        Value::Null => {}
        other => {
            task.context.insert("result".into(), other);
        }
    }
}

/// Simulates one leaf task: action in simulation mode, then its effects.
pub fn simulate_task(
    task: &Task,
    state: &WorldState,
    agents: &AgentRegistry,
) -> Result<(WorldState, Task), String> {
    if !task.is_leaf() {
        return Err(format!("`{}` is not a leaf", task.id));
    }
    let mut task = task.clone();
    let mut next = state.clone();
    simulate_leaf(&mut task, &mut next, agents)?;
    let view = task_view(&task);
    for effect in &task.effects {
        effect
            .bind_task(&view)
            .and_then(|e| apply_effect_in_place(&mut next, &e))
            .map_err(|e| e.to_string())?;
    }
    Ok((next, task))
}

/// Validates the pending remainder of `root` from `state`, then checks
/// `extra_goals` once against the final simulated state.
pub fn validate_plan(
    root: &Task,
    state: &WorldState,
    extra_goals: &[Predicate],
    agents: &AgentRegistry,
    planner: Option<&dyn TemplateSource>,
) -> ValidationReport {
    let mut plan = root.clone();
    let mut sim = Sim {
        agents,
        planner,
        ids: IdGen::new("sim"),
        state: state.clone(),
        trace: Vec::new(),
        failed_goal: None,
    };
    let flow = sim.visit(&mut plan);
    let mut verdict = match flow {
        Flow::Continue => Verdict::Pass,
        Flow::Stop => Verdict::Fail,
    };
    if verdict == Verdict::Pass && !extra_goals.is_empty() {
        let report = check_goals(&sim.state, extra_goals);
        for r in &report.results {
            let outcome = if r.passed { Outcome::Pass } else { Outcome::Fail };
            sim.trace.push(TraceEntry {
                task_id: root.id.clone(),
                task_name: "situation goals".into(),
                phase: Phase::Goals,
                outcome,
                detail: r.error.clone().unwrap_or_else(|| r.goal.to_string()),
            });
        }
        if let Some(f) = report.first_failure() {
            sim.failed_goal = Some(f.goal.clone());
            verdict = Verdict::Fail;
        }
    }
    ValidationReport {
        verdict,
        trace: sim.trace,
        failed_goal: sim.failed_goal,
        final_state: sim.state,
    }
}

/// One plan to validate in a batch.
#[derive(Clone, Debug)]
pub struct ValidationJob {
    pub plan: Task,
    pub state: WorldState,
    pub goals: Vec<Predicate>,
}

/// Validates independent plans, fanning out across threads when asked.
pub fn validate_batch(
    jobs: &[ValidationJob],
    agents: &AgentRegistry,
    planner: Option<&dyn TemplateSource>,
    mode: Parallelism,
) -> Vec<ValidationReport> {
    let run = |j: &ValidationJob| validate_plan(&j.plan, &j.state, &j.goals, agents, planner);
    #[cfg(feature = "parallel")]
    if mode == Parallelism::Parallel {
        return jobs.par_iter().map(run).collect();
    }
    let _ = mode;
    jobs.iter().map(run).collect()
}
