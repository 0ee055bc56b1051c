//! Situation records, the logics that populate their context, and the FIFO
//! queue the engine polls between steps.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agents::{split_reference, AgentRegistry, InvokeMode};
use crate::library::CaseLibrary;
use crate::remedy::RemedyAction;
use crate::task::{TaskId, ValueMap};
use crate::world::Predicate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SituationStatus {
    Raised,
    Contextualized,
    Handled,
    Escalated,
    Resolved,
    Unresolved,
}

impl SituationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SituationStatus::Raised => "raised",
            SituationStatus::Contextualized => "contextualized",
            SituationStatus::Handled => "handled",
            SituationStatus::Escalated => "escalated",
            SituationStatus::Resolved => "resolved",
            SituationStatus::Unresolved => "unresolved",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Situation {
    #[serde(default)]
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub time: u64,
    #[serde(default)]
    pub task: Option<TaskId>,
    #[serde(default)]
    pub context: ValueMap,
    #[serde(default)]
    pub logics: IndexMap<String, String>,
    #[serde(default)]
    pub remedy: Vec<RemedyAction>,
    #[serde(default)]
    pub goals: Vec<Predicate>,
    #[serde(default = "raised")]
    pub status: SituationStatus,
}

fn raised() -> SituationStatus {
    SituationStatus::Raised
}

impl Situation {
    /// A freshly detected situation without remedy or logics.
    pub fn header(name: &str, task: &str, context: ValueMap) -> Self {
        Situation {
            id: String::new(),
            name: name.to_owned(),
            time: 0,
            task: (!task.is_empty()).then(|| task.to_owned()),
            context,
            logics: IndexMap::new(),
            remedy: Vec::new(),
            goals: Vec::new(),
            status: SituationStatus::Raised,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (key, reference) in &self.logics {
            split_reference(reference).map_err(|_| format!("logics `{key}`: `{reference}` is not agent.function"))?;
        }
        if self.status == SituationStatus::Resolved && self.remedy.is_empty() {
            return Err("a resolved situation needs a remedy".into());
        }
        Ok(())
    }
}

/// What [`run_logics`] did with each key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LogicsOutcome {
    pub written: Vec<String>,
    pub carried_over: Vec<String>,
    pub unavailable: Vec<(String, String)>,
}

/// Fills context keys from the situation's logics, in order. Keys already in
/// the context are kept as they are.
pub fn run_logics(situation: &mut Situation, agents: &mut AgentRegistry) -> LogicsOutcome {
    let mut outcome = LogicsOutcome::default();
    let args = Value::Object(situation.context.clone().into_iter().collect());
    for (key, reference) in &situation.logics {
        if situation.context.contains_key(key) {
            outcome.carried_over.push(key.clone());
            continue;
        }
        match agents.invoke(reference, &args, InvokeMode::Real) {
            Ok(value) => {
                situation.context.insert(key.clone(), value);
                outcome.written.push(key.clone());
            }
            Err(e) => outcome.unavailable.push((key.clone(), e.to_string())),
        }
    }
    outcome
}

/// Thread-safe FIFO; any thread may push, the engine pops.
#[derive(Clone, Debug, Default)]
pub struct SituationQueue {
    inner: Arc<Mutex<VecDeque<Situation>>>,
}

impl SituationQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, situation: Situation) {
        self.inner.lock().expect("queue lock").push_back(situation);
    }

    pub fn pop(&self) -> Option<Situation> {
        self.inner.lock().expect("queue lock").pop_front()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Attaches the class logics from the library (latest case of that name),
/// runs them and enqueues the situation. Unknown classes get empty logics.
pub fn raise_situation(
    mut header: Situation,
    library: &CaseLibrary,
    agents: &mut AgentRegistry,
    queue: &SituationQueue,
) -> (Situation, LogicsOutcome) {
    header.logics = library
        .latest_situation(&header.name)
        .map(|s| s.logics)
        .unwrap_or_default();
    header.remedy.clear();
    let outcome = run_logics(&mut header, agents);
    header.status = SituationStatus::Contextualized;
    queue.push(header.clone());
    (header, outcome)
}
