//! Remedy actions: the operation mini-language, reference selectors and the
//! plan edits they drive.
//!
//! ```text
//! operation := verb [anchor] ["the" | "a" | "an"] target
//! verb      := "add" | "delete" | "modify" | "abort"
//! anchor    := "after" | "before" | "at"
//! ```
//!
//! Verbs and anchors are case-insensitive; the target is kept verbatim.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::situation::Situation;
use crate::task::{
    apply_mapping, is_identifier, task_view, IdGen, MappingError, Task, TaskId, TaskStatus,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Add,
    Delete,
    Modify,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    After,
    Before,
    At,
}

impl Verb {
    pub const ALL: [Verb; 4] = [Verb::Add, Verb::Delete, Verb::Modify, Verb::Abort];

    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Add => "add",
            Verb::Delete => "delete",
            Verb::Modify => "modify",
            Verb::Abort => "abort",
        }
    }

    pub fn default_anchor(self) -> Anchor {
        match self {
            Verb::Add => Anchor::After,
            _ => Anchor::At,
        }
    }

    pub fn allows(self, anchor: Anchor) -> bool {
        match self {
            Verb::Add => matches!(anchor, Anchor::After | Anchor::Before),
            _ => anchor == Anchor::At,
        }
    }

    fn parse(word: &str) -> Option<Verb> {
        Verb::ALL.into_iter().find(|v| v.as_str().eq_ignore_ascii_case(word))
    }
}

impl Anchor {
    pub const ALL: [Anchor; 3] = [Anchor::After, Anchor::Before, Anchor::At];

    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::After => "after",
            Anchor::Before => "before",
            Anchor::At => "at",
        }
    }

    fn parse(word: &str) -> Option<Anchor> {
        Anchor::ALL.into_iter().find(|a| a.as_str().eq_ignore_ascii_case(word))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperationAst {
    pub verb: Verb,
    pub anchor: Anchor,
    pub target: String,
}

impl OperationAst {
    pub fn new(verb: Verb, anchor: Anchor, target: &str) -> Self {
        OperationAst { verb, anchor, target: target.to_owned() }
    }
}

impl fmt::Display for OperationAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.verb.as_str(), self.anchor.as_str(), self.target)
    }
}

/// Canonical phrase for an operation.
pub fn render(ast: &OperationAst) -> String {
    ast.to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("parse error at token {position}: {message}")]
pub struct ParseError {
    /// 1-based index of the offending token (one past the end when missing).
    pub position: usize,
    pub message: String,
}

fn is_article(word: &str) -> bool {
    ["the", "a", "an"].iter().any(|a| a.eq_ignore_ascii_case(word))
}

fn is_keyword(word: &str) -> bool {
    Verb::parse(word).is_some() || Anchor::parse(word).is_some() || is_article(word)
}

pub fn parse_operation(text: &str) -> Result<OperationAst, ParseError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let err = |position: usize, message: String| ParseError { position, message };
    let first = tokens.first().ok_or_else(|| err(1, "expected a verb".into()))?;
    let verb = Verb::parse(first).ok_or_else(|| err(1, format!("unknown verb `{first}`")))?;
    let mut i = 1;
    let anchor = match tokens.get(i).and_then(|t| Anchor::parse(t)) {
        Some(a) => {
            if !verb.allows(a) {
                return Err(err(i + 1, format!("`{}` cannot be used with `{}`", a.as_str(), verb.as_str())));
            }
            i += 1;
            a
        }
        None => verb.default_anchor(),
    };
    if tokens.get(i).is_some_and(|t| is_article(t)) {
        i += 1;
    }
    let target = *tokens.get(i).ok_or_else(|| err(i + 1, "expected a target".into()))?;
    if is_keyword(target) {
        return Err(err(i + 1, format!("expected a target, found keyword `{target}`")));
    }
    if !is_identifier(target) {
        return Err(err(i + 1, format!("invalid target `{target}`")));
    }
    if let Some(extra) = tokens.get(i + 1) {
        return Err(err(i + 2, format!("unexpected token `{extra}`")));
    }
    Ok(OperationAst { verb, anchor, target: target.to_owned() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemedyAction {
    pub operation: String,
    #[serde(default)]
    pub references: BTreeMap<String, String>,
    #[serde(default)]
    pub mapping: BTreeMap<String, String>,
    #[serde(default)]
    pub with_task: Option<Task>,
}

impl RemedyAction {
    pub fn new(operation: &str) -> Self {
        RemedyAction {
            operation: operation.to_owned(),
            references: BTreeMap::new(),
            mapping: BTreeMap::new(),
            with_task: None,
        }
    }

    pub fn reference(mut self, alias: &str, selector: &str) -> Self {
        self.references.insert(alias.to_owned(), selector.to_owned());
        self
    }

    pub fn map(mut self, target: &str, source: &str) -> Self {
        self.mapping.insert(target.to_owned(), source.to_owned());
        self
    }

    pub fn with(mut self, task: Task) -> Self {
        self.with_task = Some(task);
        self
    }

    /// Parses the operation and checks the with_task/mapping rules.
    pub fn check(&self) -> Result<OperationAst, RemedyErrorKind> {
        let ast = parse_operation(&self.operation).map_err(RemedyErrorKind::Parse)?;
        match (ast.verb, &self.with_task) {
            (Verb::Add, None) => Err(RemedyErrorKind::Schema("add needs a with_task".into())),
            (Verb::Delete | Verb::Abort, Some(_)) => Err(RemedyErrorKind::Schema(format!(
                "{} does not take a with_task",
                ast.verb.as_str()
            ))),
            (Verb::Modify, None) if self.mapping.is_empty() => {
                Err(RemedyErrorKind::Schema("modify needs a with_task or a mapping".into()))
            }
            _ => Ok(ast),
        }
    }
}

/// Accepts a bare array of remedy actions or an object with a `remedy` array.
/// Malformed remedy document, located by JSON path.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct RemedyDocumentError {
    pub path: String,
    pub message: String,
}

pub fn parse_remedy_document(value: &Value) -> Result<Vec<RemedyAction>, RemedyDocumentError> {
    let list = match value {
        Value::Object(obj) if obj.contains_key("remedy") => &obj["remedy"],
        other => other,
    };
    serde_path_to_error::deserialize(list.clone())
        .map(|mut actions: Vec<RemedyAction>| {
            for a in &mut actions {
                if let Some(t) = a.with_task.as_mut() {
                    t.relink();
                }
            }
            actions
        })
        .map_err(|e| RemedyDocumentError { path: e.path().to_string(), message: e.inner().to_string() })
}

// ---------------------------------------------------------------------------
// References
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Next,
    Prev,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selector {
    ExecutingTask,
    SituationContext,
    Situation,
    TaskName { name: String, direction: Option<Direction> },
    NewTask(usize),
}

impl Selector {
    pub fn parse(text: &str) -> Result<Selector, String> {
        match text.trim() {
            "executing task" => return Ok(Selector::ExecutingTask),
            "situation context" => return Ok(Selector::SituationContext),
            "situation" => return Ok(Selector::Situation),
            _ => {}
        }
        if let Some(rest) = text.strip_prefix("task:") {
            let (name, direction) = match rest.split_once('@') {
                Some((n, "next")) => (n, Some(Direction::Next)),
                Some((n, "prev")) => (n, Some(Direction::Prev)),
                Some((_, d)) => return Err(format!("unknown direction `@{d}`")),
                None => (rest, None),
            };
            if !is_identifier(name) {
                return Err(format!("invalid task name `{name}`"));
            }
            return Ok(Selector::TaskName { name: name.to_owned(), direction });
        }
        if let Some(i) = text.strip_prefix("new_task:") {
            return i.parse().map(Selector::NewTask).map_err(|_| format!("invalid index `{i}`"));
        }
        Err(format!("unknown selector `{text}`"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Bound {
    Task(TaskId),
    SituationContext,
    Situation,
}

pub type BindingTable = BTreeMap<String, Bound>;

/// Alias implicitly bound to the executing task.
pub const THIS_TASK: &str = "this_task";

pub struct RemedyRuntime<'a> {
    pub situation: &'a Situation,
    /// The task the situation was logged against.
    pub executing: Option<&'a str>,
}

fn select(
    selector: &Selector,
    root: &Task,
    rt: &RemedyRuntime<'_>,
    new_tasks: &[Option<TaskId>],
) -> Result<Bound, String> {
    match selector {
        Selector::SituationContext => Ok(Bound::SituationContext),
        Selector::Situation => Ok(Bound::Situation),
        Selector::ExecutingTask => {
            let id = rt.executing.ok_or("the situation names no task")?;
            root.find(id).map(|t| Bound::Task(t.id.clone())).ok_or_else(|| format!("task `{id}` is not in the plan"))
        }
        Selector::NewTask(i) => match new_tasks.get(*i) {
            Some(Some(id)) => Ok(Bound::Task(id.clone())),
            Some(None) => Err(format!("remedy action {i} produced no task")),
            None => Err(format!("remedy action {i} has not been applied yet")),
        },
        Selector::TaskName { name, direction } => {
            let order = root.preorder();
            match direction {
                None => {
                    let hits: Vec<&&Task> = order.iter().filter(|t| &t.task_name == name).collect();
                    match hits.as_slice() {
                        [one] => Ok(Bound::Task(one.id.clone())),
                        [] => Err(format!("no task named `{name}`")),
                        _ => Err(format!("{} tasks named `{name}`", hits.len())),
                    }
                }
                Some(dir) => {
                    let id = rt.executing.ok_or("the situation names no task")?;
                    let pos = order
                        .iter()
                        .position(|t| t.id == id)
                        .ok_or_else(|| format!("task `{id}` is not in the plan"))?;
                    let found = match dir {
                        Direction::Next => order[pos + 1..]
                            .iter()
                            .find(|t| &t.task_name == name && t.status.is_pending()),
                        Direction::Prev => order[..pos]
                            .iter()
                            .rev()
                            .find(|t| &t.task_name == name && !t.status.is_pending()),
                    };
                    found
                        .map(|t| Bound::Task(t.id.clone()))
                        .ok_or_else(|| format!("no matching `{name}` relative to `{id}`"))
                }
            }
        }
    }
}

/// Resolves every declared alias; `this_task` is bound to the executing task
/// unless declared explicitly.
pub fn resolve_references(
    references: &BTreeMap<String, String>,
    root: &Task,
    rt: &RemedyRuntime<'_>,
    new_tasks: &[Option<TaskId>],
) -> Result<BindingTable, RemedyErrorKind> {
    let mut table = BindingTable::new();
    for (alias, text) in references {
        let unresolvable = |reason: String| RemedyErrorKind::UnresolvableReference {
            alias: alias.clone(),
            reason,
        };
        let selector = Selector::parse(text).map_err(unresolvable)?;
        let bound = select(&selector, root, rt, new_tasks).map_err(unresolvable)?;
        table.insert(alias.clone(), bound);
    }
    if !table.contains_key(THIS_TASK) {
        if let Some(Bound::Task(id)) = rt
            .executing
            .and_then(|_| select(&Selector::ExecutingTask, root, rt, new_tasks).ok())
        {
            table.insert(THIS_TASK.to_owned(), Bound::Task(id));
        }
    }
    Ok(table)
}

fn binding_values(table: &BindingTable, root: &Task, situation: &Situation) -> BTreeMap<String, Value> {
    table
        .iter()
        .filter_map(|(alias, bound)| {
            let v = match bound {
                Bound::Task(id) => task_view(root.find(id)?),
                Bound::SituationContext => Value::Object(situation.context.clone().into_iter().collect()),
                Bound::Situation => serde_json::to_value(situation).ok()?,
            };
            Some((alias.clone(), v))
        })
        .collect()
}

/// Deep copy of the action's with_task with fresh ids and status unplanned,
/// specs filled through the action's mapping.
pub fn instantiate_with_task(
    action: &RemedyAction,
    bindings: &BTreeMap<String, Value>,
    ids: &mut IdGen,
    parent: Option<TaskId>,
) -> Result<Task, RemedyErrorKind> {
    let template = action
        .with_task
        .as_ref()
        .ok_or_else(|| RemedyErrorKind::Schema("no with_task to instantiate".into()))?;
    let mut copy = template.copy_with_fresh_ids(ids, parent);
    if !template.status.is_pending() {
        copy.sub_tasks.clear();
    }
    copy.for_each_mut(&mut |t| {
        if !t.status.is_pending() {
            t.status = TaskStatus::Unplanned;
        }
        t.actual_duration = None;
    });
    copy.status = TaskStatus::Unplanned;
    apply_mapping(&copy, &action.mapping, bindings).map_err(RemedyErrorKind::Mapping)
}

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Error)]
pub enum RemedyErrorKind {
    #[error(transparent)]
    Parse(ParseError),
    #[error("schema: {0}")]
    Schema(String),
    #[error("reference `{alias}` cannot be resolved: {reason}")]
    UnresolvableReference { alias: String, reason: String },
    #[error("task `{id}` is already {status}")]
    TargetExecuted { id: TaskId, status: TaskStatus },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("mapping: {0}")]
    Mapping(MappingError),
    #[error("structure: {0}")]
    Structural(String),
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("remedy action {index}: {kind}")]
pub struct RemedyError {
    pub index: usize,
    pub kind: RemedyErrorKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppliedRemedy {
    pub plan: Task,
    /// Task produced (added or modified) by each action, by index.
    pub new_tasks: Vec<Option<TaskId>>,
    /// Parents whose child lists changed.
    pub touched_parents: Vec<TaskId>,
}

fn target_id(ast: &OperationAst, table: &BindingTable) -> Result<TaskId, RemedyErrorKind> {
    match table.get(&ast.target) {
        Some(Bound::Task(id)) => Ok(id.clone()),
        Some(_) => Err(RemedyErrorKind::InvalidTarget(format!("`{}` is not a task", ast.target))),
        None => Err(RemedyErrorKind::UnresolvableReference {
            alias: ast.target.clone(),
            reason: "not declared in references".into(),
        }),
    }
}

fn executed(id: &str, status: TaskStatus) -> RemedyErrorKind {
    RemedyErrorKind::TargetExecuted { id: id.to_owned(), status }
}

/// Applies the actions in order to a copy of `root`. Nothing is returned on
/// error, so the caller's plan is untouched.
pub fn apply_remedy(
    root: &Task,
    remedy: &[RemedyAction],
    rt: &RemedyRuntime<'_>,
    ids: &mut IdGen,
) -> Result<AppliedRemedy, RemedyError> {
    let mut work = root.clone();
    let mut local_ids = ids.clone();
    let mut new_tasks: Vec<Option<TaskId>> = Vec::with_capacity(remedy.len());
    let mut touched: Vec<TaskId> = Vec::new();
    for (index, action) in remedy.iter().enumerate() {
        let produced = apply_one(&mut work, action, rt, &new_tasks, &mut local_ids, &mut touched)
            .map_err(|kind| RemedyError { index, kind })?;
        new_tasks.push(produced);
    }
    work.check_tree().map_err(|e| RemedyError {
        index: remedy.len().saturating_sub(1),
        kind: RemedyErrorKind::Structural(e.to_string()),
    })?;
    *ids = local_ids;
    Ok(AppliedRemedy { plan: work, new_tasks, touched_parents: touched })
}

fn apply_one(
    work: &mut Task,
    action: &RemedyAction,
    rt: &RemedyRuntime<'_>,
    new_tasks: &[Option<TaskId>],
    ids: &mut IdGen,
    touched: &mut Vec<TaskId>,
) -> Result<Option<TaskId>, RemedyErrorKind> {
    let ast = action.check()?;
    let table = resolve_references(&action.references, work, rt, new_tasks)?;
    let target = target_id(&ast, &table)?;
    let bindings = binding_values(&table, work, rt.situation);
    let target_task = work.find(&target).expect("bound tasks exist").clone();
    let mut touch = |id: &TaskId| {
        if !touched.contains(id) {
            touched.push(id.clone());
        }
    };
    match ast.verb {
        Verb::Add => {
            let parent = work
                .parent_of(&target)
                .ok_or_else(|| RemedyErrorKind::Structural("cannot add a sibling of the root".into()))?;
            let parent_id = parent.id.clone();
            let pos = parent.sub_tasks.iter().position(|c| c.id == target).expect("child of parent");
            let insert_at = match ast.anchor {
                Anchor::Before => {
                    if !target_task.status.is_pending() {
                        return Err(executed(&target, target_task.status));
                    }
                    pos
                }
                _ => {
                    if let Some(next) = parent.sub_tasks.get(pos + 1) {
                        if !next.status.is_pending() {
                            return Err(executed(&next.id, next.status));
                        }
                    }
                    pos + 1
                }
            };
            let task = instantiate_with_task(action, &bindings, ids, Some(parent_id.clone()))?;
            let id = task.id.clone();
            work.find_mut(&parent_id).expect("parent exists").sub_tasks.insert(insert_at, task);
            touch(&parent_id);
            Ok(Some(id))
        }
        Verb::Delete => {
            if !target_task.status.is_pending() {
                return Err(executed(&target, target_task.status));
            }
            let parent = work
                .parent_of_mut(&target)
                .ok_or_else(|| RemedyErrorKind::Structural("cannot delete the root".into()))?;
            parent.sub_tasks.retain(|c| c.id != target);
            let parent_id = parent.id.clone();
            touch(&parent_id);
            Ok(None)
        }
        Verb::Modify => {
            if !target_task.status.is_pending() {
                return Err(executed(&target, target_task.status));
            }
            let modified = match &action.with_task {
                Some(_) => {
                    let overlay = instantiate_with_task(action, &bindings, ids, target_task.parent_task.clone())?;
                    let mut t = target_task.clone();
                    t.specs.extend(overlay.specs);
                    t.context.extend(overlay.context);
                    t
                }
                None => apply_mapping(&target_task, &action.mapping, &bindings).map_err(RemedyErrorKind::Mapping)?,
            };
            *work.find_mut(&target).expect("target exists") = modified;
            Ok(Some(target))
        }
        Verb::Abort => {
            if target_task.status.is_terminal() {
                return Err(executed(&target, target_task.status));
            }
            if target_task.status != TaskStatus::Executing {
                return Err(RemedyErrorKind::InvalidTarget(format!(
                    "abort needs an executing task, `{target}` is {}",
                    target_task.status
                )));
            }
            let node = work.find_mut(&target).expect("target exists");
            abort_subtree(node);
            if let Some(parent) = work.parent_of(&target) {
                let parent_id = parent.id.clone();
                touch(&parent_id);
            }
            Ok(None)
        }
    }
}

/// Marks `node` and its executing descendants aborted and prunes every
/// pending descendant. Finished children stay.
fn abort_subtree(node: &mut Task) {
    node.status = TaskStatus::Aborted;
    node.sub_tasks.retain(|c| !c.status.is_pending());
    for child in &mut node.sub_tasks {
        if child.status == TaskStatus::Executing {
            abort_subtree(child);
        }
    }
    if !node.sub_tasks.is_empty() {
        node.actual_duration = Some(node.sub_tasks.iter().filter_map(|c| c.actual_duration).sum());
    }
}

/// One problem found by [`lint_remedy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LintIssue {
    pub index: usize,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

/// Static checks that need no plan: grammar, with_task rules, selector syntax
/// and alias coverage of targets and mapping sources.
pub fn lint_remedy(remedy: &[RemedyAction]) -> Vec<LintIssue> {
    let mut issues = Vec::new();
    for (index, action) in remedy.iter().enumerate() {
        let ast = match action.check() {
            Ok(ast) => Some(ast),
            Err(RemedyErrorKind::Parse(p)) => {
                issues.push(LintIssue { index, code: "parse_error".into(), message: p.message.clone(), position: Some(p.position) });
                None
            }
            Err(e) => {
                issues.push(LintIssue { index, code: "schema_violation".into(), message: e.to_string(), position: None });
                parse_operation(&action.operation).ok()
            }
        };
        for (alias, text) in &action.references {
            match Selector::parse(text) {
                Ok(Selector::NewTask(i)) if i >= index => issues.push(LintIssue {
                    index,
                    code: "unresolvable_reference".into(),
                    message: format!("`{alias}` refers to action {i}, which is not earlier"),
                    position: None,
                }),
                Ok(_) => {}
                Err(e) => issues.push(LintIssue {
                    index,
                    code: "unresolvable_reference".into(),
                    message: format!("`{alias}`: {e}"),
                    position: None,
                }),
            }
        }
        let bound = |alias: &str| alias == THIS_TASK || action.references.contains_key(alias);
        if let Some(ast) = ast {
            if !bound(&ast.target) {
                issues.push(LintIssue {
                    index,
                    code: "unresolvable_reference".into(),
                    message: format!("target `{}` is not declared in references", ast.target),
                    position: None,
                });
            }
        }
        for source in action.mapping.values() {
            let head = source.split('.').next().unwrap_or_default();
            if !bound(head) {
                issues.push(LintIssue {
                    index,
                    code: "unbound_reference".into(),
                    message: format!("mapping source `{source}` uses undeclared `{head}`"),
                    position: None,
                });
            }
        }
    }
    issues
}
