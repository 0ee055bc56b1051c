//! Task tree model, canonical JSON form, dotted paths and spec mapping.
//!
//! Tasks, sub-tasks and actions share one recursive structure. Specs and
//! context are JSON value trees; conditions, effects and goals are predicates
//! over the flat [`WorldState`](crate::world::WorldState).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::world::{Effect, Predicate};

pub type TaskId = String;
pub type ValueMap = BTreeMap<String, Value>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Unplanned,
    Planned,
    Executing,
    Finished,
    Failed,
    Aborted,
    Skipped,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 7] = [
        TaskStatus::Unplanned,
        TaskStatus::Planned,
        TaskStatus::Executing,
        TaskStatus::Finished,
        TaskStatus::Failed,
        TaskStatus::Aborted,
        TaskStatus::Skipped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Unplanned => "unplanned",
            TaskStatus::Planned => "planned",
            TaskStatus::Executing => "executing",
            TaskStatus::Finished => "finished",
            TaskStatus::Failed => "failed",
            TaskStatus::Aborted => "aborted",
            TaskStatus::Skipped => "skipped",
        }
    }

    /// Not yet started: the dashed region of a plan.
    pub fn is_pending(self) -> bool {
        matches!(self, TaskStatus::Unplanned | TaskStatus::Planned)
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            TaskStatus::Finished | TaskStatus::Failed | TaskStatus::Aborted | TaskStatus::Skipped
        )
    }

    /// Forward-only status machine. Pending tasks may terminate without
    /// executing when a condition fails before planning.
    pub fn can_transition(self, to: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, to),
            (Unplanned, Planned)
                | (Unplanned | Planned, Executing | Skipped | Failed | Aborted)
                | (Executing, Finished | Failed | Aborted | Skipped)
        )
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskStatus::ALL
            .iter()
            .copied()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown status `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionArg {
    pub role: String,
    pub value: Value,
}

/// Abstract form of a task: a verb with role-named arguments and the actor
/// agent that carries it out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub verb: String,
    #[serde(default)]
    pub args: Vec<ActionArg>,
    pub actor: String,
}

impl Action {
    pub fn new(actor: impl Into<String>, verb: impl Into<String>) -> Self {
        Action {
            verb: verb.into(),
            args: Vec::new(),
            actor: actor.into(),
        }
    }

    pub fn with_arg(mut self, role: impl Into<String>, value: impl Into<Value>) -> Self {
        self.set_arg(role, value.into());
        self
    }

    pub fn arg(&self, role: &str) -> Option<&Value> {
        self.args.iter().find(|a| a.role == role).map(|a| &a.value)
    }

    pub fn set_arg(&mut self, role: impl Into<String>, value: Value) {
        let role = role.into();
        match self.args.iter_mut().find(|a| a.role == role) {
            Some(arg) => arg.value = value,
            None => self.args.push(ActionArg { role, value }),
        }
    }

    /// The `agent.function` reference this action dispatches to.
    pub fn reference(&self) -> String {
        format!("{}.{}", self.actor, self.verb)
    }

    fn check(&self) -> Result<(), String> {
        if self.verb.trim().is_empty() {
            return Err("verb must be non-empty".into());
        }
        let mut seen = BTreeSet::new();
        for arg in &self.args {
            if !seen.insert(arg.role.as_str()) {
                return Err(format!("duplicate role `{}`", arg.role));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Hard,
    FailSkip,
    ContextGen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub kind: ConditionKind,
    pub predicate: Predicate,
}

impl Condition {
    pub fn hard(predicate: Predicate) -> Self {
        Condition { kind: ConditionKind::Hard, predicate }
    }

    pub fn fail_skip(predicate: Predicate) -> Self {
        Condition { kind: ConditionKind::FailSkip, predicate }
    }

    pub fn context_gen(predicate: Predicate) -> Self {
        Condition { kind: ConditionKind::ContextGen, predicate }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: TaskId,
    pub task_name: String,
    #[serde(default)]
    pub parent_task: Option<TaskId>,
    #[serde(default)]
    pub sub_tasks: Vec<Task>,
    pub action: Action,
    #[serde(default)]
    pub specs: ValueMap,
    #[serde(default)]
    pub conditions: Vec<Condition>,
    #[serde(default)]
    pub effects: Vec<Effect>,
    #[serde(default)]
    pub context: ValueMap,
    #[serde(default)]
    pub goals: Vec<Predicate>,
    #[serde(default)]
    pub est_time: u64,
    #[serde(default)]
    pub actual_duration: Option<u64>,
    #[serde(default)]
    pub mapping: BTreeMap<String, String>,
    pub status: TaskStatus,
}

/// Fields of the Task schema and whether input documents must carry them.
pub const TASK_FIELDS: &[(&str, bool)] = &[
    ("id", true),
    ("task_name", true),
    ("parent_task", false),
    ("sub_tasks", false),
    ("action", true),
    ("specs", false),
    ("conditions", false),
    ("effects", false),
    ("context", false),
    ("goals", false),
    ("est_time", false),
    ("actual_duration", false),
    ("mapping", false),
    ("status", true),
];

impl Task {
    pub fn new(id: impl Into<TaskId>, task_name: impl Into<String>, action: Action) -> Self {
        Task {
            id: id.into(),
            task_name: task_name.into(),
            parent_task: None,
            sub_tasks: Vec::new(),
            action,
            specs: ValueMap::new(),
            conditions: Vec::new(),
            effects: Vec::new(),
            context: ValueMap::new(),
            goals: Vec::new(),
            est_time: 0,
            actual_duration: None,
            mapping: BTreeMap::new(),
            status: TaskStatus::Unplanned,
        }
    }

    pub fn with_spec(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.specs.insert(key.into(), value.into());
        self
    }

    pub fn with_context(mut self, key: impl Into<String>, value: impl Into<Value>) -> Self {
        self.context.insert(key.into(), value.into());
        self
    }

    pub fn with_status(mut self, status: TaskStatus) -> Self {
        self.status = status;
        self
    }

    pub fn with_est_time(mut self, secs: u64) -> Self {
        self.est_time = secs;
        self
    }

    pub fn with_child(mut self, mut child: Task) -> Self {
        child.parent_task = Some(self.id.clone());
        child.relink();
        self.sub_tasks.push(child);
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.sub_tasks.is_empty()
    }

    /// Number of nodes in this subtree.
    pub fn count(&self) -> usize {
        1 + self.sub_tasks.iter().map(Task::count).sum::<usize>()
    }

    pub fn find(&self, id: &str) -> Option<&Task> {
        if self.id == id {
            return Some(self);
        }
        self.sub_tasks.iter().find_map(|c| c.find(id))
    }

    pub fn find_mut(&mut self, id: &str) -> Option<&mut Task> {
        if self.id == id {
            return Some(self);
        }
        self.sub_tasks.iter_mut().find_map(|c| c.find_mut(id))
    }

    pub fn parent_of(&self, id: &str) -> Option<&Task> {
        if self.sub_tasks.iter().any(|c| c.id == id) {
            return Some(self);
        }
        self.sub_tasks.iter().find_map(|c| c.parent_of(id))
    }

    pub fn parent_of_mut(&mut self, id: &str) -> Option<&mut Task> {
        if self.sub_tasks.iter().any(|c| c.id == id) {
            return Some(self);
        }
        self.sub_tasks.iter_mut().find_map(|c| c.parent_of_mut(id))
    }

    /// Ancestor ids of `id`, nearest first. Empty for the root or an unknown id.
    pub fn ancestors(&self, id: &str) -> Vec<TaskId> {
        fn walk(node: &Task, id: &str, trail: &mut Vec<TaskId>) -> bool {
            if node.id == id {
                return true;
            }
            trail.push(node.id.clone());
            for child in &node.sub_tasks {
                if walk(child, id, trail) {
                    return true;
                }
            }
            trail.pop();
            false
        }
        let mut trail = Vec::new();
        if walk(self, id, &mut trail) {
            trail.reverse();
            trail
        } else {
            Vec::new()
        }
    }

    /// Pre-order traversal, which is also execution order.
    pub fn preorder(&self) -> Vec<&Task> {
        let mut out = Vec::with_capacity(self.count());
        fn walk<'a>(node: &'a Task, out: &mut Vec<&'a Task>) {
            out.push(node);
            for child in &node.sub_tasks {
                walk(child, out);
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut Task)) {
        f(self);
        for child in &mut self.sub_tasks {
            child.for_each_mut(f);
        }
    }

    /// Rewrites every child's `parent_task` to match its parent's id.
    pub fn relink(&mut self) {
        let id = self.id.clone();
        for child in &mut self.sub_tasks {
            child.parent_task = Some(id.clone());
            child.relink();
        }
    }

    /// Checks parent/child links, id uniqueness and action invariants.
    pub fn check_tree(&self) -> Result<(), TreeError> {
        let mut ids = BTreeSet::new();
        fn walk<'a>(node: &'a Task, ids: &mut BTreeSet<&'a str>) -> Result<(), TreeError> {
            if !ids.insert(node.id.as_str()) {
                return Err(TreeError::DuplicateId(node.id.clone()));
            }
            node.action
                .check()
                .map_err(|reason| TreeError::InvalidAction { id: node.id.clone(), reason })?;
            for child in &node.sub_tasks {
                if child.parent_task.as_deref() != Some(node.id.as_str()) {
                    return Err(TreeError::BrokenLink {
                        child: child.id.clone(),
                        expected: node.id.clone(),
                    });
                }
                walk(child, ids)?;
            }
            Ok(())
        }
        walk(self, &mut ids)
    }

    /// Deep copy with fresh ids, rooted under `parent`.
    pub fn copy_with_fresh_ids(&self, ids: &mut IdGen, parent: Option<TaskId>) -> Task {
        let mut copy = self.clone();
        copy.for_each_mut(&mut |t| t.id = ids.next_id());
        copy.parent_task = parent;
        copy.relink();
        copy
    }

    /// Arguments sent to the actor: specs overlaid with the action's roles.
    pub fn action_args(&self) -> Value {
        let mut args: Map<String, Value> = self.specs.clone().into_iter().collect();
        for arg in &self.action.args {
            args.insert(arg.role.clone(), arg.value.clone());
        }
        Value::Object(args)
    }

    /// First child that has not started yet.
    pub fn first_pending_child(&self) -> Option<&Task> {
        self.sub_tasks.iter().find(|c| c.status.is_pending())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("duplicate task id `{0}`")]
    DuplicateId(TaskId),
    #[error("task `{child}` should have parent `{expected}`")]
    BrokenLink { child: TaskId, expected: TaskId },
    #[error("task `{id}` has an invalid action: {reason}")]
    InvalidAction { id: TaskId, reason: String },
}

/// Per-run task id allocator: `<prefix>-t0001`, `<prefix>-t0002`, ...
#[derive(Debug, Clone)]
pub struct IdGen {
    prefix: String,
    next: u64,
}

impl IdGen {
    pub fn new(prefix: impl Into<String>) -> Self {
        IdGen { prefix: prefix.into(), next: 1 }
    }

    pub fn next_id(&mut self) -> TaskId {
        let id = format!("{}-t{:04}", self.prefix, self.next);
        self.next += 1;
        id
    }
}

// ---------------------------------------------------------------------------
// Dotted paths
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DottedPath(Vec<String>);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("empty path")]
    Empty,
    #[error("invalid segment `{segment}` at index {index} in `{path}`")]
    InvalidSegment { path: String, segment: String, index: usize },
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl DottedPath {
    pub fn parse(s: &str) -> Result<Self, PathError> {
        if s.is_empty() {
            return Err(PathError::Empty);
        }
        let segments: Vec<String> = s.split('.').map(str::to_owned).collect();
        for (index, segment) in segments.iter().enumerate() {
            if !is_identifier(segment) {
                return Err(PathError::InvalidSegment {
                    path: s.to_owned(),
                    segment: segment.clone(),
                    index,
                });
            }
        }
        Ok(DottedPath(segments))
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn first(&self) -> &str {
        &self.0[0]
    }

    /// Everything after the first segment, or `None` for single-segment paths.
    pub fn rest(&self) -> Option<DottedPath> {
        (self.0.len() > 1).then(|| DottedPath(self.0[1..].to_vec()))
    }
}

impl FromStr for DottedPath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DottedPath::parse(s)
    }
}

impl fmt::Display for DottedPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

impl Serialize for DottedPath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DottedPath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        DottedPath::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("path `{path}` not found (resolved up to `{prefix}`)")]
pub struct PathNotFound {
    pub path: String,
    pub prefix: String,
}

/// Walks `path` through nested maps of `root`.
pub fn resolve_path<'a>(root: &'a Value, path: &DottedPath) -> Result<&'a Value, PathNotFound> {
    let mut current = root;
    for (depth, segment) in path.segments().iter().enumerate() {
        match current.as_object().and_then(|m| m.get(segment)) {
            Some(next) => current = next,
            None => {
                return Err(PathNotFound {
                    path: path.to_string(),
                    prefix: path.segments()[..depth].join("."),
                })
            }
        }
    }
    Ok(current)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("schema violation at `{path}`: {message}")]
    SchemaViolation { path: String, message: String },
}

/// Canonical JSON: keys sorted, compact, every field present.
pub fn serialize_task(task: &Task) -> String {
    to_canonical_string(task)
}

pub(crate) fn to_canonical_string<T: Serialize>(value: &T) -> String {
    // serde_json's default map is ordered, so going through Value sorts keys.
    let value = serde_json::to_value(value).expect("in-memory model always serializes");
    value.to_string()
}

pub fn deserialize_task(text: &str) -> Result<Task, TaskError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| TaskError::MalformedDocument(e.to_string()))?;
    task_from_value(&value)
}

/// Schema-checked conversion from a JSON value. Offending paths are reported
/// in `a.b[0].c` form; parent links are repaired.
pub fn task_from_value(value: &Value) -> Result<Task, TaskError> {
    check_task_shape(value, "")?;
    let mut task: Task = serde_path_to_error::deserialize(value).map_err(|e| {
        TaskError::SchemaViolation {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        }
    })?;
    task.relink();
    check_semantics(&task, "")?;
    Ok(task)
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_owned()
    } else {
        format!("{prefix}.{key}")
    }
}

fn check_task_shape(value: &Value, path: &str) -> Result<(), TaskError> {
    let violation = |path: String, message: &str| TaskError::SchemaViolation {
        path,
        message: message.to_owned(),
    };
    let obj = value
        .as_object()
        .ok_or_else(|| violation(if path.is_empty() { ".".into() } else { path.into() }, "expected a task object"))?;
    for (field, required) in TASK_FIELDS {
        if *required && !obj.contains_key(*field) {
            return Err(violation(join(path, field), "missing required field"));
        }
    }
    for key in obj.keys() {
        if !TASK_FIELDS.iter().any(|(f, _)| f == key) {
            return Err(violation(join(path, key), "unknown field"));
        }
    }
    if let Some(status) = obj.get("status") {
        let ok = status.as_str().map(|s| s.parse::<TaskStatus>().is_ok()).unwrap_or(false);
        if !ok {
            return Err(violation(join(path, "status"), &format!("invalid status {status}")));
        }
    }
    if let Some(subs) = obj.get("sub_tasks") {
        let arr = subs
            .as_array()
            .ok_or_else(|| violation(join(path, "sub_tasks"), "expected an array"))?;
        for (i, child) in arr.iter().enumerate() {
            check_task_shape(child, &format!("{}[{i}]", join(path, "sub_tasks")))?;
        }
    }
    Ok(())
}

fn check_semantics(task: &Task, path: &str) -> Result<(), TaskError> {
    task.action.check().map_err(|message| TaskError::SchemaViolation {
        path: join(path, "action"),
        message,
    })?;
    for (i, c) in task.conditions.iter().enumerate() {
        c.predicate.validate().map_err(|message| TaskError::SchemaViolation {
            path: format!("{}[{i}]", join(path, "conditions")),
            message,
        })?;
    }
    for (i, e) in task.effects.iter().enumerate() {
        e.validate().map_err(|message| TaskError::SchemaViolation {
            path: format!("{}[{i}]", join(path, "effects")),
            message,
        })?;
    }
    for (i, g) in task.goals.iter().enumerate() {
        g.validate().map_err(|message| TaskError::SchemaViolation {
            path: format!("{}[{i}]", join(path, "goals")),
            message,
        })?;
    }
    for (i, child) in task.sub_tasks.iter().enumerate() {
        check_semantics(child, &format!("{}[{i}]", join(path, "sub_tasks")))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mapping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MappingError {
    #[error("unbound reference `{0}`")]
    UnboundReference(String),
    #[error(transparent)]
    PathNotFound(#[from] PathNotFound),
    #[error(transparent)]
    InvalidPath(#[from] PathError),
    #[error("`{0}` is not a writable mapping target")]
    InvalidTarget(String),
    #[error("cannot write `{path}`: {reason}")]
    BadValue { path: String, reason: String },
}

/// Value-tree view of a task used as a mapping source and for `@task:`
/// bindings. Adds `actor`, `estimated_time` and `spec` aliases, and exposes
/// action arguments by role under `action`.
pub fn task_view(task: &Task) -> Value {
    let mut value = serde_json::to_value(task).expect("task serializes");
    decorate_view(task, &mut value);
    value
}

/// Like [`task_view`] but without `sub_tasks`.
pub fn shallow_view(task: &Task) -> Value {
    let mut value = serde_json::to_value(task).expect("task serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.insert("sub_tasks".into(), Value::Array(Vec::new()));
    }
    decorate_view(task, &mut value);
    value
}

fn decorate_view(task: &Task, value: &mut Value) {
    let Some(obj) = value.as_object_mut() else { return };
    obj.insert("actor".into(), Value::String(task.action.actor.clone()));
    obj.insert("estimated_time".into(), Value::from(task.est_time));
    if let Some(specs) = obj.get("specs").cloned() {
        obj.insert("spec".into(), specs);
    }
    if let Some(Value::Object(action)) = obj.get_mut("action") {
        for arg in &task.action.args {
            if !matches!(arg.role.as_str(), "verb" | "actor" | "args") {
                action.insert(arg.role.clone(), arg.value.clone());
            }
        }
    }
}

fn normalize_target(path: &DottedPath) -> Vec<String> {
    let mut segs = path.segments().to_vec();
    match segs[0].as_str() {
        "spec" => segs[0] = "specs".into(),
        "estimated_time" => segs[0] = "est_time".into(),
        _ => {}
    }
    segs
}

/// Writes every `target ← source` pair of `mapping` into a copy of `target`.
/// Sources are resolved against `bindings` by their first segment; target
/// paths create intermediate maps as needed.
pub fn apply_mapping(
    target: &Task,
    mapping: &BTreeMap<String, String>,
    bindings: &BTreeMap<String, Value>,
) -> Result<Task, MappingError> {
    let mut resolved = Vec::with_capacity(mapping.len());
    for (target_path, source_path) in mapping {
        let target_path = DottedPath::parse(target_path)?;
        let source = DottedPath::parse(source_path)?;
        let root = bindings
            .get(source.first())
            .ok_or_else(|| MappingError::UnboundReference(source.first().to_owned()))?;
        let value = match source.rest() {
            Some(rest) => resolve_path(root, &rest).map_err(|e| PathNotFound {
                path: source.to_string(),
                prefix: if e.prefix.is_empty() {
                    source.first().to_owned()
                } else {
                    format!("{}.{}", source.first(), e.prefix)
                },
            })?,
            None => root,
        };
        resolved.push((target_path, value.clone()));
    }
    let mut out = target.clone();
    for (path, value) in resolved {
        write_target(&mut out, &path, value)?;
    }
    Ok(out)
}

fn write_target(task: &mut Task, path: &DottedPath, value: Value) -> Result<(), MappingError> {
    let segs = normalize_target(path);
    let bad = |reason: &str| MappingError::BadValue {
        path: path.to_string(),
        reason: reason.to_owned(),
    };
    let as_string = |v: &Value| v.as_str().map(str::to_owned).ok_or_else(|| bad("expected a string"));
    match (segs[0].as_str(), segs.len()) {
        ("specs", _) => write_map(&mut task.specs, &segs[1..], value, path),
        ("context", _) => write_map(&mut task.context, &segs[1..], value, path),
        ("action", 2) => {
            match segs[1].as_str() {
                "verb" => task.action.verb = as_string(&value)?,
                "actor" => task.action.actor = as_string(&value)?,
                "args" => return Err(MappingError::InvalidTarget(path.to_string())),
                role => task.action.set_arg(role, value),
            }
            Ok(())
        }
        ("actor", 1) => {
            task.action.actor = as_string(&value)?;
            Ok(())
        }
        ("est_time", 1) => {
            task.est_time = value.as_u64().ok_or_else(|| bad("expected whole seconds"))?;
            Ok(())
        }
        ("actual_duration", 1) => {
            task.actual_duration = match value {
                Value::Null => None,
                v => Some(v.as_u64().ok_or_else(|| bad("expected whole seconds"))?),
            };
            Ok(())
        }
        ("task_name", 1) => {
            task.task_name = as_string(&value)?;
            Ok(())
        }
        _ => Err(MappingError::InvalidTarget(path.to_string())),
    }
}

fn write_map(
    map: &mut ValueMap,
    rest: &[String],
    value: Value,
    full: &DottedPath,
) -> Result<(), MappingError> {
    let bad = |reason: &str| MappingError::BadValue {
        path: full.to_string(),
        reason: reason.to_owned(),
    };
    match rest {
        [] => match value {
            Value::Object(obj) => {
                *map = obj.into_iter().collect();
                Ok(())
            }
            _ => Err(bad("whole-map target needs an object")),
        },
        [key] => {
            map.insert(key.clone(), value);
            Ok(())
        }
        [key, tail @ ..] => {
            let slot = map.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
            write_nested(slot, tail, value).map_err(|_| bad("intermediate value is not a map"))
        }
    }
}

fn write_nested(slot: &mut Value, rest: &[String], value: Value) -> Result<(), ()> {
    let obj = slot.as_object_mut().ok_or(())?;
    match rest {
        [] => unreachable!("write_map handles the empty tail"),
        [key] => {
            obj.insert(key.clone(), value);
            Ok(())
        }
        [key, tail @ ..] => {
            let next = obj.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
            write_nested(next, tail, value)
        }
    }
}
