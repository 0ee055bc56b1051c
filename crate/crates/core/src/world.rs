//! Flat fact store with predicates and effects.
//!
//! Facts are `dotted.path → scalar`. A predicate or effect value of the form
//! `"@path:<dotted>"` reads another fact; `"@task:<dotted>"` is bound against
//! the owning task before evaluation (see [`Predicate::bind_task`]).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::task::{resolve_path, DottedPath};

pub const PATH_SENTINEL: &str = "@path:";
pub const TASK_SENTINEL: &str = "@task:";

#[derive(Clone, Debug, PartialEq)]
pub enum Scalar {
    Bool(bool),
    Num(f64),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn from_value(value: &Value) -> Option<Scalar> {
        match value {
            Value::Bool(b) => Some(Scalar::Bool(*b)),
            Value::Number(n) => n.as_f64().map(Scalar::Num),
            Value::String(s) => Some(Scalar::Text(s.clone())),
            _ => None,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Scalar::Bool(b) => Value::Bool(*b),
            Scalar::Num(n) => number_value(*n),
            Scalar::Text(s) => Value::String(s.clone()),
        }
    }

    fn sentinel(&self, prefix: &str) -> Option<&str> {
        self.as_str().and_then(|s| s.strip_prefix(prefix))
    }
}

/// Whole numbers render without a fractional part.
pub(crate) fn number_value(n: f64) -> Value {
    if n.fract() == 0.0 && n.abs() < 9.0e15 {
        Value::from(n as i64)
    } else {
        serde_json::Number::from_f64(n).map(Value::Number).unwrap_or(Value::Null)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_value())
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

impl From<f64> for Scalar {
    fn from(n: f64) -> Self {
        Scalar::Num(n)
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::Num(n as f64)
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Text(s.to_owned())
    }
}

impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Text(s)
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Scalar::from_value(&value)
            .ok_or_else(|| serde::de::Error::custom(format!("expected bool, number or text, got {value}")))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("type mismatch at `{path}`: {detail}")]
    TypeMismatch { path: String, detail: String },
    #[error("`{0}` cannot be bound: {1}")]
    Unbound(String, String),
    #[error("invalid fact path `{0}`")]
    InvalidPath(String),
    #[error("initial state must be a flat object of path to scalar: {0}")]
    BadDocument(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub facts: BTreeMap<String, Scalar>,
    #[serde(default)]
    pub clock: u64,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from a flat `{path: scalar}` object.
    pub fn from_json(value: &Value) -> Result<Self, WorldError> {
        let obj = value
            .as_object()
            .ok_or_else(|| WorldError::BadDocument("not an object".into()))?;
        let mut state = WorldState::new();
        for (path, v) in obj {
            DottedPath::parse(path).map_err(|_| WorldError::InvalidPath(path.clone()))?;
            let scalar = Scalar::from_value(v)
                .ok_or_else(|| WorldError::BadDocument(format!("`{path}` is not a scalar")))?;
            state.facts.insert(path.clone(), scalar);
        }
        Ok(state)
    }

    pub fn with(mut self, path: &str, value: impl Into<Scalar>) -> Self {
        self.facts.insert(path.to_owned(), value.into());
        self
    }

    pub fn get(&self, path: &str) -> Option<&Scalar> {
        self.facts.get(path)
    }

    pub fn advance(&mut self, secs: u64) {
        self.clock = self.clock.saturating_add(secs);
    }

    pub fn facts_json(&self) -> Value {
        Value::Object(self.facts.iter().map(|(k, v)| (k.clone(), v.to_value())).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Exists,
    Absent,
}

impl PredicateOp {
    pub fn is_ordering(self) -> bool {
        matches!(self, PredicateOp::Lt | PredicateOp::Le | PredicateOp::Gt | PredicateOp::Ge)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub path: DottedPath,
    pub op: PredicateOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Scalar>,
}

impl Predicate {
    pub fn new(path: &str, op: PredicateOp, value: Option<Scalar>) -> Self {
        Predicate {
            path: DottedPath::parse(path).expect("valid predicate path"),
            op,
            value,
        }
    }

    pub fn eq(path: &str, value: impl Into<Scalar>) -> Self {
        Self::new(path, PredicateOp::Eq, Some(value.into()))
    }

    pub fn exists(path: &str) -> Self {
        Self::new(path, PredicateOp::Exists, None)
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.op, &self.value) {
            (PredicateOp::Exists | PredicateOp::Absent, Some(_)) => {
                Err("exists/absent take no value".into())
            }
            (PredicateOp::Exists | PredicateOp::Absent, None) => Ok(()),
            (_, None) => Err("comparison needs a value".into()),
            (op, Some(v)) if op.is_ordering() => match v {
                Scalar::Num(_) => Ok(()),
                Scalar::Text(s) if s.starts_with(PATH_SENTINEL) || s.starts_with(TASK_SENTINEL) => {
                    Ok(())
                }
                _ => Err("ordering comparison needs a numeric value".into()),
            },
            _ => Ok(()),
        }
    }

    /// Replaces an `@task:` value with the matching scalar from `view`.
    pub fn bind_task(&self, view: &Value) -> Result<Predicate, WorldError> {
        Ok(Predicate {
            value: bind_value(self.value.as_ref(), view)?,
            ..self.clone()
        })
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = serde_json::to_value(self.op).unwrap();
        let op = op.as_str().unwrap_or("?");
        match &self.value {
            Some(v) => write!(f, "{} {} {}", self.path, op, v),
            None => write!(f, "{} {}", self.path, op),
        }
    }
}

fn bind_value(value: Option<&Scalar>, view: &Value) -> Result<Option<Scalar>, WorldError> {
    let Some(v) = value else { return Ok(None) };
    let Some(path) = v.sentinel(TASK_SENTINEL) else { return Ok(Some(v.clone())) };
    let dotted = DottedPath::parse(path).map_err(|e| WorldError::Unbound(path.into(), e.to_string()))?;
    let found = resolve_path(view, &dotted).map_err(|e| WorldError::Unbound(path.into(), e.to_string()))?;
    Scalar::from_value(found)
        .map(Some)
        .ok_or_else(|| WorldError::Unbound(path.into(), "value is not a scalar".into()))
}

/// Resolves an `@path:` value against the state. `Ok(None)` means the
/// referenced fact is absent.
fn deref<'a>(state: &'a WorldState, value: &'a Scalar) -> Option<&'a Scalar> {
    match value.sentinel(PATH_SENTINEL) {
        Some(path) => state.get(path),
        None => Some(value),
    }
}

fn scalars_equal(a: &Scalar, b: &Scalar) -> bool {
    match (a, b) {
        (Scalar::Num(x), Scalar::Num(y)) => x == y,
        _ => a == b,
    }
}

pub fn eval_predicate(state: &WorldState, p: &Predicate) -> Result<bool, WorldError> {
    let fact = state.get(&p.path.to_string());
    match p.op {
        PredicateOp::Exists => return Ok(fact.is_some()),
        PredicateOp::Absent => return Ok(fact.is_none()),
        _ => {}
    }
    let Some(fact) = fact else { return Ok(false) };
    let Some(raw) = p.value.as_ref() else { return Ok(false) };
    if raw.sentinel(TASK_SENTINEL).is_some() {
        return Err(WorldError::Unbound(raw.to_string(), "task reference was not bound".into()));
    }
    let Some(value) = deref(state, raw) else { return Ok(false) };
    match p.op {
        PredicateOp::Eq => Ok(scalars_equal(fact, value)),
        PredicateOp::Ne => Ok(!scalars_equal(fact, value)),
        op => {
            let (Some(x), Some(y)) = (fact.as_f64(), value.as_f64()) else {
                return Err(WorldError::TypeMismatch {
                    path: p.path.to_string(),
                    detail: format!("cannot order {fact} against {value}"),
                });
            };
            Ok(match op {
                PredicateOp::Lt => x < y,
                PredicateOp::Le => x <= y,
                PredicateOp::Gt => x > y,
                PredicateOp::Ge => x >= y,
                _ => unreachable!(),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectOp {
    Set,
    Clear,
    Add,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub path: DottedPath,
    pub op: EffectOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Scalar>,
}

impl Effect {
    pub fn set(path: &str, value: impl Into<Scalar>) -> Self {
        Effect {
            path: DottedPath::parse(path).expect("valid effect path"),
            op: EffectOp::Set,
            value: Some(value.into()),
        }
    }

    pub fn clear(path: &str) -> Self {
        Effect {
            path: DottedPath::parse(path).expect("valid effect path"),
            op: EffectOp::Clear,
            value: None,
        }
    }

    pub fn add(path: &str, amount: f64) -> Self {
        Effect {
            path: DottedPath::parse(path).expect("valid effect path"),
            op: EffectOp::Add,
            value: Some(Scalar::Num(amount)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.op, &self.value) {
            (EffectOp::Set, None) => Err("set needs a value".into()),
            (EffectOp::Clear, Some(_)) => Err("clear takes no value".into()),
            (EffectOp::Add, Some(Scalar::Num(_))) => Ok(()),
            (EffectOp::Add, Some(Scalar::Text(s)))
                if s.starts_with(PATH_SENTINEL) || s.starts_with(TASK_SENTINEL) =>
            {
                Ok(())
            }
            (EffectOp::Add, _) => Err("add needs a numeric value".into()),
            _ => Ok(()),
        }
    }

    pub fn bind_task(&self, view: &Value) -> Result<Effect, WorldError> {
        Ok(Effect {
            value: bind_value(self.value.as_ref(), view)?,
            ..self.clone()
        })
    }
}

/// Returns a new state with exactly one fact changed. The clock is untouched.
pub fn apply_effect(state: &WorldState, e: &Effect) -> Result<WorldState, WorldError> {
    let mut next = state.clone();
    apply_effect_in_place(&mut next, e)?;
    Ok(next)
}

pub fn apply_effect_in_place(state: &mut WorldState, e: &Effect) -> Result<(), WorldError> {
    let path = e.path.to_string();
    if let Some(v) = &e.value {
        if v.sentinel(TASK_SENTINEL).is_some() {
            return Err(WorldError::Unbound(v.to_string(), "task reference was not bound".into()));
        }
    }
    let resolved = match &e.value {
        Some(v) => match deref(state, v) {
            Some(s) => Some(s.clone()),
            None => {
                return Err(WorldError::Unbound(v.to_string(), "referenced fact is absent".into()))
            }
        },
        None => None,
    };
    match e.op {
        EffectOp::Set => {
            let v = resolved.ok_or_else(|| WorldError::TypeMismatch {
                path: path.clone(),
                detail: "set without value".into(),
            })?;
            state.facts.insert(path, v);
        }
        EffectOp::Clear => {
            state.facts.remove(&path);
        }
        EffectOp::Add => {
            let amount = resolved.as_ref().and_then(Scalar::as_f64).ok_or_else(|| {
                WorldError::TypeMismatch { path: path.clone(), detail: "add needs a number".into() }
            })?;
            let current = match state.get(&path) {
                None => 0.0,
                Some(Scalar::Num(n)) => *n,
                Some(other) => {
                    return Err(WorldError::TypeMismatch {
                        path,
                        detail: format!("cannot add to {other}"),
                    })
                }
            };
            state.facts.insert(path, Scalar::Num(current + amount));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalResult {
    pub goal: Predicate,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    pub passed: bool,
    pub results: Vec<GoalResult>,
}

impl GoalReport {
    pub fn first_failure(&self) -> Option<&GoalResult> {
        self.results.iter().find(|r| !r.passed)
    }
}

pub fn check_goals(state: &WorldState, goals: &[Predicate]) -> GoalReport {
    let results: Vec<GoalResult> = goals
        .iter()
        .map(|goal| match eval_predicate(state, goal) {
            Ok(passed) => GoalResult { goal: goal.clone(), passed, error: None },
            Err(e) => GoalResult { goal: goal.clone(), passed: false, error: Some(e.to_string()) },
        })
        .collect();
    GoalReport {
        passed: results.iter().all(|r| r.passed),
        results,
    }
}
