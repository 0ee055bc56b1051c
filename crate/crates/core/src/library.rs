//! Append-only case library for executed tasks and handled situations.
//!
//! Cases live one JSON file per record under `cases/situations/` and
//! `cases/tasks/`; seeded templates under `templates/` are JSON arrays of
//! tasks. Readers take an immutable index snapshot; stores go through a single
//! writer lock and publish a new snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::situation::Situation;
use crate::task::{task_from_value, Task, TaskStatus, ValueMap};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    Task,
    Situation,
}

impl CaseKind {
    fn dir(self) -> &'static str {
        match self {
            CaseKind::Task => "tasks",
            CaseKind::Situation => "situations",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub kind: CaseKind,
    pub name: String,
    pub context: ValueMap,
    pub payload: Value,
    /// Wall-clock seconds since the epoch; storage metadata only.
    pub stored_at: u64,
    pub seq: u64,
}

impl CaseRecord {
    pub fn situation(&self) -> Option<Situation> {
        (self.kind == CaseKind::Situation)
            .then(|| serde_json::from_value(self.payload.clone()).ok())
            .flatten()
    }

    pub fn task(&self) -> Option<Task> {
        (self.kind == CaseKind::Task).then(|| task_from_value(&self.payload).ok()).flatten()
    }

    pub fn task_status(&self) -> Option<TaskStatus> {
        self.payload
            .get("status")
            .and_then(Value::as_str)
            .and_then(|s| s.parse().ok())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub per_key: BTreeMap<String, f64>,
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// Contribution of one shared key.
pub fn value_similarity(a: &Value, b: &Value) -> f64 {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            if x.as_f64() == y.as_f64() {
                1.0
            } else {
                0.0
            }
        }
        (Value::String(x), Value::String(y)) => {
            if x == y {
                return 1.0;
            }
            let (tx, ty) = (tokens(x), tokens(y));
            let union = tx.union(&ty).count();
            if union == 0 {
                1.0
            } else {
                tx.intersection(&ty).count() as f64 / union as f64
            }
        }
        _ if a == b => 1.0,
        _ => 0.0,
    }
}

/// Equal-weight union metric: each key of either context contributes
/// [`value_similarity`] if shared, 0 otherwise; the total is averaged.
pub fn similarity(a: &ValueMap, b: &ValueMap) -> SimilarityScore {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    if keys.is_empty() {
        return SimilarityScore { value: 1.0, per_key: BTreeMap::new() };
    }
    let per_key: BTreeMap<String, f64> = keys
        .iter()
        .map(|k| {
            let c = match (a.get(*k), b.get(*k)) {
                (Some(x), Some(y)) => value_similarity(x, y),
                _ => 0.0,
            };
            ((*k).clone(), c)
        })
        .collect();
    let value = per_key.values().sum::<f64>() / per_key.len() as f64;
    SimilarityScore { value, per_key }
}

/// Whether retrieval scoring fans out across threads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

/// Scores every record's context against `ctx`.
pub fn score_records(records: &[Arc<CaseRecord>], ctx: &ValueMap, mode: Parallelism) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    if mode == Parallelism::Parallel {
        return records.par_iter().map(|r| similarity(&r.context, ctx).value).collect();
    }
    let _ = mode;
    records.iter().map(|r| similarity(&r.context, ctx).value).collect()
}

/// Index of the highest-scoring record at or above `threshold`; ties go to the
/// later (more recent) record.
pub fn best_match(
    records: &[Arc<CaseRecord>],
    ctx: &ValueMap,
    threshold: f64,
    mode: Parallelism,
) -> Option<(usize, f64)> {
    let scores = score_records(records, ctx, mode);
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s < threshold {
            continue;
        }
        let better = match best {
            None => true,
            Some((j, b)) => s > b || (s == b && records[i].seq > records[j].seq),
        };
        if better {
            best = Some((i, s));
        }
    }
    best
}

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("storage failure at {path}: {message}")]
    StorageFailure { path: String, message: String },
    #[error("case `{0}` payload is invalid: {1}")]
    InvalidPayload(String, String),
}

impl LibraryError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        LibraryError::StorageFailure { path: path.display().to_string(), message: e.to_string() }
    }
}

/// Planning templates keyed by task name.
pub trait TemplateSource: Sync {
    /// Best template or archived case for `task_name` under `ctx`, deep-copied.
    fn template_for(&self, task_name: &str, ctx: &ValueMap) -> Option<Task>;
    /// Whether a seeded template exists for `task_name`.
    fn knows(&self, task_name: &str) -> bool;
}

#[derive(Debug, Clone)]
pub struct SituationMatch {
    pub case_id: String,
    pub situation: Situation,
    pub score: SimilarityScore,
}

#[derive(Default)]
struct Index {
    records: Vec<Arc<CaseRecord>>,
    templates: Vec<Arc<Task>>,
}

struct Inner {
    root: Option<PathBuf>,
    snapshot: RwLock<Arc<Index>>,
    writer: Mutex<()>,
    parallelism: Parallelism,
    template_threshold: f64,
}

#[derive(Clone)]
pub struct CaseLibrary {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for CaseLibrary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaseLibrary")
            .field("root", &self.inner.root)
            .field("records", &self.len())
            .finish()
    }
}

fn read_json(path: &Path) -> Result<Value, LibraryError> {
    let text = fs::read_to_string(path).map_err(|e| LibraryError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LibraryError::io(path, e))
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, LibraryError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| LibraryError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Reads a template file: a JSON array of tasks, or a single task.
pub fn load_template_file(path: &Path) -> Result<Vec<Task>, LibraryError> {
    let value = read_json(path)?;
    let items = match value {
        Value::Array(items) => items,
        other => vec![other],
    };
    items
        .iter()
        .map(|v| {
            task_from_value(v)
                .map_err(|e| LibraryError::InvalidPayload(path.display().to_string(), e.to_string()))
        })
        .collect()
}

impl CaseLibrary {
    fn with_root(root: Option<PathBuf>, index: Index) -> Self {
        CaseLibrary {
            inner: Arc::new(Inner {
                root,
                snapshot: RwLock::new(Arc::new(index)),
                writer: Mutex::new(()),
                parallelism: Parallelism::default(),
                template_threshold: 0.0,
            }),
        }
    }

    pub fn in_memory() -> Self {
        Self::with_root(None, Index::default())
    }

    /// Opens (creating if needed) a library directory and rebuilds the index.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, LibraryError> {
        let dir = dir.as_ref().to_path_buf();
        for kind in [CaseKind::Situation, CaseKind::Task] {
            let sub = dir.join("cases").join(kind.dir());
            fs::create_dir_all(&sub).map_err(|e| LibraryError::io(&sub, e))?;
        }
        let mut index = Index::default();
        for kind in [CaseKind::Situation, CaseKind::Task] {
            for file in json_files(&dir.join("cases").join(kind.dir()))? {
                let record: CaseRecord = serde_json::from_value(read_json(&file)?)
                    .map_err(|e| LibraryError::InvalidPayload(file.display().to_string(), e.to_string()))?;
                index.records.push(Arc::new(record));
            }
        }
        index.records.sort_by_key(|r| r.seq);
        for file in json_files(&dir.join("templates"))? {
            index.templates.extend(load_template_file(&file)?.into_iter().map(Arc::new));
        }
        Ok(Self::with_root(Some(dir), index))
    }

    /// Returns a handle sharing storage but with different retrieval settings.
    pub fn configured(&self, parallelism: Parallelism, template_threshold: f64) -> Self {
        let snapshot = self.snapshot();
        CaseLibrary {
            inner: Arc::new(Inner {
                root: self.inner.root.clone(),
                snapshot: RwLock::new(snapshot),
                writer: Mutex::new(()),
                parallelism,
                template_threshold,
            }),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.inner.root.as_deref()
    }

    pub fn parallelism(&self) -> Parallelism {
        self.inner.parallelism
    }

    fn snapshot(&self) -> Arc<Index> {
        self.inner.snapshot.read().expect("index lock").clone()
    }

    fn publish(&self, f: impl FnOnce(&mut Index)) {
        let mut guard = self.inner.snapshot.write().expect("index lock");
        let mut next = Index {
            records: guard.records.clone(),
            templates: guard.templates.clone(),
        };
        f(&mut next);
        *guard = Arc::new(next);
    }

    pub fn len(&self) -> usize {
        self.snapshot().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, kind: CaseKind) -> usize {
        self.snapshot().records.iter().filter(|r| r.kind == kind).count()
    }

    pub fn records(&self) -> Vec<Arc<CaseRecord>> {
        self.snapshot().records.clone()
    }

    pub fn templates(&self) -> Vec<Task> {
        self.snapshot().templates.iter().map(|t| (**t).clone()).collect()
    }

    pub fn add_templates(&self, templates: impl IntoIterator<Item = Task>) {
        let templates: Vec<Arc<Task>> = templates.into_iter().map(Arc::new).collect();
        let _w = self.inner.writer.lock().expect("writer lock");
        self.publish(|idx| idx.templates.extend(templates));
    }

    pub fn clear_templates(&self) {
        let _w = self.inner.writer.lock().expect("writer lock");
        self.publish(|idx| idx.templates.clear());
    }

    /// Persists a record and returns its new id. Ids and sequence numbers are
    /// assigned here; existing files are never overwritten.
    pub fn store_case(
        &self,
        kind: CaseKind,
        name: &str,
        context: ValueMap,
        payload: Value,
    ) -> Result<String, LibraryError> {
        let _w = self.inner.writer.lock().expect("writer lock");
        let seq = self.snapshot().records.last().map_or(1, |r| r.seq + 1);
        let record = CaseRecord {
            id: format!("case-{seq:06}"),
            kind,
            name: name.to_owned(),
            context,
            payload,
            stored_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            seq,
        };
        if let Some(root) = &self.inner.root {
            let path = root.join("cases").join(kind.dir()).join(format!("{}.json", record.id));
            let text = serde_json::to_string_pretty(&record).map_err(|e| LibraryError::io(&path, e))?;
            let mut file = fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&path)
                .map_err(|e| LibraryError::io(&path, e))?;
            file.write_all(text.as_bytes()).map_err(|e| LibraryError::io(&path, e))?;
        }
        let id = record.id.clone();
        self.publish(|idx| idx.records.push(Arc::new(record)));
        Ok(id)
    }

    pub fn store_situation(&self, situation: &Situation) -> Result<String, LibraryError> {
        let payload = serde_json::to_value(situation)
            .map_err(|e| LibraryError::InvalidPayload(situation.name.clone(), e.to_string()))?;
        self.store_case(CaseKind::Situation, &situation.name, situation.context.clone(), payload)
    }

    /// Saves a deep snapshot of an executed task.
    pub fn archive_task(&self, task: &Task) -> Result<String, LibraryError> {
        let payload = serde_json::to_value(task)
            .map_err(|e| LibraryError::InvalidPayload(task.id.clone(), e.to_string()))?;
        self.store_case(CaseKind::Task, &task.task_name, task.context.clone(), payload)
    }

    pub fn fetch(&self, id: &str) -> Option<Arc<CaseRecord>> {
        self.snapshot().records.iter().find(|r| r.id == id).cloned()
    }

    fn candidates(&self, kind: CaseKind, name: &str) -> Vec<Arc<CaseRecord>> {
        self.snapshot()
            .records
            .iter()
            .filter(|r| r.kind == kind && r.name == name)
            .cloned()
            .collect()
    }

    pub fn retrieve_similar_situation(
        &self,
        name: &str,
        context: &ValueMap,
        threshold: f64,
    ) -> Option<SituationMatch> {
        self.retrieve_similar_situation_excluding(name, context, threshold, &[])
    }

    /// Like [`retrieve_similar_situation`](Self::retrieve_similar_situation)
    /// but ignoring the listed case ids.
    pub fn retrieve_similar_situation_excluding(
        &self,
        name: &str,
        context: &ValueMap,
        threshold: f64,
        excluded: &[String],
    ) -> Option<SituationMatch> {
        let candidates: Vec<Arc<CaseRecord>> = self
            .candidates(CaseKind::Situation, name)
            .into_iter()
            .filter(|r| !excluded.contains(&r.id))
            .collect();
        let (i, _) = best_match(&candidates, context, threshold, self.inner.parallelism)?;
        let record = &candidates[i];
        Some(SituationMatch {
            case_id: record.id.clone(),
            situation: record.situation()?,
            score: similarity(&record.context, context),
        })
    }

    /// Most recent situation case of a class; its logics define the class.
    pub fn latest_situation(&self, name: &str) -> Option<Situation> {
        self.candidates(CaseKind::Situation, name)
            .iter()
            .rev()
            .find_map(|r| r.situation())
    }

    /// Situation cases filtered by name and scored against `context`, best first.
    pub fn query_situations(
        &self,
        name: Option<&str>,
        context: &ValueMap,
        min_score: f64,
    ) -> Vec<(Arc<CaseRecord>, SimilarityScore)> {
        let mut out: Vec<(Arc<CaseRecord>, SimilarityScore)> = self
            .snapshot()
            .records
            .iter()
            .filter(|r| r.kind == CaseKind::Situation && name.is_none_or(|n| r.name == n))
            .map(|r| (r.clone(), similarity(&r.context, context)))
            .filter(|(_, s)| s.value >= min_score)
            .collect();
        out.sort_by(|a, b| {
            b.1.value.total_cmp(&a.1.value).then(b.0.seq.cmp(&a.0.seq))
        });
        out
    }

    /// Best planning source for a task: seeded templates plus finished
    /// archived tasks of the same name. Ties prefer archived, then recent.
    pub fn retrieve_template(&self, task_name: &str, context: &ValueMap) -> Option<Task> {
        let snapshot = self.snapshot();
        let mut best: Option<((f64, bool, u64), Task)> = None;
        let mut consider = |key: (f64, bool, u64), task: &dyn Fn() -> Option<Task>| {
            if key.0 < self.inner.template_threshold {
                return;
            }
            let better = match &best {
                None => true,
                Some((b, _)) => {
                    key.0 > b.0 || (key.0 == b.0 && (key.1, key.2) > (b.1, b.2))
                }
            };
            if better {
                if let Some(t) = task() {
                    best = Some((key, t));
                }
            }
        };
        for (i, template) in snapshot.templates.iter().enumerate() {
            if template.task_name == task_name {
                let score = similarity(&template.context, context).value;
                consider((score, false, i as u64), &|| Some((**template).clone()));
            }
        }
        let archived: Vec<Arc<CaseRecord>> = snapshot
            .records
            .iter()
            .filter(|r| {
                r.kind == CaseKind::Task
                    && r.name == task_name
                    && r.task_status() == Some(TaskStatus::Finished)
            })
            .cloned()
            .collect();
        let scores = score_records(&archived, context, self.inner.parallelism);
        for (record, score) in archived.iter().zip(scores) {
            consider((score, true, record.seq), &|| record.task());
        }
        best.map(|(_, t)| t)
    }
}

impl TemplateSource for CaseLibrary {
    fn template_for(&self, task_name: &str, ctx: &ValueMap) -> Option<Task> {
        self.retrieve_template(task_name, ctx)
    }

    fn knows(&self, task_name: &str) -> bool {
        self.snapshot().templates.iter().any(|t| t.task_name == task_name)
    }
}
