//! Property checks shared by the property suite and the acceptance runner.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::{json, Value};

use vsa_core::agents::{AgentFunction, AgentRegistry};
use vsa_core::engine::propagate_failure;
use vsa_core::library::{similarity, CaseLibrary};
use vsa_core::remedy::{apply_remedy, RemedyAction, RemedyRuntime};
use vsa_core::scenario::{run_scenario, RunConfig, RunResult, ScenarioScript};
use vsa_core::situation::run_logics;
use vsa_core::task::{apply_mapping, deserialize_task, serialize_task, IdGen, ValueMap};
use vsa_core::world::{Effect, PredicateOp};
use vsa_core::{Action, Condition, Predicate, Scalar, Situation, Task, TaskStatus};

use super::scenario_dir;

pub const DEFAULT_CASES: u32 = 256;

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new(config).run(&strategy, test).map_err(|e| e.to_string())
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}"
}

fn path() -> impl Strategy<Value = String> {
    prop::collection::vec(ident(), 1..4).prop_map(|s| s.join("."))
}

fn leaf_value() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<bool>().prop_map(Value::from),
        (-1000i64..1000).prop_map(Value::from),
        "[a-zA-Z ]{0,12}".prop_map(Value::from),
        Just(Value::Null),
    ]
}

fn value_tree() -> impl Strategy<Value = Value> {
    leaf_value().prop_recursive(2, 12, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(Value::from),
            prop::collection::btree_map(ident(), inner, 0..3).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![
        any::<bool>().prop_map(Scalar::Bool),
        (-100i32..100).prop_map(|n| Scalar::Num(f64::from(n) / 2.0)),
        "[a-z]{1,6}".prop_map(Scalar::Text),
    ]
}

fn predicate() -> impl Strategy<Value = Predicate> {
    let op = prop_oneof![
        Just(PredicateOp::Eq),
        Just(PredicateOp::Ne),
        Just(PredicateOp::Lt),
        Just(PredicateOp::Ge),
        Just(PredicateOp::Exists),
        Just(PredicateOp::Absent),
    ];
    (path(), op, scalar(), -50i32..50).prop_map(|(p, op, v, n)| match op {
        PredicateOp::Exists | PredicateOp::Absent => Predicate::new(&p, op, None),
        PredicateOp::Lt | PredicateOp::Ge => Predicate::new(&p, op, Some(Scalar::Num(f64::from(n)))),
        _ => Predicate::new(&p, op, Some(v)),
    })
}

fn effect() -> impl Strategy<Value = Effect> {
    (path(), scalar(), 0u8..3, -20i32..20).prop_map(|(p, v, k, n)| match k {
        0 => Effect::set(&p, v),
        1 => Effect::clear(&p),
        _ => Effect::add(&p, f64::from(n)),
    })
}

fn condition() -> impl Strategy<Value = Condition> {
    (predicate(), 0u8..3).prop_map(|(p, k)| match k {
        0 => Condition::hard(p),
        1 => Condition::fail_skip(p),
        _ => Condition::context_gen(p),
    })
}

fn status() -> impl Strategy<Value = TaskStatus> {
    prop::sample::select(TaskStatus::ALL.to_vec())
}

fn node() -> impl Strategy<Value = Task> {
    (
        ident(),
        ident(),
        ident(),
        prop::collection::btree_map(ident(), value_tree(), 0..3),
        prop::collection::btree_map(ident(), leaf_value(), 0..3),
        prop::collection::vec(condition(), 0..2),
        prop::collection::vec(effect(), 0..2),
        prop::collection::vec(predicate(), 0..2),
        (0u64..10_000, prop::option::of(0u64..10_000)),
        prop::collection::btree_map(path(), path(), 0..2),
        status(),
    )
        .prop_map(|(name, actor, verb, specs, context, conditions, effects, goals, (est, actual), mapping, status)| {
            let mut t = Task::new("", name, Action::new(actor, verb));
            t.specs = specs.into_iter().collect();
            t.context = context.into_iter().collect();
            t.conditions = conditions;
            t.effects = effects;
            t.goals = goals;
            t.est_time = est;
            t.actual_duration = actual;
            t.mapping = mapping;
            t.status = status;
            t
        })
}

fn tree() -> impl Strategy<Value = Task> {
    node()
        .prop_recursive(3, 16, 3, |inner| {
            (node(), prop::collection::vec(inner, 0..3)).prop_map(|(mut parent, children)| {
                parent.sub_tasks = children;
                parent
            })
        })
        .prop_map(|mut root| {
            let mut n = 0;
            root.for_each_mut(&mut |t| {
                n += 1;
                t.id = format!("t{n}");
            });
            root.relink();
            root
        })
}

pub fn serialization_round_trips(cases: u32) -> Result<(), String> {
    check(cases, tree(), |task| {
        let text = serialize_task(&task);
        let back = deserialize_task(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&back, &task);
        prop_assert_eq!(serialize_task(&back), text);
        Ok(())
    })
}

fn spec_mapping() -> impl Strategy<Value = BTreeMap<String, String>> {
    prop::collection::btree_map(ident().prop_map(|k| format!("specs.{k}")), ident().prop_map(|k| format!("src.{k}")), 0..4)
}

pub fn mapping_is_idempotent_and_isolated(cases: u32) -> Result<(), String> {
    let inputs = (node(), spec_mapping(), prop::collection::btree_map(ident(), leaf_value(), 0..6));
    check(cases, inputs, |(task, mapping, source)| {
        let mut src: serde_json::Map<String, Value> = source.into_iter().collect();
        for s in mapping.values() {
            let key = s.trim_start_matches("src.").to_owned();
            src.entry(key).or_insert(json!("filled"));
        }
        let bindings = BTreeMap::from([("src".to_owned(), Value::Object(src.clone()))]);
        let once = apply_mapping(&task, &mapping, &bindings).unwrap();
        let twice = apply_mapping(&once, &mapping, &bindings).unwrap();
        prop_assert_eq!(&once, &twice);

        let targets: BTreeSet<String> = mapping.keys().map(|k| k.trim_start_matches("specs.").to_owned()).collect();
        for (target, source) in &mapping {
            let key = target.trim_start_matches("specs.");
            prop_assert_eq!(&once.specs[key], &src[source.trim_start_matches("src.")]);
        }
        for (k, v) in &task.specs {
            if !targets.contains(k) {
                prop_assert_eq!(once.specs.get(k), Some(v));
            }
        }
        let mut rest_before = task.clone();
        let mut rest_after = once.clone();
        rest_before.specs.clear();
        rest_after.specs.clear();
        prop_assert_eq!(rest_before, rest_after);
        Ok(())
    })
}

pub fn failure_propagation_touches_every_ancestor(cases: u32) -> Result<(), String> {
    check(cases, (tree(), any::<prop::sample::Index>()), |(task, pick)| {
        let ids: Vec<String> = task.preorder().iter().map(|t| t.id.clone()).collect();
        let id = pick.get(&ids).clone();
        let depth = {
            let mut d = 0;
            let mut cur = task.find(&id).unwrap().parent_task.clone();
            while let Some(p) = cur {
                d += 1;
                cur = task.find(&p).unwrap().parent_task.clone();
            }
            d
        };
        let mut root = task.clone();
        let updated = propagate_failure(&mut root, &id);
        prop_assert_eq!(updated.len(), depth);
        let mut child = id.clone();
        for a in &updated {
            prop_assert_eq!(root.find(&child).unwrap().parent_task.as_ref(), Some(a));
            prop_assert_eq!(root.find(a).unwrap().status, TaskStatus::Failed);
            child = a.clone();
        }
        Ok(())
    })
}

fn small_context() -> impl Strategy<Value = ValueMap> {
    let value = prop_oneof![
        any::<bool>().prop_map(Value::from),
        (0i64..3).prop_map(Value::from),
        prop::sample::select(vec!["rain", "light rain", "dry", "wet seat", "passenger wet"]).prop_map(Value::from),
    ];
    prop::collection::btree_map(prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(String::from), value, 0..5)
        .prop_map(|m| m.into_iter().collect())
}

/// Independent reading of the metric: shared equal → 1, shared text →
/// token Jaccard, otherwise 0, averaged over the key union.
pub fn oracle_similarity(a: &ValueMap, b: &ValueMap) -> f64 {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    if keys.is_empty() {
        return 1.0;
    }
    let mut total = 0.0;
    for k in &keys {
        total += match (a.get(*k), b.get(*k)) {
            (Some(x), Some(y)) if x == y => 1.0,
            (Some(Value::String(x)), Some(Value::String(y))) => {
                let tx: BTreeSet<String> = x.split_whitespace().map(str::to_lowercase).collect();
                let ty: BTreeSet<String> = y.split_whitespace().map(str::to_lowercase).collect();
                tx.intersection(&ty).count() as f64 / tx.union(&ty).count() as f64
            }
            _ => 0.0,
        };
    }
    total / keys.len() as f64
}

pub fn similarity_bounds_symmetry_identity(cases: u32) -> Result<(), String> {
    check(cases, (small_context(), small_context()), |(a, b)| {
        let s = similarity(&a, &b).value;
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, similarity(&b, &a).value);
        prop_assert_eq!(similarity(&a, &a).value, 1.0);
        prop_assert!((s - oracle_similarity(&a, &b)).abs() < 1e-12);
        Ok(())
    })
}

pub fn retrieval_agrees_with_brute_force(cases: u32) -> Result<(), String> {
    let inputs = (
        prop::collection::vec((prop::sample::select(vec!["x", "y"]), small_context()), 0..20),
        small_context(),
        prop::sample::select(vec![0.0, 0.25, 0.5, 0.6, 1.0]),
    );
    check(cases, inputs, |(records, query, threshold)| {
        let lib = CaseLibrary::in_memory();
        for (name, ctx) in &records {
            let mut s = Situation::header(name, "", ctx.clone());
            s.remedy.push(RemedyAction::new("abort this_task"));
            lib.store_situation(&s).unwrap();
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, (name, ctx)) in records.iter().enumerate() {
            if *name != "x" {
                continue;
            }
            let score = oracle_similarity(ctx, &query);
            if score + 1e-12 < threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| score >= b - 1e-12) {
                best = Some((i, score));
            }
        }
        let got = lib.retrieve_similar_situation("x", &query, threshold);
        match (best, got) {
            (None, None) => {}
            (Some((i, score)), Some(m)) => {
                prop_assert!((m.score.value - score).abs() < 1e-12);
                prop_assert_eq!(&m.situation.context, &records[i].1);
                prop_assert_eq!(m.case_id, format!("case-{:06}", i + 1));
            }
            (b, g) => prop_assert!(false, "oracle {:?} vs library {:?}", b, g.map(|m| m.case_id)),
        }
        Ok(())
    })
}

pub fn logics_never_overwrite_existing_context(cases: u32) -> Result<(), String> {
    let key = || prop::sample::select(vec!["k0", "k1", "k2", "k3"]).prop_map(String::from);
    let inputs = (prop::collection::btree_map(key(), leaf_value(), 0..4), prop::collection::btree_set(key(), 0..4));
    check(cases, inputs, |(preset, keys)| {
        let mut agents = AgentRegistry::new();
        agents.register(AgentFunction::pure("probe", "value", |_| Ok(json!("fresh")))).unwrap();
        let mut s = Situation::header("probe", "", preset.clone().into_iter().collect());
        for k in &keys {
            s.logics.insert(k.clone(), "probe.value".into());
        }
        let out = run_logics(&mut s, &mut agents);
        for (k, v) in &preset {
            prop_assert_eq!(&s.context[k], v);
        }
        for k in &keys {
            prop_assert!(s.context.contains_key(k));
            if !preset.contains_key(k) {
                prop_assert_eq!(&s.context[k], &json!("fresh"));
                prop_assert!(out.written.contains(k));
            } else {
                prop_assert!(out.carried_over.contains(k));
            }
        }
        Ok(())
    })
}

fn drive_plan() -> Task {
    let mut root = Task::new("trip", "trip_task", Action::new("vda", "trip")).with_status(TaskStatus::Executing);
    for (i, status) in [TaskStatus::Finished, TaskStatus::Executing, TaskStatus::Planned, TaskStatus::Planned]
        .into_iter()
        .enumerate()
    {
        root = root.with_child(Task::new(format!("c{i}"), format!("step{i}_task"), Action::new("vda", "wait")).with_status(status));
    }
    root
}

fn good_action(i: usize) -> RemedyAction {
    let extra = Task::new("n", "extra_task", Action::new("vda", "wait")).with_status(TaskStatus::Planned);
    if i == 0 {
        return RemedyAction::new("add after this_task").with(extra);
    }
    RemedyAction::new("add after prev").reference("prev", &format!("new_task:{}", i - 1)).with(extra)
}

fn bad_action(kind: u8) -> RemedyAction {
    match kind {
        0 => RemedyAction::new("frobnicate this_task"),
        1 => RemedyAction::new("delete done").reference("done", "task:step0_task"),
        2 => RemedyAction::new("modify ghost").reference("ghost", "task:ghost_task").map("specs.x", "ghost.id"),
        3 => RemedyAction::new("abort later").reference("later", "task:step3_task"),
        _ => RemedyAction::new("add after nowhere")
            .reference("nowhere", "new_task:99")
            .with(Task::new("n", "extra_task", Action::new("vda", "wait"))),
    }
}

pub fn remedies_apply_all_or_nothing(cases: u32) -> Result<(), String> {
    check(cases, (0usize..4, 0usize..3, 0u8..5), |(good_before, good_after, kind)| {
        let plan = drive_plan();
        let situation = Situation::header("s", "c1", ValueMap::new());
        let rt = RemedyRuntime { situation: &situation, executing: Some("c1") };
        let mut remedy: Vec<RemedyAction> = (0..good_before).map(good_action).collect();
        remedy.push(bad_action(kind));
        remedy.extend((0..good_after).map(|i| good_action(good_before + i)));
        let mut ids = IdGen::new("r");
        let before_ids = ids.clone();
        let err = apply_remedy(&plan, &remedy, &rt, &mut ids).unwrap_err();
        prop_assert_eq!(err.index, good_before);
        prop_assert_eq!(ids.clone().next_id(), before_ids.clone().next_id());
        prop_assert_eq!(plan, drive_plan());

        let ok: Vec<RemedyAction> = (0..good_before).map(good_action).collect();
        let applied = apply_remedy(&drive_plan(), &ok, &rt, &mut ids).unwrap();
        prop_assert_eq!(applied.plan.sub_tasks.len(), 4 + good_before);
        Ok(())
    })
}

/// Two runs of each bundled scenario produce identical event streams.
pub fn scenario_runs_are_deterministic() -> Result<(), String> {
    for name in ["window_leak.json", "pharmacy.json"] {
        let script = ScenarioScript::load(&scenario_dir().join(name)).map_err(|e| e.to_string())?;
        let a = run_scenario(&script, RunConfig::default()).map_err(|e| e.to_string())?;
        let b = run_scenario(&script, RunConfig::default()).map_err(|e| e.to_string())?;
        let kinds = |r: &RunResult| r.events.iter().map(|e| e.kind).collect::<Vec<_>>();
        if kinds(&a) != kinds(&b) {
            return Err(format!("{name}: event kinds differ"));
        }
        if a.events != b.events || a.plan != b.plan {
            return Err(format!("{name}: events or plan differ"));
        }
    }
    Ok(())
}
