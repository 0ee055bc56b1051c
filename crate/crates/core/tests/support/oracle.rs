//! Random plans and a naive fold oracle for the validator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use vsa_core::agents::{AgentFunction, AgentRegistry};
use vsa_core::library::Parallelism;
use vsa_core::task::ConditionKind;
use vsa_core::validator::{validate_batch, validate_plan, Outcome, ValidationJob};
use vsa_core::world::{apply_effect, check_goals, eval_predicate, EffectOp, PredicateOp};
use vsa_core::{Action, Condition, Effect, Predicate, Scalar, Task, TaskStatus, WorldState};

const PATHS: [&str; 3] = ["w.a", "w.b", "w.c"];

fn scalar(rng: &mut ChaCha8Rng) -> Scalar {
    match rng.random_range(0..3) {
        0 => Scalar::Bool(rng.random()),
        1 => Scalar::Num(f64::from(rng.random_range(0..4))),
        _ => Scalar::Text(["x", "y"][rng.random_range(0..2)].into()),
    }
}

fn value(rng: &mut ChaCha8Rng) -> Scalar {
    if rng.random_ratio(1, 8) {
        Scalar::Text(format!("@path:{}", PATHS[rng.random_range(0..3)]))
    } else {
        scalar(rng)
    }
}

fn predicate(rng: &mut ChaCha8Rng) -> Predicate {
    let path = PATHS[rng.random_range(0..3)];
    let ops = [
        PredicateOp::Eq,
        PredicateOp::Ne,
        PredicateOp::Lt,
        PredicateOp::Le,
        PredicateOp::Gt,
        PredicateOp::Ge,
        PredicateOp::Exists,
        PredicateOp::Absent,
    ];
    let op = ops[rng.random_range(0..ops.len())];
    let v = match op {
        PredicateOp::Exists | PredicateOp::Absent => None,
        PredicateOp::Eq | PredicateOp::Ne => Some(value(rng)),
        _ => Some(Scalar::Num(f64::from(rng.random_range(0..4)))),
    };
    Predicate::new(path, op, v)
}

fn effect(rng: &mut ChaCha8Rng) -> Effect {
    let path = PATHS[rng.random_range(0..3)];
    match rng.random_range(0..3) {
        0 => Effect::set(path, value(rng)),
        1 => Effect::clear(path),
        _ => Effect::add(path, f64::from(rng.random_range(1..3))),
    }
}

fn decorate(rng: &mut ChaCha8Rng, mut t: Task) -> Task {
    for _ in 0..rng.random_range(0..3) {
        let p = predicate(rng);
        t.conditions.push(match rng.random_range(0..3) {
            0 => Condition::hard(p),
            1 => Condition::fail_skip(p),
            _ => Condition::context_gen(p),
        });
    }
    for _ in 0..rng.random_range(0..3) {
        t.effects.push(effect(rng));
    }
    for _ in 0..rng.random_range(0..2) {
        t.goals.push(predicate(rng));
    }
    t
}

fn leaf_status(rng: &mut ChaCha8Rng) -> TaskStatus {
    match rng.random_range(0..10) {
        0 => TaskStatus::Finished,
        1 => TaskStatus::Skipped,
        2 => TaskStatus::Unplanned,
        _ => TaskStatus::Planned,
    }
}

fn random_plan(rng: &mut ChaCha8Rng, n: usize) -> Task {
    let mut root = decorate(rng, Task::new(format!("p{n}"), "root_task", Action::new("sim", "step")));
    root.status = TaskStatus::Planned;
    let leaves = rng.random_range(1..=5);
    let mut group: Option<Task> = None;
    for i in 0..leaves {
        let mut leaf = decorate(rng, Task::new(format!("p{n}-l{i}"), "leaf_task", Action::new("sim", "step")));
        leaf.status = leaf_status(rng);
        leaf.est_time = rng.random_range(0..100);
        if rng.random_ratio(1, 3) {
            let g = group.get_or_insert_with(|| {
                let mut g = decorate(rng, Task::new(format!("p{n}-g{i}"), "group_task", Action::new("sim", "step")));
                g.status = TaskStatus::Planned;
                g
            });
            g.sub_tasks.push(leaf);
        } else {
            if let Some(g) = group.take() {
                root.sub_tasks.push(g);
            }
            root.sub_tasks.push(leaf);
        }
    }
    if let Some(g) = group {
        root.sub_tasks.push(g);
    }
    root.relink();
    root
}

fn random_state(rng: &mut ChaCha8Rng) -> WorldState {
    let mut s = WorldState::new();
    for p in PATHS {
        if rng.random_ratio(2, 3) {
            s = s.with(p, scalar(rng));
        }
    }
    s
}

/// Naive semantics written from the rules, independent of the library.
pub struct Oracle {
    facts: BTreeMap<String, Scalar>,
    clock: u64,
}

impl Oracle {
    fn deref(&self, v: &Scalar) -> Result<Scalar, ()> {
        match v {
            Scalar::Text(t) if t.starts_with("@path:") => self.facts.get(&t["@path:".len()..]).cloned().ok_or(()),
            other => Ok(other.clone()),
        }
    }

    fn holds(&self, p: &Predicate) -> bool {
        let fact = self.facts.get(&p.path.to_string());
        match p.op {
            PredicateOp::Exists => return fact.is_some(),
            PredicateOp::Absent => return fact.is_none(),
            _ => {}
        }
        let Ok(v) = self.deref(p.value.as_ref().unwrap()) else { return false };
        let Some(f) = fact else { return false };
        match p.op {
            PredicateOp::Eq => same(f, &v),
            PredicateOp::Ne => !same(f, &v),
            op => match (f, &v) {
                (Scalar::Num(a), Scalar::Num(b)) => match op {
                    PredicateOp::Lt => a < b,
                    PredicateOp::Le => a <= b,
                    PredicateOp::Gt => a > b,
                    _ => a >= b,
                },
                _ => false,
            },
        }
    }

    fn apply(&mut self, e: &Effect) -> Result<(), ()> {
        let key = e.path.to_string();
        match e.op {
            EffectOp::Set => {
                let v = self.deref(e.value.as_ref().unwrap())?;
                self.facts.insert(key, v);
            }
            EffectOp::Clear => {
                self.facts.remove(&key);
            }
            EffectOp::Add => {
                let Some(Scalar::Num(d)) = e.value else { return Err(()) };
                let cur = match self.facts.get(&key) {
                    None => 0.0,
                    Some(Scalar::Num(n)) => *n,
                    Some(_) => return Err(()),
                };
                self.facts.insert(key, Scalar::Num(cur + d));
            }
        }
        Ok(())
    }

    fn run(&mut self, t: &Task) -> Result<(), ()> {
        if matches!(t.status, TaskStatus::Finished | TaskStatus::Skipped | TaskStatus::Failed | TaskStatus::Aborted) {
            return Ok(());
        }
        for c in &t.conditions {
            if self.holds(&c.predicate) {
                continue;
            }
            match c.kind {
                ConditionKind::Hard => return Err(()),
                ConditionKind::FailSkip => return Ok(()),
                ConditionKind::ContextGen => {}
            }
        }
        if t.sub_tasks.is_empty() {
            self.clock += t.est_time;
        }
        for c in &t.sub_tasks {
            self.run(c)?;
        }
        for e in &t.effects {
            self.apply(e)?;
        }
        if t.goals.iter().all(|g| self.holds(g)) {
            Ok(())
        } else {
            Err(())
        }
    }
}

fn same(a: &Scalar, b: &Scalar) -> bool {
    match (a, b) {
        (Scalar::Num(x), Scalar::Num(y)) => x == y,
        (Scalar::Bool(x), Scalar::Bool(y)) => x == y,
        (Scalar::Text(x), Scalar::Text(y)) => x == y,
        _ => false,
    }
}

pub fn agents() -> AgentRegistry {
    let mut reg = AgentRegistry::new();
    reg.register(AgentFunction::pure("sim", "step", |_| Ok(json!({"stepped": true})))).unwrap();
    reg
}

/// Totals from a run of [`check_random_plans`].
#[derive(Debug)]
pub struct OracleSummary {
    pub passes: usize,
    pub fails: usize,
}

/// Validates `count` random plans and compares each verdict, final state and
/// clock against the oracle. Sequential and parallel batches must also agree.
pub fn check_random_plans(count: usize, seed: u64) -> Result<OracleSummary, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents = agents();
    let mut summary = OracleSummary { passes: 0, fails: 0 };
    let mut jobs = Vec::new();
    for n in 0..count {
        let plan = random_plan(&mut rng, n);
        let state = random_state(&mut rng);
        let extra: Vec<Predicate> = (0..rng.random_range(0..2)).map(|_| predicate(&mut rng)).collect();

        let mut oracle = Oracle { facts: state.facts.clone(), clock: state.clock };
        let expected = oracle.run(&plan).is_ok() && extra.iter().all(|g| oracle.holds(g));

        let before = serde_json::to_string(&plan).unwrap();
        let report = validate_plan(&plan, &state, &extra, &agents, None);
        if serde_json::to_string(&plan).unwrap() != before {
            return Err(format!("plan {n} mutated"));
        }
        if report.passed() != expected {
            return Err(format!("plan {n}: expected pass={expected}\n{before}\n{:#?}", report.trace));
        }
        if expected {
            summary.passes += 1;
            if report.final_state.facts != oracle.facts || report.final_state.clock != oracle.clock {
                return Err(format!("plan {n}: final state differs from oracle"));
            }
        } else {
            summary.fails += 1;
            if !report.trace.iter().any(|e| e.outcome == Outcome::Fail) {
                return Err(format!("plan {n}: failing report without a failed trace entry"));
            }
        }
        jobs.push(ValidationJob { plan, state, goals: extra });
    }
    let seq = validate_batch(&jobs, &agents, None, Parallelism::Sequential);
    let par = validate_batch(&jobs, &agents, None, Parallelism::Parallel);
    if seq != par {
        return Err("sequential and parallel batches differ".into());
    }
    Ok(summary)
}

/// Compares predicate, goal and effect evaluation with the oracle on random states.
pub fn check_world_rules(samples: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let state = random_state(&mut rng);
        let mut oracle = Oracle { facts: state.facts.clone(), clock: 0 };
        let p = predicate(&mut rng);
        if eval_predicate(&state, &p).unwrap_or(false) != oracle.holds(&p) {
            return Err(format!("{p} on {:?}", state.facts));
        }
        let goals: Vec<Predicate> = (0..rng.random_range(0..4)).map(|_| predicate(&mut rng)).collect();
        if check_goals(&state, &goals).passed != goals.iter().all(|g| oracle.holds(g)) {
            return Err(format!("goals {goals:?} on {:?}", state.facts));
        }
        let e = effect(&mut rng);
        match (apply_effect(&state, &e), oracle.apply(&e)) {
            (Ok(next), Ok(())) if next.facts == oracle.facts && next.clock == state.clock => {}
            (Err(_), Err(())) => {}
            (got, want) => return Err(format!("{e:?} on {:?}: {got:?} vs {want:?}", state.facts)),
        }
    }
    Ok(())
}
