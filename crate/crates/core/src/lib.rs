//! Service-agent task execution with case-based situation handling.
//!
//! A plan is a recursive [`Task`](task::Task) tree. The [`Engine`](engine::Engine)
//! plans tasks by copying templates or previously executed cases, runs leaf
//! actions through registered agents, and polls a situation queue between
//! steps. Situations are resolved by retrieving a similar handled case from
//! the [`CaseLibrary`](library::CaseLibrary), applying its remedy to a working
//! copy of the plan, and committing only if the simulation validator passes.
//! Novel situations escalate to a human through an [`EscalationHandler`](handling::EscalationHandler).

pub mod agents;
pub mod config;
pub mod engine;
pub mod handling;
pub mod library;
pub mod remedy;
pub mod scenario;
pub mod situation;
pub mod task;
pub mod validator;
pub mod world;

pub use agents::{AgentError, AgentRegistry, InvokeMode};
pub use engine::{Engine, EngineConfig, EventKind, ExecutionEvent};
pub use handling::{EscalationHandler, HandlingOutcome};
pub use library::{CaseKind, CaseLibrary, CaseRecord, SimilarityScore};
pub use remedy::{OperationAst, RemedyAction};
pub use situation::{Situation, SituationQueue, SituationStatus};
pub use task::{Action, Condition, ConditionKind, DottedPath, Task, TaskStatus};
pub use validator::{ValidationReport, Verdict};
pub use world::{Effect, Predicate, Scalar, WorldState};
