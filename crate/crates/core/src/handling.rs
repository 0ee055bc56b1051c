//! Situation handling.
//!
//! A dequeued situation is matched against stored cases of its class. Each
//! candidate remedy is applied to a copy of the plan and validated; the first
//! that passes is committed and stored as a new case. When the retry budget
//! runs out the situation is escalated to a human.

use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::remedy::{apply_remedy, AppliedRemedy, RemedyAction, RemedyError, RemedyErrorKind, RemedyRuntime};
use crate::situation::{Situation, SituationStatus};
use crate::task::{IdGen, Task};
use crate::validator::{validate_plan, ValidationReport, Verdict};
use crate::world::Predicate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandlingOutcome {
    Resolved,
    Escalated,
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub case_id: String,
    pub score: f64,
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_goal: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandlingRecord {
    pub situation_id: String,
    pub name: String,
    pub outcome: HandlingOutcome,
    pub probes: Vec<ProbeRecord>,
    pub escalations: usize,
    /// Case stored for the committed remedy.
    pub case_id: Option<String>,
}

/// What a human sees when a situation is escalated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscalationPayload {
    pub situation: Situation,
    pub plan: Task,
    pub executing: Option<Task>,
    pub last_validation: Option<ValidationReport>,
    pub attempt: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub situation_id: String,
    pub remedy: Vec<RemedyAction>,
    /// Seconds spent waiting, added to the world clock.
    #[serde(default)]
    pub waited: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SubmissionOutcome {
    Committed { report: ValidationReport },
    ValidationFailed { report: ValidationReport },
    /// `index` is the offending remedy action.
    Rejected { code: String, error: String, index: usize },
    WrongSituation { expected: String },
}

/// Source of human remedies for escalated situations.
pub trait EscalationHandler: Send {
    /// Blocks until a submission arrives or `timeout_secs` elapse.
    fn await_remedy(&mut self, payload: &EscalationPayload, timeout_secs: u64) -> Option<Submission>;

    /// Outcome of the last submission.
    fn reply(&mut self, _outcome: &SubmissionOutcome) {}
}

/// Stable code for a remedy error, as reported to submitters.
pub fn error_code(kind: &RemedyErrorKind) -> &'static str {
    match kind {
        RemedyErrorKind::Parse(_) => "parse_error",
        RemedyErrorKind::Schema(_) => "schema_violation",
        RemedyErrorKind::UnresolvableReference { .. } => "unresolvable_reference",
        RemedyErrorKind::TargetExecuted { .. } => "target_executed",
        RemedyErrorKind::InvalidTarget(_) => "invalid_target",
        RemedyErrorKind::Mapping(_) => "mapping_error",
        RemedyErrorKind::Structural(_) => "structural_error",
    }
}

enum Attempt {
    Passed(Box<AppliedRemedy>, IdGen, ValidationReport),
    Failed(ValidationReport),
}

impl Engine {
    fn try_remedy(&mut self, situation: &Situation, remedy: &[RemedyAction]) -> Result<Attempt, RemedyError> {
        let rt = RemedyRuntime { situation, executing: situation.task.as_deref() };
        let mut ids = self.ids.clone();
        let applied = apply_remedy(&self.plan, remedy, &rt, &mut ids)?;
        let report = validate_plan(&applied.plan, &self.state, &situation.goals, &self.agents, Some(&self.library));
        self.last_validation = Some(report.clone());
        Ok(if report.passed() { Attempt::Passed(Box::new(applied), ids, report) } else { Attempt::Failed(report) })
    }

    fn commit(&mut self, situation: &mut Situation, remedy: Vec<RemedyAction>, applied: AppliedRemedy, ids: IdGen) -> Option<String> {
        self.ids = ids;
        self.commit_plan(applied.plan, &applied.touched_parents);
        situation.remedy = remedy;
        situation.status = SituationStatus::Resolved;
        self.update_situation(situation);
        match self.library.store_situation(situation) {
            Ok(id) => Some(id),
            Err(e) => {
                log::warn!("case for {} not stored: {e}", situation.id);
                None
            }
        }
    }

    /// Runs library probes, then escalation, for one situation.
    pub(crate) fn handle_situation(&mut self, mut situation: Situation) -> HandlingRecord {
        situation.status = SituationStatus::Handled;
        self.update_situation(&situation);
        let mut record = HandlingRecord {
            situation_id: situation.id.clone(),
            name: situation.name.clone(),
            outcome: HandlingOutcome::Unresolved,
            probes: Vec::new(),
            escalations: 0,
            case_id: None,
        };
        let mut excluded = Vec::new();
        for _ in 0..self.config.retry_budget {
            let Some(m) = self.library.retrieve_similar_situation_excluding(
                &situation.name,
                &situation.context,
                self.config.threshold,
                &excluded,
            ) else {
                break;
            };
            excluded.push(m.case_id.clone());
            let mut probe = ProbeRecord { case_id: m.case_id, score: m.score.value, verdict: None, failed_goal: None, error: None };
            let remedy = m.situation.remedy;
            match self.try_remedy(&situation, &remedy) {
                Ok(Attempt::Passed(applied, ids, _)) => {
                    probe.verdict = Some(Verdict::Pass);
                    record.probes.push(probe);
                    record.case_id = self.commit(&mut situation, remedy, *applied, ids);
                    record.outcome = HandlingOutcome::Resolved;
                    return self.finish(record);
                }
                Ok(Attempt::Failed(report)) => {
                    probe.verdict = Some(Verdict::Fail);
                    probe.failed_goal = report.failed_goal;
                }
                Err(e) => probe.error = Some(e.to_string()),
            }
            record.probes.push(probe);
        }
        self.escalate(situation, record)
    }

    fn escalate(&mut self, mut situation: Situation, mut record: HandlingRecord) -> HandlingRecord {
        let Some(mut handler) = self.handler.take() else {
            situation.status = SituationStatus::Escalated;
            self.update_situation(&situation);
            record.outcome = HandlingOutcome::Escalated;
            return self.finish(record);
        };
        let timeout = self.config.escalation_timeout;
        'attempts: while record.escalations < self.config.max_escalations {
            record.escalations += 1;
            situation.status = SituationStatus::Escalated;
            self.update_situation(&situation);
            let payload = EscalationPayload {
                situation: situation.clone(),
                plan: self.plan.clone(),
                executing: situation.task.as_deref().and_then(|id| self.plan.find(id)).cloned(),
                last_validation: self.last_validation.clone(),
                attempt: record.escalations,
            };
            loop {
                let Some(sub) = handler.await_remedy(&payload, timeout) else {
                    break 'attempts;
                };
                self.state.advance(sub.waited.min(timeout));
                if sub.situation_id != situation.id {
                    handler.reply(&SubmissionOutcome::WrongSituation { expected: situation.id.clone() });
                    continue;
                }
                match self.try_remedy(&situation, &sub.remedy) {
                    Err(e) => handler.reply(&SubmissionOutcome::Rejected {
                        code: error_code(&e.kind).into(),
                        error: e.to_string(),
                        index: e.index,
                    }),
                    Ok(Attempt::Failed(report)) => {
                        handler.reply(&SubmissionOutcome::ValidationFailed { report });
                        continue 'attempts;
                    }
                    Ok(Attempt::Passed(applied, ids, report)) => {
                        record.case_id = self.commit(&mut situation, sub.remedy, *applied, ids);
                        record.outcome = HandlingOutcome::Resolved;
                        handler.reply(&SubmissionOutcome::Committed { report });
                        self.handler = Some(handler);
                        return self.finish(record);
                    }
                }
            }
        }
        self.handler = Some(handler);
        situation.status = SituationStatus::Unresolved;
        self.update_situation(&situation);
        record.outcome = HandlingOutcome::Unresolved;
        self.finish(record)
    }

    fn finish(&mut self, record: HandlingRecord) -> HandlingRecord {
        self.handled.push(record.clone());
        record
    }
}
