//! Escalation handler fed by gateway submissions.

use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::sync::oneshot;

use vsa_core::handling::{EscalationHandler, EscalationPayload, Submission, SubmissionOutcome};

use crate::hub::{Command, Hub};

/// Waits on the command channel for a human remedy. The deadline is per
/// escalation attempt, so rejected submissions do not extend it.
pub struct ChannelHandler {
    hub: Arc<Hub>,
    commands: Receiver<Command>,
    reply: Option<oneshot::Sender<SubmissionOutcome>>,
    attempt: Option<(String, usize, Instant)>,
}

impl ChannelHandler {
    pub fn new(hub: Arc<Hub>, commands: Receiver<Command>) -> Self {
        ChannelHandler { hub, commands, reply: None, attempt: None }
    }
}

impl EscalationHandler for ChannelHandler {
    fn await_remedy(&mut self, payload: &EscalationPayload, timeout_secs: u64) -> Option<Submission> {
        let key = (payload.situation.id.clone(), payload.attempt);
        let started = match &self.attempt {
            Some((id, n, at)) if (id, n) == (&key.0, &key.1) => *at,
            _ => {
                let now = Instant::now();
                self.attempt = Some((key.0, key.1, now));
                now
            }
        };
        self.hub.set_escalation(Some(payload.clone()));
        let deadline = started + Duration::from_secs(timeout_secs);
        let received = self.commands.recv_timeout(deadline.saturating_duration_since(Instant::now()));
        self.hub.set_escalation(None);
        match received {
            Ok(Command::Submit { mut submission, reply }) => {
                self.reply = Some(reply);
                submission.waited = started.elapsed().as_secs();
                Some(submission)
            }
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => {
                log::info!("escalation of {} timed out", payload.situation.id);
                None
            }
        }
    }

    fn reply(&mut self, outcome: &SubmissionOutcome) {
        if let Some(tx) = self.reply.take() {
            // The requester may have gone away.
            let _ = tx.send(outcome.clone());
        }
    }
}
