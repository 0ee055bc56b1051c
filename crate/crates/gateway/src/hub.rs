//! Shared state between the engine thread and HTTP handlers.
//!
//! The engine publishes an immutable [`Snapshot`] after every event and
//! appends the event to a log. Readers never touch the engine directly.

use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;
use tokio::sync::{oneshot, watch};

use vsa_core::engine::{EngineObserver, Snapshot};
use vsa_core::handling::{EscalationPayload, Submission, SubmissionOutcome};
use vsa_core::{CaseLibrary, Engine, ExecutionEvent, TaskStatus};

/// Work sent from the gateway to the engine thread.
pub enum Command {
    Submit { submission: Submission, reply: oneshot::Sender<SubmissionOutcome> },
}

/// Progress marker broadcast to event-stream readers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Progress {
    pub snapshot_seq: u64,
    pub events: usize,
    pub finished: Option<TaskStatus>,
}

pub struct Hub {
    snapshot: RwLock<Arc<Snapshot>>,
    events: RwLock<Vec<ExecutionEvent>>,
    escalation: Mutex<Option<EscalationPayload>>,
    progress: watch::Sender<Progress>,
    commands: Mutex<Option<mpsc::Sender<Command>>>,
    library: CaseLibrary,
}

impl Hub {
    pub fn new(initial: Snapshot, library: CaseLibrary) -> Arc<Self> {
        let progress = Progress { snapshot_seq: initial.seq, ..Progress::default() };
        Arc::new(Hub {
            snapshot: RwLock::new(Arc::new(initial)),
            events: RwLock::new(Vec::new()),
            escalation: Mutex::new(None),
            progress: watch::Sender::new(progress),
            commands: Mutex::new(None),
            library,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap().clone()
    }

    pub fn library(&self) -> &CaseLibrary {
        &self.library
    }

    /// Events with index `from..`, in seq order.
    pub fn events_from(&self, from: usize) -> Vec<ExecutionEvent> {
        let events = self.events.read().unwrap();
        events.get(from..).map(<[_]>::to_vec).unwrap_or_default()
    }

    pub fn progress(&self) -> Progress {
        *self.progress.borrow()
    }

    pub fn subscribe(&self) -> watch::Receiver<Progress> {
        self.progress.subscribe()
    }

    pub fn escalation(&self) -> Option<EscalationPayload> {
        self.escalation.lock().unwrap().clone()
    }

    pub(crate) fn set_escalation(&self, payload: Option<EscalationPayload>) {
        *self.escalation.lock().unwrap() = payload;
    }

    /// Enables remedy submission and returns the engine-side receiver.
    pub fn open_commands(&self) -> mpsc::Receiver<Command> {
        let (tx, rx) = mpsc::channel();
        *self.commands.lock().unwrap() = Some(tx);
        rx
    }

    pub fn command_sender(&self) -> Option<mpsc::Sender<Command>> {
        self.commands.lock().unwrap().clone()
    }

    pub fn publish(&self, snapshot: Snapshot) {
        let seq = snapshot.seq;
        *self.snapshot.write().unwrap() = Arc::new(snapshot);
        self.progress.send_modify(|p| p.snapshot_seq = seq);
    }

    fn push_event(&self, event: ExecutionEvent, snapshot: Snapshot) {
        let count = {
            let mut events = self.events.write().unwrap();
            events.push(event);
            events.len()
        };
        let seq = snapshot.seq;
        *self.snapshot.write().unwrap() = Arc::new(snapshot);
        self.progress.send_modify(|p| {
            p.snapshot_seq = seq;
            p.events = count;
        });
    }

    /// Marks the run finished and stops accepting submissions.
    pub fn finish(&self, status: TaskStatus) {
        self.commands.lock().unwrap().take();
        self.set_escalation(None);
        self.progress.send_modify(|p| p.finished = Some(status));
    }
}

/// Engine observer that feeds a [`Hub`].
pub struct HubObserver(pub Arc<Hub>);

impl EngineObserver for HubObserver {
    fn on_event(&mut self, event: &ExecutionEvent, engine: &Engine) -> Vec<vsa_core::engine::Directive> {
        self.0.push_event(event.clone(), engine.snapshot());
        Vec::new()
    }

    fn on_snapshot(&mut self, engine: &Engine) {
        self.0.publish(engine.snapshot());
    }
}
