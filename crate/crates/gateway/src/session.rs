//! A scenario run on a background thread, observable through a [`Hub`].

use std::sync::Arc;
use std::thread::JoinHandle;

use vsa_core::engine::Snapshot;
use vsa_core::scenario::{run_scenario, RunConfig, RunResult, ScenarioError, ScenarioScript};
use vsa_core::{CaseLibrary, TaskStatus, WorldState};

use crate::handler::ChannelHandler;
use crate::hub::{Hub, HubObserver};

pub struct Session {
    pub hub: Arc<Hub>,
    thread: JoinHandle<Result<RunResult, ScenarioError>>,
}

impl Session {
    /// Starts the run. Interactive sessions take remedies from the gateway
    /// instead of the script's submissions.
    pub fn start(script: ScenarioScript, mut config: RunConfig, interactive: bool) -> Result<Session, ScenarioError> {
        let library = config.library.get_or_insert_with(CaseLibrary::in_memory).clone();
        let state =
            if script.initial_state.is_null() { WorldState::new() } else { WorldState::from_json(&script.initial_state)? };
        let mut plan = script.order.clone();
        plan.relink();
        let initial = Snapshot { seq: 0, last_event_seq: 0, plan, state, situations: Vec::new(), last_validation: None };
        let hub = Hub::new(initial, library);
        config.observers.push(Box::new(HubObserver(hub.clone())));
        if interactive {
            config.handler = Some(Box::new(ChannelHandler::new(hub.clone(), hub.open_commands())));
        }
        let runner = hub.clone();
        let thread = std::thread::Builder::new()
            .name("engine".into())
            .spawn(move || {
                let result = run_scenario(&script, config);
                runner.finish(result.as_ref().map_or(TaskStatus::Failed, |r| r.status));
                result
            })
            .expect("spawn engine thread");
        Ok(Session { hub, thread })
    }

    pub fn is_finished(&self) -> bool {
        self.thread.is_finished()
    }

    /// Blocks until the run completes.
    pub fn join(self) -> Result<RunResult, ScenarioError> {
        self.thread.join().unwrap_or_else(|p| std::panic::resume_unwind(p))
    }
}
