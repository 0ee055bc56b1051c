//! Actor agents: a registry of `agent.function` handlers with real and
//! simulation modes, canned script responses, and the stub agents used by the
//! shipped scenarios.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::task::is_identifier;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvokeMode {
    Real,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum AgentError {
    #[error("unknown agent function `{reference}`")]
    UnknownReference { reference: String },
    #[error("`{reference}` failed: {message}")]
    ActorFailure { reference: String, message: String, context: Value },
    #[error("`{reference}` has no simulation handler")]
    SimulationUnsupported { reference: String },
    #[error("`{reference}` is already registered")]
    DuplicateReference { reference: String },
    #[error("`{reference}` is not of the form agent.function")]
    InvalidReference { reference: String },
}

impl AgentError {
    pub fn failure(reference: &str, message: &str, context: Value) -> Self {
        AgentError::ActorFailure {
            reference: reference.to_owned(),
            message: message.to_owned(),
            context,
        }
    }
}

/// One scripted answer consumed by the next real-mode call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CannedResponse {
    Ok(Value),
    Fail {
        message: String,
        #[serde(default)]
        context: Value,
    },
}

pub type RealHandler = Box<dyn FnMut(&Value) -> Result<Value, AgentError> + Send + Sync>;
pub type SimHandler = Box<dyn Fn(&Value) -> Result<Value, AgentError> + Send + Sync>;

pub struct AgentFunction {
    pub agent: String,
    pub function: String,
    pub real: RealHandler,
    pub simulation: Option<SimHandler>,
    pub script: VecDeque<CannedResponse>,
}

impl AgentFunction {
    pub fn new(
        agent: &str,
        function: &str,
        real: impl FnMut(&Value) -> Result<Value, AgentError> + Send + Sync + 'static,
    ) -> Self {
        AgentFunction {
            agent: agent.to_owned(),
            function: function.to_owned(),
            real: Box::new(real),
            simulation: None,
            script: VecDeque::new(),
        }
    }

    pub fn simulated_by(
        mut self,
        sim: impl Fn(&Value) -> Result<Value, AgentError> + Send + Sync + 'static,
    ) -> Self {
        self.simulation = Some(Box::new(sim));
        self
    }

    /// A side-effect-free function whose simulation equals its real behavior.
    pub fn pure(
        agent: &str,
        function: &str,
        f: impl Fn(&Value) -> Result<Value, AgentError> + Send + Sync + Clone + 'static,
    ) -> Self {
        let g = f.clone();
        AgentFunction::new(agent, function, move |a| f(a)).simulated_by(g)
    }

    pub fn reference(&self) -> String {
        format!("{}.{}", self.agent, self.function)
    }
}

#[derive(Default)]
pub struct AgentRegistry {
    functions: BTreeMap<String, AgentFunction>,
    /// Fixed simulation results that take precedence over handlers.
    sim_overrides: BTreeMap<String, Value>,
}

impl std::fmt::Debug for AgentRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AgentRegistry")
            .field("functions", &self.functions.keys().collect::<Vec<_>>())
            .finish()
    }
}

pub fn split_reference(reference: &str) -> Result<(&str, &str), AgentError> {
    match reference.split_once('.') {
        Some((a, f)) if is_identifier(a) && is_identifier(f) => Ok((a, f)),
        _ => Err(AgentError::InvalidReference { reference: reference.to_owned() }),
    }
}

impl AgentRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: AgentFunction) -> Result<String, AgentError> {
        let reference = spec.reference();
        split_reference(&reference)?;
        if self.functions.contains_key(&reference) {
            return Err(AgentError::DuplicateReference { reference });
        }
        self.functions.insert(reference.clone(), spec);
        Ok(reference)
    }

    pub fn contains(&self, reference: &str) -> bool {
        self.functions.contains_key(reference)
    }

    pub fn references(&self) -> Vec<String> {
        self.functions.keys().cloned().collect()
    }

    /// Queues canned answers for the next real-mode calls of `reference`.
    pub fn push_responses(
        &mut self,
        reference: &str,
        responses: impl IntoIterator<Item = CannedResponse>,
    ) -> Result<(), AgentError> {
        let f = self
            .functions
            .get_mut(reference)
            .ok_or_else(|| AgentError::UnknownReference { reference: reference.to_owned() })?;
        f.script.extend(responses);
        Ok(())
    }

    pub fn set_simulation_result(&mut self, reference: &str, value: Value) {
        self.sim_overrides.insert(reference.to_owned(), value);
    }

    pub fn invoke(&mut self, reference: &str, args: &Value, mode: InvokeMode) -> Result<Value, AgentError> {
        match mode {
            InvokeMode::Real => {
                let f = self
                    .functions
                    .get_mut(reference)
                    .ok_or_else(|| AgentError::UnknownReference { reference: reference.to_owned() })?;
                match f.script.pop_front() {
                    Some(CannedResponse::Ok(v)) => Ok(v),
                    Some(CannedResponse::Fail { message, context }) => {
                        Err(AgentError::ActorFailure { reference: reference.to_owned(), message, context })
                    }
                    None => (f.real)(args),
                }
            }
            InvokeMode::Simulation => self.simulate(reference, args),
        }
    }

    /// Simulation-mode call; takes `&self`, so it cannot disturb agent state.
    pub fn simulate(&self, reference: &str, args: &Value) -> Result<Value, AgentError> {
        let f = self
            .functions
            .get(reference)
            .ok_or_else(|| AgentError::UnknownReference { reference: reference.to_owned() })?;
        if let Some(v) = self.sim_overrides.get(reference) {
            return Ok(v.clone());
        }
        match &f.simulation {
            Some(sim) => sim(args),
            None => Err(AgentError::SimulationUnsupported { reference: reference.to_owned() }),
        }
    }

    /// Registry with the vehicle, weather, chat, map, mobile and service
    /// center stubs.
    pub fn with_defaults(setup: &AgentSetup) -> Self {
        let mut reg = AgentRegistry::new();
        for f in default_functions(setup) {
            reg.register(f).expect("default references are unique");
        }
        reg
    }
}

/// Parameters of the stub agents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSetup {
    /// Number of close-window commands that jam before one succeeds.
    pub window_jams: u32,
    pub window_broken: bool,
    pub window_malfunction: bool,
    pub weather: String,
    pub wetness: String,
    pub poi_category: String,
    pub trip_phase: String,
    pub start_location: String,
    /// Named locations with planar coordinates.
    pub locations: BTreeMap<String, [f64; 2]>,
}

impl Default for AgentSetup {
    fn default() -> Self {
        AgentSetup {
            window_jams: 0,
            window_broken: false,
            window_malfunction: false,
            weather: "clear".into(),
            wetness: "dry".into(),
            poi_category: "none".into(),
            trip_phase: "en_route".into(),
            start_location: "depot".into(),
            locations: BTreeMap::new(),
        }
    }
}

#[derive(Debug)]
struct Vehicle {
    window_closed: bool,
    close_command_sent: bool,
    jams_left: u32,
    trunk_open: bool,
}

#[derive(Debug)]
struct MapState {
    position: String,
}

fn arg<'a>(args: &'a Value, key: &str) -> Option<&'a Value> {
    args.get(key).filter(|v| !v.is_null())
}

fn coords(setup: &AgentSetup, place: &str) -> Value {
    setup.locations.get(place).map_or(Value::Null, |c| json!(c))
}

fn default_functions(setup: &AgentSetup) -> Vec<AgentFunction> {
    let vehicle = Arc::new(Mutex::new(Vehicle {
        window_closed: false,
        close_command_sent: false,
        jams_left: setup.window_jams,
        trunk_open: false,
    }));
    let map = Arc::new(Mutex::new(MapState { position: setup.start_location.clone() }));
    let mut out = Vec::new();

    let broken = setup.window_broken;
    out.push(AgentFunction::pure("vda", "checking_window", move |_| Ok(json!(broken))));
    out.push(AgentFunction::pure("vda", "broken_wdw_detect", move |_| Ok(json!(broken))));
    let malfunction = setup.window_malfunction;
    out.push(AgentFunction::pure("vda", "wdw_malfunc_detect", move |_| Ok(json!(malfunction))));

    let v = vehicle.clone();
    let v_sim = vehicle.clone();
    out.push(
        AgentFunction::new("vda", "close_wdw_status", move |_| {
            Ok(json!(v.lock().unwrap().close_command_sent))
        })
        .simulated_by(move |_| Ok(json!(v_sim.lock().unwrap().close_command_sent))),
    );

    let v = vehicle.clone();
    out.push(
        AgentFunction::new("vda", "close_window", move |_| {
            let mut st = v.lock().unwrap();
            st.close_command_sent = true;
            if st.jams_left > 0 {
                st.jams_left -= 1;
                return Err(AgentError::failure(
                    "vda.close_window",
                    "window jammed state",
                    json!({"close_window": true}),
                ));
            }
            st.window_closed = true;
            Ok(json!({"window_closed": true}))
        })
        .simulated_by(|_| Ok(json!({"window_closed": true}))),
    );

    let v = vehicle.clone();
    out.push(
        AgentFunction::new("vda", "open_window", move |_| {
            v.lock().unwrap().window_closed = false;
            Ok(json!({"window_closed": false}))
        })
        .simulated_by(|_| Ok(json!({"window_closed": false}))),
    );

    for (function, open) in [("open_trunk", true), ("close_trunk", false)] {
        let v = vehicle.clone();
        out.push(
            AgentFunction::new("vda", function, move |_| {
                v.lock().unwrap().trunk_open = open;
                Ok(json!({"trunk_open": open}))
            })
            .simulated_by(move |_| Ok(json!({"trunk_open": open}))),
        );
    }

    out.push(AgentFunction::pure("vda", "wait_for_luggage", |_| Ok(json!({"luggage_loaded": true}))));
    out.push(AgentFunction::pure("vda", "board", |_| Ok(json!({"boarded": true}))));
    out.push(AgentFunction::pure("vda", "offboard", |a| {
        Ok(json!({"offboarded": true, "location": arg(a, "location").cloned().unwrap_or(Value::Null)}))
    }));
    out.push(AgentFunction::pure("vda", "wait", |a| {
        Ok(json!({"waited": arg(a, "minutes").cloned().unwrap_or(json!(0))}))
    }));
    let phase = setup.trip_phase.clone();
    out.push(AgentFunction::pure("vda", "trip_phase", move |_| Ok(json!(phase))));
    out.push(AgentFunction::pure("vda", "trip", |_| Ok(json!({}))));

    let weather = setup.weather.clone();
    out.push(AgentFunction::pure("weather", "current_weather", move |_| Ok(json!(weather))));

    let wetness = setup.wetness.clone();
    out.push(AgentFunction::pure("chat", "wetness", move |_| Ok(json!(wetness))));
    out.push(AgentFunction::pure("chat", "confirm_problem_solved", |_| Ok(json!({"problem_solved": true}))));
    out.push(AgentFunction::pure("chat", "confirm_passenger", |_| Ok(json!({"confirmed": true}))));
    out.push(AgentFunction::pure("chat", "request_passenger", |a| {
        Ok(json!({"requested": arg(a, "request").cloned().unwrap_or(Value::Null), "acknowledged": true}))
    }));

    for function in ["depart", "cruise", "arrive", "drive"] {
        let m = map.clone();
        let s = setup.clone();
        let sim_setup = setup.clone();
        let moves = matches!(function, "arrive" | "drive");
        let report = move |setup: &AgentSetup, a: &Value, here: &str| {
            let dest = arg(a, "dest").and_then(Value::as_str).unwrap_or(here).to_owned();
            let at = if moves { dest.clone() } else { here.to_owned() };
            json!({"location": at, "coordinates": coords(setup, &at), "heading_to": dest})
        };
        let sim_report = report;
        out.push(
            AgentFunction::new("map", function, move |a| {
                let mut st = m.lock().unwrap();
                if function == "depart" {
                    if let Some(o) = arg(a, "origin").and_then(Value::as_str) {
                        st.position = o.to_owned();
                    }
                }
                let out = report(&s, a, &st.position);
                if moves {
                    st.position = out["location"].as_str().unwrap_or_default().to_owned();
                }
                Ok(out)
            })
            .simulated_by(move |a| {
                let origin = arg(a, "origin").and_then(Value::as_str).unwrap_or("unknown").to_owned();
                Ok(sim_report(&sim_setup, a, &origin))
            }),
        );
    }
    let m = map.clone();
    out.push(
        AgentFunction::new("map", "position", move |_| Ok(json!(m.lock().unwrap().position)))
            .simulated_by({
                let m = map.clone();
                move |_| Ok(json!(m.lock().unwrap().position))
            }),
    );
    let category = setup.poi_category.clone();
    out.push(AgentFunction::pure("map", "poi_category", move |_| Ok(json!(category))));

    out.push(AgentFunction::pure("mobile", "connect_passenger", |_| Ok(json!({"connected": true}))));
    out.push(AgentFunction::pure("service_center", "acknowledge", |_| Ok(json!({"acknowledged": true}))));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry(jams: u32) -> AgentRegistry {
        AgentRegistry::with_defaults(&AgentSetup {
            window_jams: jams,
            weather: "rain".into(),
            wetness: "water on the door panel, passenger wet".into(),
            ..AgentSetup::default()
        })
    }

    #[test]
    fn logics_references_resolve() {
        let reg = registry(0);
        for r in [
            "vda.checking_window",
            "vda.close_wdw_status",
            "vda.wdw_malfunc_detect",
            "vda.broken_wdw_detect",
            "weather.current_weather",
            "chat.wetness",
        ] {
            assert!(reg.contains(r), "{r}");
        }
    }

    #[test]
    fn weather_and_wetness() {
        let mut reg = registry(0);
        assert_eq!(reg.invoke("weather.current_weather", &json!({}), InvokeMode::Real).unwrap(), json!("rain"));
        assert_eq!(
            reg.invoke("chat.wetness", &json!({}), InvokeMode::Real).unwrap(),
            json!("water on the door panel, passenger wet")
        );
    }

    #[test]
    fn jammed_close_reports_command_sent() {
        let mut reg = registry(1);
        let err = reg.invoke("vda.close_window", &json!({}), InvokeMode::Real).unwrap_err();
        assert!(matches!(err, AgentError::ActorFailure { ref message, .. } if message == "window jammed state"));
        assert_eq!(reg.invoke("vda.close_wdw_status", &json!({}), InvokeMode::Real).unwrap(), json!(true));
        assert!(reg.invoke("vda.close_window", &json!({}), InvokeMode::Real).is_ok());
    }

    #[test]
    fn simulation_is_pure() {
        let mut reg = registry(1);
        let a = reg.invoke("vda.close_window", &json!({}), InvokeMode::Simulation).unwrap();
        let b = reg.invoke("vda.close_window", &json!({}), InvokeMode::Simulation).unwrap();
        assert_eq!(a, b);
        assert!(reg.invoke("vda.close_window", &json!({}), InvokeMode::Real).is_err());
    }

    #[test]
    fn unknown_duplicate_and_canned() {
        let mut reg = registry(0);
        assert!(matches!(
            reg.invoke("ghost.fly", &json!({}), InvokeMode::Real),
            Err(AgentError::UnknownReference { .. })
        ));
        let dup = AgentFunction::pure("weather", "current_weather", |_| Ok(json!(1)));
        assert!(matches!(reg.register(dup), Err(AgentError::DuplicateReference { .. })));
        reg.push_responses("chat.confirm_passenger", [CannedResponse::Ok(json!({"window_is_jammed": true}))])
            .unwrap();
        assert_eq!(
            reg.invoke("chat.confirm_passenger", &json!({}), InvokeMode::Simulation).unwrap(),
            json!({"confirmed": true})
        );
        assert_eq!(
            reg.invoke("chat.confirm_passenger", &json!({}), InvokeMode::Real).unwrap(),
            json!({"window_is_jammed": true})
        );
    }

    #[test]
    fn map_moves_only_in_real_mode() {
        let mut reg = registry(0);
        let args = json!({"origin": "Meyers Rd", "dest": "Dequindre Rd"});
        reg.invoke("map.drive", &args, InvokeMode::Simulation).unwrap();
        assert_eq!(reg.invoke("map.position", &json!({}), InvokeMode::Real).unwrap(), json!("depot"));
        let out = reg.invoke("map.drive", &args, InvokeMode::Real).unwrap();
        assert_eq!(out["location"], json!("Dequindre Rd"));
        assert_eq!(reg.invoke("map.position", &json!({}), InvokeMode::Real).unwrap(), json!("Dequindre Rd"));
    }

    #[test]
    fn canned_response_json_shape() {
        let r: CannedResponse = serde_json::from_value(json!({"fail": {"message": "m"}})).unwrap();
        assert_eq!(r, CannedResponse::Fail { message: "m".into(), context: Value::Null });
    }
}
