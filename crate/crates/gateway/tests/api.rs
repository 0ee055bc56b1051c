//! REST endpoints against live scenario sessions.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use vsa_core::scenario::{RunConfig, ScenarioScript};
use vsa_core::{EngineConfig, HandlingOutcome, SituationStatus, TaskStatus};
use vsa_gateway::{router, Hub, Session};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn script(name: &str) -> ScenarioScript {
    ScenarioScript::load(&scenarios().join(name)).unwrap()
}

fn stop_by_remedy() -> Value {
    serde_json::from_str(&std::fs::read_to_string(scenarios().join("remedies/pharmacy_stop_by.json")).unwrap()).unwrap()
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&Value>) -> (StatusCode, Value) {
    let body = body.map_or_else(Body::empty, |b| Body::from(b.to_string()));
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

/// Waits until the engine is blocked on an escalation of `attempt`.
async fn awaiting(hub: &Arc<Hub>, attempt: usize) -> String {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        if let Some(p) = hub.escalation().filter(|p| p.attempt == attempt) {
            return p.situation.id;
        }
        assert!(Instant::now() < deadline, "engine never escalated (attempt {attempt})");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

fn interactive(name: &str, engine: EngineConfig) -> Session {
    Session::start(script(name), RunConfig { engine, ..RunConfig::default() }, true).unwrap()
}

fn plan_names(plan: &Value) -> Vec<String> {
    let mut out = Vec::new();
    fn walk(t: &Value, out: &mut Vec<String>) {
        out.push(t["task_name"].as_str().unwrap().to_owned());
        for c in t["sub_tasks"].as_array().into_iter().flatten() {
            walk(c, out);
        }
    }
    walk(plan, &mut out);
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn human_remedy_is_validated_and_committed() {
    let session = interactive("pharmacy.json", EngineConfig::default());
    let hub = session.hub.clone();
    let app = router(hub.clone());
    let id = awaiting(&hub, 1).await;

    let (status, list) = get(&app, "/api/situations?status=escalated").await;
    assert_eq!(status, StatusCode::OK);
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 1);
    assert_eq!(list[0]["id"], json!(id));
    assert_eq!(list[0]["context"]["stop_type"], json!("stop_by"));

    let (status, detail) = get(&app, &format!("/api/situations/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(detail["awaiting_remedy"], json!(true));
    assert_eq!(detail["attempt"], json!(1));
    assert_eq!(detail["executing"]["task_name"], json!("drive_task"));
    assert_eq!(detail["last_validation"]["verdict"], json!("fail"));
    assert_eq!(detail["last_validation"]["failed_goal"]["path"], json!("trip.final_destination"));

    let (_, before) = get(&app, "/api/plan").await;

    let (status, err) = post(&app, &format!("/api/situations/{id}/remedy"), &json!([{"operation": "frobnicate drive_task"}])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], json!("parse_error"));
    assert_eq!(err["path"], json!("/0/operation"));
    assert!(err["message"].as_str().unwrap().contains("frobnicate"));

    let (status, err) = call(&app, Method::POST, &format!("/api/situations/{id}/remedy"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], json!("invalid_json"));

    let (status, err) = post(&app, &format!("/api/situations/{id}/remedy"), &json!([{"operation": 5}])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], json!("schema_violation"));
    assert_eq!(err["path"], json!("[0].operation"));

    let (status, err) = post(&app, "/api/situations/run-s999/remedy", &stop_by_remedy()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], json!("not_found"));

    let finished = json!([{"operation": "abort done", "references": {"done": "task:onboard_task"}}]);
    let (status, err) = post(&app, &format!("/api/situations/{id}/remedy"), &finished).await;
    assert_eq!(status, StatusCode::CONFLICT, "{err}");
    assert_eq!(err["code"], json!("target_executed"));
    assert_eq!(err["path"], json!("/0"));

    let (_, after) = get(&app, "/api/plan").await;
    assert_eq!(before["plan"], after["plan"], "rejected remedies leave the plan untouched");
    assert_eq!(awaiting(&hub, 1).await, id, "rejections do not use up the attempt");

    let (status, resp) = post(&app, &format!("/api/situations/{id}/remedy"), &stop_by_remedy()).await;
    assert_eq!(status, StatusCode::OK, "{resp}");
    assert_eq!(resp["committed"], json!(true));
    assert_eq!(resp["report"]["verdict"], json!("pass"));

    let (_, plan) = get(&app, "/api/plan").await;
    let names = plan_names(&plan["plan"]);
    assert!(names.contains(&"wait_task".to_owned()), "{names:?}");

    let result = tokio::task::spawn_blocking(move || session.join()).await.unwrap().unwrap();
    assert!(result.passed(), "{:?}", result.expectations);
    assert_eq!(result.escalations(), 1);
    assert_eq!(result.status, TaskStatus::Finished);

    let (status, err) = post(&app, &format!("/api/situations/{id}/remedy"), &stop_by_remedy()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], json!("not_escalated"));

    let (_, state) = get(&app, "/api/state").await;
    assert_eq!(state["state"]["facts"]["trip.final_destination"], json!("Dequindre Rd"));
}

#[tokio::test(flavor = "multi_thread")]
async fn failing_remedy_is_reported_and_uses_the_attempt() {
    let session = interactive("pharmacy.json", EngineConfig::default());
    let hub = session.hub.clone();
    let app = router(hub.clone());
    let id = awaiting(&hub, 1).await;

    let adapted = serde_json::to_value(&script("pharmacy.json").situation_cases[0].remedy).unwrap();
    let (status, resp) = post(&app, &format!("/api/situations/{id}/remedy"), &adapted).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp["committed"], json!(false));
    assert_eq!(resp["report"]["verdict"], json!("fail"));
    assert_eq!(resp["report"]["failed_goal"]["path"], json!("trip.final_destination"));

    assert_eq!(awaiting(&hub, 2).await, id);
    let (status, resp) = post(&app, &format!("/api/situations/{id}/remedy"), &json!({"remedy": stop_by_remedy()})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resp["committed"], json!(true));

    let result = tokio::task::spawn_blocking(move || session.join()).await.unwrap().unwrap();
    assert_eq!(result.handling[0].escalations, 2);
    assert_eq!(result.handling[0].outcome, HandlingOutcome::Resolved);
}

#[tokio::test(flavor = "multi_thread")]
async fn unanswered_escalation_times_out() {
    let engine = EngineConfig { escalation_timeout: 0, max_escalations: 1, ..EngineConfig::default() };
    let session = interactive("pharmacy.json", engine);
    let hub = session.hub.clone();
    let result = tokio::task::spawn_blocking(move || session.join()).await.unwrap().unwrap();
    assert_eq!(result.situations[0].status, SituationStatus::Unresolved);
    assert_eq!(result.status, TaskStatus::Finished);
    assert_eq!(hub.progress().finished, Some(TaskStatus::Finished));

    let app = router(hub);
    let (_, list) = get(&app, "/api/situations?status=unresolved").await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    let (status, err) = get(&app, "/api/situations?status=lost").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["path"], json!("status"));
}

#[tokio::test(flavor = "multi_thread")]
async fn library_and_palette_are_served() {
    let session = interactive("pharmacy.json", EngineConfig::default());
    let hub = session.hub.clone();
    let app = router(hub.clone());
    let id = awaiting(&hub, 1).await;

    // Two of the six shared keys differ: stop_type and wait_time.
    let (status, hits) = get(&app, "/api/library/situations?name=POI_dropoff&min_score=0.5").await;
    assert_eq!(status, StatusCode::OK);
    let hits = hits.as_array().unwrap();
    assert_eq!(hits.len(), 1);
    assert!((hits[0]["score"].as_f64().unwrap() - 4.0 / 6.0).abs() < 1e-9);
    assert_eq!(hits[0]["situation"]["context"]["stop_type"], json!("final destination"));

    let (_, hits) = get(&app, &format!("/api/library/situations?situation={id}&min_score=0.7")).await;
    assert!(hits.as_array().unwrap().is_empty());
    let (status, err) = get(&app, "/api/library/situations?min_score=2").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["path"], json!("min_score"));

    let (status, palette) = get(&app, "/api/palette").await;
    assert_eq!(status, StatusCode::OK);
    let verbs: Vec<&str> = palette["verbs"].as_array().unwrap().iter().map(|v| v["verb"].as_str().unwrap()).collect();
    assert_eq!(verbs, ["add", "delete", "modify", "abort"]);
    assert_eq!(palette["verbs"][0]["anchors"], json!(["after", "before"]));
    let templates: Vec<&str> =
        palette["templates"].as_array().unwrap().iter().map(|t| t["task_name"].as_str().unwrap()).collect();
    for name in ["trip_task", "drive_task", "onboard_task"] {
        assert!(templates.contains(&name), "{templates:?}");
    }

    post(&app, &format!("/api/situations/{id}/remedy"), &stop_by_remedy()).await;
    tokio::task::spawn_blocking(move || session.join()).await.unwrap().unwrap();
    let (_, hits) = get(&app, "/api/library/situations?name=POI_dropoff").await;
    assert_eq!(hits.as_array().unwrap().len(), 2);
    assert_eq!(hits[0]["score"], json!(1.0), "the stored case matches its own situation exactly");
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_runs_refuse_submissions() {
    let session = Session::start(script("window_leak.json"), RunConfig::default(), false).unwrap();
    let hub = session.hub.clone();
    tokio::task::spawn_blocking(move || session.join()).await.unwrap().unwrap();
    let app = router(hub);
    let (status, err) = post(&app, "/api/situations/run-s001/remedy", &stop_by_remedy()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], json!("not_escalated"));
    let (_, all) = get(&app, "/api/situations").await;
    assert_eq!(all.as_array().unwrap().len(), 3);
}
