use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use olcais::runner::{iterations_csv, Command, Engine, ScheduleMode};
use olcais::simulator::FeedMode;
use olcais::{run_experiment, ExperimentConfig, PolicyKind};
use olcais_service::{router, AppState, EventBody, RunEvent, RunHandle, RunStatus};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fast(policy: PolicyKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        policy,
        seed,
        iterations_per_second: 5000.0,
        ..Default::default()
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let body = body.map(|v| Body::from(v.to_string())).unwrap_or_else(Body::empty);
    let req = Request::builder().method(method).uri(uri).body(body).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_of(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = send(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn create(app: &Router, cfg: &ExperimentConfig, start: bool) -> String {
    let uri = if start { "/runs".to_string() } else { "/runs?start=false".to_string() };
    let (s, v) = json_of(app, "POST", &uri, Some(serde_json::to_value(cfg).unwrap())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["run_id"].as_str().unwrap().to_string()
}

async fn handle(app: &Router, id: &str) -> RunHandle {
    let (s, b) = send(app, "GET", &format!("/runs/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    serde_json::from_slice(&b).unwrap()
}

async fn control(app: &Router, id: &str, body: Value) -> (StatusCode, Value) {
    json_of(app, "POST", &format!("/runs/{id}/control"), Some(body)).await
}

async fn wait_finished(app: &Router, id: &str) -> RunHandle {
    for _ in 0..2000 {
        let h = handle(app, id).await;
        if h.status.is_terminal() {
            return h;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    panic!("run {id} did not finish");
}

/// Parses a complete SSE body into (event name, id, payload) frames.
fn frames(body: &[u8]) -> Vec<(String, u64, RunEvent)> {
    let text = std::str::from_utf8(body).unwrap();
    let mut out = Vec::new();
    for block in text.split("\n\n").filter(|b| !b.trim().is_empty()) {
        let (mut name, mut id, mut data) = (None, None, None);
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event:") {
                name = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("id:") {
                id = Some(v.trim().parse().unwrap());
            } else if let Some(v) = line.strip_prefix("data:") {
                data = Some(serde_json::from_str(v.trim()).unwrap());
            }
        }
        if let (Some(n), Some(i), Some(d)) = (name, id, data) {
            out.push((n, i, d));
        }
    }
    out
}

async fn events(app: &Router, id: &str, from: usize) -> Vec<RunEvent> {
    let (s, b) = send(app, "GET", &format!("/runs/{id}/events?from={from}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let fr = frames(&b);
    for (name, seq, ev) in &fr {
        assert_eq!(name, ev.body.kind());
        assert_eq!(*seq, ev.seq);
    }
    fr.into_iter().map(|f| f.2).collect()
}

fn iteration_records(events: &[RunEvent]) -> Vec<olcais::IterationRecord> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Iteration { record } => Some(record.clone()),
            _ => None,
        })
        .collect()
}

#[tokio::test]
async fn create_returns_distinct_ids() {
    let app = router(AppState::new());
    let a = create(&app, &fast(PolicyKind::Internal, 1), true).await;
    let b = create(&app, &fast(PolicyKind::Internal, 1), true).await;
    assert_ne!(a, b);
    let h = handle(&app, &a).await;
    assert_eq!(h.run_id, a);
    assert_eq!(h.config.seed, 1);
}

#[tokio::test]
async fn invalid_config_names_the_field() {
    let app = router(AppState::new());
    let (s, v) = json_of(&app, "POST", "/runs", Some(json!({"m": 0}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "m");
    let (s, _) = send(&app, "POST", "/runs", Some(json!("not an object"))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_runs_are_404() {
    let app = router(AppState::new());
    for (m, uri) in [
        ("GET", "/runs/nope"),
        ("GET", "/runs/nope/events"),
        ("GET", "/runs/nope/metrics"),
        ("GET", "/runs/nope/export.csv"),
    ] {
        assert_eq!(send(&app, m, uri, None).await.0, StatusCode::NOT_FOUND, "{uri}");
    }
    let (s, _) = control(&app, "nope", json!({"command": "pause"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn full_replay_is_gapless_and_ends_finished() {
    let app = router(AppState::new());
    let cfg = fast(PolicyKind::TwoAgent, 3);
    let id = create(&app, &cfg, true).await;
    let evs = events(&app, &id, 0).await;
    for (i, e) in evs.iter().enumerate() {
        assert_eq!(e.seq, i as u64);
    }
    assert!(evs.windows(2).all(|w| w[1].iteration >= w[0].iteration));
    assert!(matches!(evs.last().unwrap().body, EventBody::Status { status: RunStatus::Finished, .. }));
    assert_eq!(iteration_records(&evs), run_experiment(&cfg).unwrap().records);
}

#[tokio::test]
async fn concurrent_subscribers_see_the_same_log() {
    let app = router(AppState::new());
    let id = create(&app, &fast(PolicyKind::OneAgent, 5), true).await;
    let (a, b) = tokio::join!(events(&app, &id, 0), events(&app, &id, 0));
    assert_eq!(a, b);
}

#[tokio::test]
async fn late_subscriber_resumes_without_gaps() {
    let app = router(AppState::new());
    let cfg = ExperimentConfig {
        iterations_per_second: 1000.0,
        ..fast(PolicyKind::Internal, 9)
    };
    let id = create(&app, &cfg, true).await;
    let all = events(&app, &id, 0).await;
    let from = 50;
    let tail = events(&app, &id, from).await;
    let start = all.iter().position(|e| e.iteration >= from).unwrap();
    assert_eq!(tail, all[start..]);
    assert_eq!(iteration_records(&tail)[0].iteration, from);
}

#[tokio::test]
async fn export_and_metrics_match_the_batch_run() {
    let app = router(AppState::new());
    let cfg = fast(PolicyKind::Internal, 42);
    let id = create(&app, &cfg, true).await;
    wait_finished(&app, &id).await;
    let offline = run_experiment(&cfg).unwrap();

    let req = Request::get(format!("/runs/{id}/export.csv")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/csv");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(bytes.to_vec(), iterations_csv(&offline.records));

    let (s, b) = send(&app, "GET", &format!("/runs/{id}/metrics"), None).await;
    assert_eq!(s, StatusCode::OK);
    let reports: Vec<olcais::MetricsReport> = serde_json::from_slice(&b).unwrap();
    assert_eq!(reports, offline.metrics);
}

#[tokio::test]
async fn impossible_commands_conflict() {
    let app = router(AppState::new());
    let id = create(&app, &fast(PolicyKind::Internal, 1), false).await;
    let (s, _) = control(&app, &id, json!({"command": "fix_disruption"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = control(&app, &id, json!({"command": "pause"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = control(&app, &id, json!({"command": "warp"})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    control(&app, &id, json!({"command": "resume"})).await;
    wait_finished(&app, &id).await;
    let (s, _) = control(&app, &id, json!({"command": "resume"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn policy_switch_before_start_equals_an_offline_run() {
    let app = router(AppState::new());
    let cfg = fast(PolicyKind::Internal, 11);
    let id = create(&app, &cfg, false).await;
    assert_eq!(handle(&app, &id).await.status, RunStatus::Configured);
    let (s, v) = control(&app, &id, json!({"command": "switch_policy", "policy": "rl-agent"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["acknowledged_iteration"], 0);
    control(&app, &id, json!({"command": "resume"})).await;
    wait_finished(&app, &id).await;
    let (_, csv) = send(&app, "GET", &format!("/runs/{id}/export.csv"), None).await;
    let offline = run_experiment(&ExperimentConfig {
        policy: PolicyKind::RlAgent,
        ..cfg
    })
    .unwrap();
    assert_eq!(csv, iterations_csv(&offline.records));
}

#[tokio::test]
async fn manual_injection_takes_effect_at_the_acknowledged_iteration() {
    let app = router(AppState::new());
    let cfg = ExperimentConfig {
        schedule: ScheduleMode::Manual,
        iteration_budget: Some(80),
        iterations_per_second: 200.0,
        ..fast(PolicyKind::Internal, 4)
    };
    let id = create(&app, &cfg, true).await;
    while handle(&app, &id).await.next_iteration < 10 {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let (s, v) = control(&app, &id, json!({"command": "inject_disruption"})).await;
    assert_eq!(s, StatusCode::OK);
    let at = v["acknowledged_iteration"].as_u64().unwrap() as usize;
    assert!(handle(&app, &id).await.disrupted);
    wait_finished(&app, &id).await;

    let evs = events(&app, &id, 0).await;
    let records = iteration_records(&evs);
    assert_eq!(records.len(), 80);
    for r in &records {
        assert_eq!(r.mode == FeedMode::Disrupted, r.iteration >= at, "iteration {}", r.iteration);
    }

    let mut engine = Engine::new(cfg).unwrap();
    for _ in 0..at {
        engine.step().unwrap();
    }
    engine.apply(Command::InjectDisruption { disruptor: None }).unwrap();
    engine.run_to_end().unwrap();
    assert_eq!(engine.records(), records.as_slice());
}

#[tokio::test]
async fn pause_holds_the_run_until_resumed() {
    let app = router(AppState::new());
    let cfg = ExperimentConfig {
        iterations_per_second: 100.0,
        ..fast(PolicyKind::Internal, 2)
    };
    let id = create(&app, &cfg, true).await;
    let (s, _) = control(&app, &id, json!({"command": "pause"})).await;
    assert_eq!(s, StatusCode::OK);
    let held = handle(&app, &id).await;
    assert_eq!(held.status, RunStatus::Paused);
    tokio::time::sleep(Duration::from_millis(60)).await;
    assert_eq!(handle(&app, &id).await.next_iteration, held.next_iteration);
    let (s, _) = control(&app, &id, json!({"command": "resume"})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(handle(&app, &id).await.status, RunStatus::Running);
    tokio::time::sleep(Duration::from_millis(60)).await;
    assert!(handle(&app, &id).await.next_iteration > held.next_iteration);
}
