use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use qorc_core::device::{setup_fleet, Backend, Fleet, Node};
use qorc_core::scheduler::JobRecord;
use qorc_service::{router, state_with_fleet, ApiError, AppState, Config};

const BELL: &str = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[2];\ncreg c[2];\nh q[0];\ncx q[0],q[1];\nmeasure q -> c;\n";

fn toy_fleet() -> Fleet {
    let line = |id: &str, n: usize, e: f64| {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Node::new(Backend::uniform(id, n, &edges, e, e / 10.0, 0.02))
    };
    Fleet::new(vec![line("a", 3, 0.05), line("b", 3, 0.2), line("small", 2, 0.01)])
}

fn app(fleet: Fleet) -> Router {
    router(state_with_fleet(fleet, None).unwrap())
}

fn fidelity_job(name: &str) -> Value {
    json!({
        "name": name, "image": "qorc/runner", "qubits": 2, "cpu": 100, "mem": 64,
        "strategy": { "type": "fidelity", "target": 0.9, "qasm": BELL }, "seed": 3
    })
}

fn topology_job(name: &str, nodes: usize, edges: Value) -> Value {
    json!({
        "name": name, "image": "qorc/runner", "qubits": nodes, "cpu": 100, "mem": 64,
        "strategy": { "type": "topology", "graph": { "nodes": nodes, "edges": edges } }
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<(String, String)>, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp
        .headers()
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_str().unwrap_or_default().to_string()))
        .collect();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, headers, String::from_utf8(bytes.to_vec()).unwrap())
}

fn api_error(body: &str) -> ApiError {
    serde_json::from_str(body).unwrap_or_else(|e| panic!("not an ApiError ({e}): {body}"))
}

async fn wait_done(app: &Router, id: &str) -> JobRecord {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let (status, _, body) = call(app, "GET", &format!("/jobs/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let record: JobRecord = serde_json::from_str(&body).unwrap();
        if record.state.is_terminal() {
            return record;
        }
        assert!(Instant::now() < deadline, "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

#[tokio::test]
async fn submit_then_fetch_logs() {
    let app = app(toy_fleet());
    let (status, headers, body) = call(&app, "POST", "/jobs", Some(fidelity_job("bell"))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let id = serde_json::from_str::<Value>(&body).unwrap()["job_id"].as_str().unwrap().to_string();
    assert!(headers.iter().any(|(k, v)| k == "location" && *v == format!("/jobs/{id}")));

    let record = wait_done(&app, &id).await;
    assert_eq!(record.decision.as_deref(), Some("small"));
    let (status, _, logs) = call(&app, "GET", &format!("/jobs/{id}/logs"), None).await;
    assert_eq!(status, StatusCode::OK);
    let block = logs.split("########## Noisy Simulation ##########\n").nth(1).expect("counts block");
    assert!(block.trim_start().starts_with('{'), "{logs}");
}

#[tokio::test]
async fn validation_errors_name_the_field() {
    let app = app(toy_fleet());
    let mut body = fidelity_job("x");
    body.as_object_mut().unwrap().remove("strategy");
    let (status, _, text) = call(&app, "POST", "/jobs", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err = api_error(&text);
    assert_eq!(err.code, "ValidationError");
    assert!(err.message.contains("strategy"), "{text}");

    let bad_edge = topology_job("t", 3, json!([[0, 1], [1, 3]]));
    let (status, _, text) = call(&app, "POST", "/jobs", Some(bad_edge)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(api_error(&text).detail["path"].as_str().unwrap().starts_with("strategy"), "{text}");

    let mut target = fidelity_job("x");
    target["strategy"]["target"] = json!(0.0);
    let (_, _, text) = call(&app, "POST", "/jobs", Some(target)).await;
    assert_eq!(api_error(&text).detail["path"], "strategy.target");
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let app = app(toy_fleet());
    for uri in ["/jobs/job-999999", "/jobs/job-999999/logs", "/no/such/route"] {
        let (status, _, text) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        api_error(&text);
    }
}

#[tokio::test]
async fn logs_conflict_until_finished() {
    // A slow job occupies the drain loop so the second one is still queued.
    let app = app(setup_fleet(1));
    let slow = json!({
        "name": "slow", "image": "i", "qubits": 11, "cpu": 1, "mem": 1,
        "strategy": { "type": "fidelity", "target": 1.0,
                      "qasm": include_str!("../../core/benchmarks/bv.qasm") }
    });
    let (_, _, first) = call(&app, "POST", "/jobs", Some(slow)).await;
    let (_, _, second) = call(&app, "POST", "/jobs", Some(fidelity_job("queued"))).await;
    let first = serde_json::from_str::<Value>(&first).unwrap()["job_id"].as_str().unwrap().to_string();
    let second = serde_json::from_str::<Value>(&second).unwrap()["job_id"].as_str().unwrap().to_string();

    let (status, _, text) = call(&app, "GET", &format!("/jobs/{second}/logs"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(api_error(&text).code, "LogsNotReady");

    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let (_, _, text) = call(&app, "GET", "/cluster", None).await;
        let view: Value = serde_json::from_str(&text).unwrap();
        if view["running"] == json!(first) {
            assert_eq!(view["nodes"], 100);
            break;
        }
        assert!(Instant::now() < deadline, "never saw the running job");
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    wait_done(&app, &second).await;
    let (status, _, _) = call(&app, "GET", &format!("/jobs/{second}/logs"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn score_endpoint_matches_ranking() {
    let app = app(toy_fleet());
    let (status, _, _) = call(&app, "POST", "/score-prep", Some(fidelity_job("prep"))).await;
    assert_eq!(status, StatusCode::OK);
    let req = json!({ "job_name": "prep", "backend_id": "a" });
    let (status, _, first) = call(&app, "POST", "/score", Some(req.clone())).await;
    assert_eq!(status, StatusCode::OK, "{first}");
    let (_, _, again) = call(&app, "POST", "/score", Some(req)).await;
    assert_eq!(first, again);
    let score: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(score["strategy"], "fidelity");
    assert!(score["f_canary"].as_f64().unwrap() > 0.5);

    call(&app, "POST", "/score-prep", Some(topology_job("tri", 3, json!([[0, 1], [1, 2]])))).await;
    let (_, _, text) = call(&app, "POST", "/score", Some(json!({ "job_name": "tri", "backend_id": "small" }))).await;
    let score: Value = serde_json::from_str(&text).unwrap();
    assert!(score["value"].as_f64().unwrap() > 1.0, "{text}");

    let (status, _, text) = call(&app, "POST", "/score", Some(json!({ "job_name": "tri", "backend_id": "zz" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(api_error(&text).code, "UnknownBackend");
    let (status, _, _) = call(&app, "POST", "/score", Some(json!({ "job_name": "nope", "backend_id": "a" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn nodes_lists_labels() {
    let (_, _, text) = call(&app(setup_fleet(0)), "GET", "/nodes", None).await;
    let nodes: Vec<Value> = serde_json::from_str(&text).unwrap();
    assert_eq!(nodes.len(), 100);
    let keys: Vec<&String> = nodes[0]["labels"].as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 8);
    let (_, _, text) = call(&app(Fleet::new(vec![])), "GET", "/nodes", None).await;
    assert_eq!(text, "[]");
}

#[tokio::test]
async fn cors_headers_present() {
    let app = app(toy_fleet());
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/jobs")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
}

#[tokio::test]
async fn restart_reproduces_completed_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Config { data_dir: dir.path().to_path_buf(), fleet: None, seed: 4 };
    let before: Vec<String> = {
        let state = AppState::open(&cfg).unwrap();
        let app = router(state.clone());
        let mut ids = Vec::new();
        for job in [fidelity_job("one"), topology_job("two", 3, json!([[0, 1], [1, 2], [2, 0]]))] {
            let (_, _, text) = call(&app, "POST", "/jobs", Some(job)).await;
            ids.push(serde_json::from_str::<Value>(&text).unwrap()["job_id"].as_str().unwrap().to_string());
        }
        let mut bodies = Vec::new();
        for id in &ids {
            wait_done(&app, id).await;
            bodies.push(call(&app, "GET", &format!("/jobs/{id}"), None).await.2);
        }
        bodies
    };
    let app = router(AppState::open(&cfg).unwrap());
    for (i, body) in before.iter().enumerate() {
        let (_, _, now) = call(&app, "GET", &format!("/jobs/job-{:06}", i + 1), None).await;
        assert_eq!(&now, body);
    }
    let (_, _, text) = call(&app, "GET", "/nodes", None).await;
    assert_eq!(serde_json::from_str::<Vec<Value>>(&text).unwrap().len(), 100);
}
