use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use ubrl_cli::server::{router, AppState};
use ubrl_core::store::Store;

struct Api {
    app: Router,
    _dir: tempfile::TempDir,
}

impl Api {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("store")).unwrap();
        Self { app: router(Arc::new(AppState::new(store)), None), _dir: dir }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.call(method, uri, body).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn solve(&self, body: Value) -> String {
        let (status, accepted) = self.json(Method::POST, "/api/solve", Some(body)).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{accepted}");
        let job = accepted["job"].as_str().unwrap().to_string();
        for _ in 0..600 {
            let (status, j) = self.json(Method::GET, &format!("/api/jobs/{job}"), None).await;
            assert_eq!(status, StatusCode::OK);
            match j["status"].as_str().unwrap() {
                "done" => return j["coverage_id"].as_str().unwrap().to_string(),
                "failed" => panic!("job failed: {j}"),
                _ => tokio::time::sleep(Duration::from_millis(20)).await,
            }
        }
        panic!("job {job} did not finish");
    }
}

fn mining_request() -> Value {
    json!({
        "env": "mining-world",
        "grid": { "family": "mining", "lo": "0", "hi": "20", "count": 21 },
        "criterion": "esr",
    })
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_environments() {
    let api = Api::new();
    let (status, h) = api.json(Method::GET, "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h["status"], "ok");
    let (_, envs) = api.json(Method::GET, "/api/environments", None).await;
    let names: Vec<&str> = envs.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["gold-nuggets", "mining-world", "risky-path", "harvest-world"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn solve_then_fetch_stored_bytes() {
    let api = Api::new();
    let id = api.solve(mining_request()).await;
    let (status, raw) = api.call(Method::GET, &format!("/api/coverage/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let set = ubrl_core::CoverageSet::from_json(std::str::from_utf8(&raw).unwrap()).unwrap();
    assert_eq!(set.entries.len(), 21);
    assert_eq!(raw, set.to_json().into_bytes());

    let (_, list) = api.json(Method::GET, "/api/coverage", None).await;
    assert_eq!(list[0]["id"], id.as_str());
    assert_eq!(list[0]["environment"]["name"], "mining-world");
}

#[tokio::test(flavor = "multi_thread")]
async fn what_if_reevaluates_nearest_policy() {
    let api = Api::new();
    let id = api.solve(mining_request()).await;
    let (status, on) = api.json(Method::GET, &format!("/api/coverage/{id}/what-if?param=4"), None).await;
    assert_eq!(status, StatusCode::OK, "{on}");
    assert_eq!(on["nearest"], false);
    assert_eq!(on["evaluation"]["value"], on["stored"]["value"]);

    let (status, off) = api.json(Method::GET, &format!("/api/coverage/{id}/what-if?param=4.4"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(off["nearest"], true);
    assert_eq!(off["grid_param"], "4");
    assert_eq!(off["evaluation"]["utility"]["params"]["harm"], "4.4");

    let (status, err) = api.json(Method::GET, &format!("/api/coverage/{id}/what-if?param=25"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "out_of_range");
    let (status, err) = api.json(Method::GET, &format!("/api/coverage/{id}/what-if?param=abc"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "bad_request");
}

#[tokio::test(flavor = "multi_thread")]
async fn rollouts_are_seeded() {
    let api = Api::new();
    let id = api.solve(mining_request()).await;
    let uri = format!("/api/coverage/{id}/rollout");
    let (status, a) = api.json(Method::POST, &uri, Some(json!({ "param": "10", "seed": 5 }))).await;
    assert_eq!(status, StatusCode::OK, "{a}");
    let (_, b) = api.json(Method::POST, &uri, Some(json!({ "param": "10", "seed": 5 }))).await;
    assert_eq!(a, b);
    assert_eq!(a["trajectory"]["steps"].as_array().unwrap().len(), 5);
}

#[tokio::test(flavor = "multi_thread")]
async fn selections_are_idempotent_per_token() {
    let api = Api::new();
    let id = api.solve(mining_request()).await;
    let uri = format!("/api/coverage/{id}/selection");
    let body = json!({ "param": "6", "note": "go with this", "token": "t-1" });
    let (status, first) = api.json(Method::POST, &uri, Some(body.clone())).await;
    assert_eq!(status, StatusCode::CREATED, "{first}");
    let (status, again) = api.json(Method::POST, &uri, Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first, again);

    let (status, err) = api.json(Method::POST, &uri, Some(json!({ "param": "6.5" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["code"], "off_grid");

    let (_, list) = api.json(Method::GET, &format!("/api/coverage/{id}/selections"), None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["grid_index"], 6);
}

#[tokio::test(flavor = "multi_thread")]
async fn error_shapes() {
    let api = Api::new();
    let (status, e) = api.json(Method::GET, "/api/coverage/not-an-id", None).await;
    assert_eq!((status, e["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_id")));
    let (status, e) = api.json(Method::GET, "/api/coverage/0123456789ab-1", None).await;
    assert_eq!((status, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (status, e) = api.json(Method::GET, "/api/jobs/job-99", None).await;
    assert_eq!((status, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (status, e) = api.json(Method::GET, "/api/nothing-here", None).await;
    assert_eq!((status, e["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));

    let (status, e) = api.call(Method::POST, "/api/solve", Some(json!({ "env": 3 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(&e));

    let bad_grid = json!({ "env": "mining-world", "grid": { "family": "mining", "lo": "5", "hi": "1", "count": 3 } });
    let (status, e) = api.json(Method::POST, "/api/solve", Some(bad_grid)).await;
    assert_eq!((status, e["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("unprocessable")));
    assert!(e["message"].as_str().unwrap().contains("lo <= hi"), "{e}");

    let learner = json!({ "env": "gold-nuggets", "grid": { "family": "discount", "lo": "0", "hi": "1", "count": 2 }, "solver": { "kind": "multi-gamma-q" } });
    let (status, _) = api.json(Method::POST, "/api/solve", Some(learner)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread")]
async fn failed_jobs_report_the_error() {
    let api = Api::new();
    // Exact enumeration of a 60-step single-state MDP overflows the path cap.
    let body = json!({
        "env": "mining-world",
        "params": { "horizon": "60" },
        "grid": { "family": "mining", "lo": "0", "hi": "1", "count": 2 },
        "solver": { "kind": "exact" },
    });
    let (status, accepted) = api.json(Method::POST, "/api/solve", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job = accepted["job"].as_str().unwrap();
    for _ in 0..500 {
        let (_, j) = api.json(Method::GET, &format!("/api/jobs/{job}"), None).await;
        if j["status"] == "failed" {
            assert_eq!(j["error"]["code"], "unprocessable");
            return;
        }
        assert_eq!(j["status"], "running", "{j}");
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job never failed");
}
