use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use dna::export::{search_document, to_canonical_json, SearchDocument};
use dna::maps::LAKE10_CELLS;
use dna::search::SearchConfig;
use dna::GridState;
use dna_service::{load_envs, router, AppState, RolloutResponse};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn maps_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../maps")
}

fn app() -> Router {
    router(Arc::new(AppState::new(load_envs(&maps_dir()).unwrap())))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn submit(app: &Router, body: Value) -> String {
    let (status, text) = call(app, Method::POST, "/api/search", Some(body)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{text}");
    let v: Value = serde_json::from_str(&text).unwrap();
    v["job"].as_str().unwrap().to_owned()
}

async fn wait_done(app: &Router, job: &str) -> Value {
    for _ in 0..2_000 {
        let (status, text) = call(app, Method::GET, &format!("/api/search/{job}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let v: Value = serde_json::from_str(&text).unwrap();
        match v["status"].as_str().unwrap() {
            "done" | "failed" => return v,
            _ => tokio::time::sleep(Duration::from_millis(5)).await,
        }
    }
    panic!("job {job} never finished");
}

fn lake_request(eps: f64) -> Value {
    json!({ "env": "lake10", "start": [0, 0], "epsilon": eps, "cells": LAKE10_CELLS })
}

#[tokio::test]
async fn lists_and_describes_environments() {
    let app = app();
    let (status, text) = call(&app, Method::GET, "/api/envs", None).await;
    assert_eq!(status, StatusCode::OK);
    let envs: Value = serde_json::from_str(&text).unwrap();
    let ids: Vec<&str> = envs.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["lake10", "open4"]);

    let (status, text) = call(&app, Method::GET, "/api/v1/env/lake10", None).await;
    assert_eq!(status, StatusCode::OK);
    let env: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(env["shape"], json!([10, 10]));
    let goal = env["values"][99].as_f64().unwrap();
    assert!((goal - 20.0).abs() < 1e-8);
    assert_eq!(env["environment"]["map"][0], "SFHFFHFHFF");

    let (status, _) = call(&app, Method::GET, "/api/env/nowhere", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn search_result_matches_the_library_document() {
    let app = app();
    let job = submit(&app, lake_request(0.99)).await;
    let view = wait_done(&app, &job).await;
    assert_eq!(view["status"], "done");
    assert_eq!(view["result"]["options"].as_array().unwrap().len(), 1);
    assert_eq!(view["progress"]["options"], 1);

    let (status, text) = call(&app, Method::GET, &format!("/api/v1/search/{job}/result"), None).await;
    assert_eq!(status, StatusCode::OK);
    let mdp = dna::maps::lake10().unwrap();
    let query = SearchConfig::new(GridState::yx(0, 0), 0.99, LAKE10_CELLS, 2, 3);
    let direct = to_canonical_json(&search_document(&mdp, &query).unwrap()).unwrap();
    assert_eq!(text, direct);
}

#[tokio::test]
async fn bad_requests_get_the_documented_codes() {
    let app = app();
    let (status, _) = call(&app, Method::POST, "/api/search", Some(json!({ "env": "lake10" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut body = lake_request(0.9);
    body["epsilon"] = json!(1.5);
    let (status, _) = call(&app, Method::POST, "/api/search", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut body = lake_request(0.9);
    body["env"] = json!("nowhere");
    let (status, _) = call(&app, Method::POST, "/api/search", Some(body)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    // (0, 2) is a hole, so V* there is zero.
    let mut body = lake_request(0.9);
    body["start"] = json!([0, 2]);
    let (status, text) = call(&app, Method::POST, "/api/search", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{text}");
    let (status, _) = call(&app, Method::GET, "/api/search/999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, Method::GET, "/api/search/999/result", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn rollouts_are_reproducible() {
    let app = app();
    let job = submit(&app, lake_request(0.9)).await;
    wait_done(&app, &job).await;
    let body = json!({ "job": job, "option": "0", "n": 500, "seed": 7 });
    let (s1, a) = call(&app, Method::POST, "/api/rollout", Some(body.clone())).await;
    let (s2, b) = call(&app, Method::POST, "/api/v1/rollout", Some(body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    let r: RolloutResponse = serde_json::from_str(&a).unwrap();
    assert_eq!(r.report.n, 500);
    assert_eq!(r.option, "0,0>3,0>3,3>3,6>6,6:E");
    assert_eq!(r.trajectories.len(), 20);
    for t in r.trajectories.iter().filter(|t| t.switch_index.is_some()) {
        let switches = t.delta.windows(2).filter(|w| !w[0] && w[1]).count();
        assert_eq!(switches, 1);
    }

    let by_id = json!({ "job": job, "option": r.option, "n": 500, "seed": 7, "trajectories": 50 });
    let (_, c) = call(&app, Method::POST, "/api/rollout", Some(by_id)).await;
    let c: RolloutResponse = serde_json::from_str(&c).unwrap();
    assert_eq!(c.report, r.report);
    assert_eq!(c.trajectories.len(), 20);

    let zero = json!({ "job": job, "option": "0", "n": 0, "seed": 7 });
    assert_eq!(call(&app, Method::POST, "/api/rollout", Some(zero)).await.0, StatusCode::BAD_REQUEST);
    let missing = json!({ "job": job, "option": "nope", "n": 5, "seed": 7 });
    assert_eq!(call(&app, Method::POST, "/api/rollout", Some(missing)).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn option_diff_lists_disagreeing_states() {
    let app = app();
    let job = submit(&app, lake_request(0.9)).await;
    let view = wait_done(&app, &job).await;
    let doc: SearchDocument = serde_json::from_value(view["result"].clone()).unwrap();
    let (status, text) = call(&app, Method::GET, &format!("/api/option/0/diff/2?job={job}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let diff: Value = serde_json::from_str(&text).unwrap();
    let expected = dna::export::DiffLayer::new(&doc.options[0], &doc.options[2]);
    assert_eq!(diff, serde_json::to_value(&expected).unwrap());
    assert!(!expected.states.is_empty());

    let (status, _) = call(&app, Method::GET, "/api/option/0/diff/2", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::GET, &format!("/api/option/0/diff/99?job={job}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_jobs_keep_their_own_results() {
    let app = app();
    let eps = [0.99, 0.95, 0.9, 0.95, 0.99];
    let mut jobs = Vec::new();
    for e in eps {
        jobs.push(submit(&app, lake_request(e)).await);
    }
    let mdp = dna::maps::lake10().unwrap();
    for (job, e) in jobs.iter().zip(eps) {
        wait_done(&app, job).await;
        let (_, text) = call(&app, Method::GET, &format!("/api/search/{job}/result"), None).await;
        let query = SearchConfig::new(GridState::yx(0, 0), e, LAKE10_CELLS, 2, 3);
        assert_eq!(text, to_canonical_json(&search_document(&mdp, &query).unwrap()).unwrap());
    }
}

#[tokio::test]
async fn finished_jobs_are_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::new(load_envs(&maps_dir()).unwrap()).with_persistence(dir.path());
    let app = router(Arc::new(state));
    let job = submit(&app, lake_request(0.99)).await;
    wait_done(&app, &job).await;
    let (_, text) = call(&app, Method::GET, &format!("/api/search/{job}/result"), None).await;
    let saved = std::fs::read_to_string(dir.path().join(format!("job-{job}.json"))).unwrap();
    assert_eq!(saved, text);
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let app = app();
    let req = Request::builder()
        .uri("/api/envs")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}

#[test]
fn loading_reports_the_offending_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "SFX\nFFG").unwrap();
    let err = load_envs(dir.path()).err().unwrap().to_string();
    assert!(err.contains("bad.txt"), "{err}");
    let empty = tempfile::tempdir().unwrap();
    assert!(load_envs(empty.path()).is_err());
}
