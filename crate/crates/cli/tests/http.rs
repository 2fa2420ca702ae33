use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rollout_eval::http::router;
use rollout_eval_core::fixtures;
use rollout_eval_core::report::ReportOptions;
use rollout_eval_core::service::SessionService;
use serde_json::{json, Value};
use tower::ServiceExt;

const POLICIES: [&str; 2] = ["diffusion-ckpt-4471", "act-baseline-0912"];

fn options() -> ReportOptions {
    ReportOptions { n_samples: 2000, ..ReportOptions::default() }
}

fn app(dir: &Path) -> Router {
    router(Arc::new(SessionService::open(dir).unwrap()), options(), None)
}

struct Reply {
    status: StatusCode,
    content_type: String,
    body: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let content_type = res.headers().get("content-type").map(|v| v.to_str().unwrap().to_owned()).unwrap_or_default();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    Reply { status, content_type, body: String::from_utf8(bytes.to_vec()).unwrap() }
}

fn new_session() -> Value {
    json!({
        "task": fixtures::energy_bar_task(),
        "policies": POLICIES,
        "repetitions": 2,
        "seed": 11,
    })
}

fn answers(success: bool) -> Value {
    json!({ "success": success, "picked_up": true, "collided": false })
}

async fn create(app: &Router) -> String {
    let r = call(app, Method::POST, "/sessions", Some(new_session())).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    r.json()["session_id"].as_str().unwrap().to_owned()
}

fn assert_error(r: &Reply, status: StatusCode, code: &str) {
    assert_eq!(r.status, status, "{}", r.body);
    let v = r.json();
    assert_eq!(v["error"], code, "{}", r.body);
    assert!(v["detail"].as_str().is_some_and(|d| !d.is_empty()));
}

#[tokio::test]
async fn full_session_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app).await;
    assert_eq!(call(&app, Method::GET, "/sessions", None).await.json()["sessions"], json!([id]));

    for i in 0..40 {
        let next = call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await.json();
        assert_eq!(next["status"], "assignment");
        assert_eq!(next["rollout_index"], i);
        assert_eq!(next["blinded_label"], format!("R-{i}"));
        assert_eq!(next["rubric"].as_array().unwrap().len(), 3);
        let body =
            json!({ "answers": answers(i % 4 != 0), "failure_note": if i % 4 == 0 { "grasp: slipped" } else { "" } });
        let ack = call(&app, Method::POST, &format!("/sessions/{id}/rollouts/{i}/rubric"), Some(body)).await;
        assert_eq!(ack.status, StatusCode::OK, "{}", ack.body);
        assert_eq!(ack.json()["progress"], json!({ "completed": i + 1, "total": 40 }));
    }
    let done = call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await.json();
    assert_eq!(done, json!({ "status": "complete", "progress": { "completed": 40, "total": 40 } }));

    let summary = call(&app, Method::POST, &format!("/sessions/{id}/finalize"), None).await;
    assert_eq!(summary.status, StatusCode::OK, "{}", summary.body);
    let summary = summary.json();
    assert_eq!(summary["plan"]["entries"].as_array().unwrap().len(), 40);
    let trials: u64 = summary["success"].as_array().unwrap().iter().map(|s| s["trials"].as_u64().unwrap()).sum();
    assert_eq!(trials, 40);
    assert_eq!(call(&app, Method::GET, &format!("/sessions/{id}/summary"), None).await.json(), summary);

    let md = call(&app, Method::GET, &format!("/sessions/{id}/report?format=markdown"), None).await;
    assert_eq!(md.status, StatusCode::OK);
    assert!(md.content_type.starts_with("text/markdown"));
    assert!(md.body.contains("## Failure analysis"));
    let js = call(&app, Method::GET, &format!("/sessions/{id}/report?format=json"), None).await;
    assert_eq!(js.content_type, "application/json");
    assert_eq!(js.json()["session_id"], id.as_str());

    assert_error(
        &call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await,
        StatusCode::CONFLICT,
        "session_unblinded",
    );
    assert_error(
        &call(&app, Method::POST, &format!("/sessions/{id}/finalize"), None).await,
        StatusCode::CONFLICT,
        "session_unblinded",
    );
}

#[tokio::test]
async fn errors_use_the_error_shape() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app).await;
    call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await;

    assert_error(&call(&app, Method::GET, "/sessions/nope/next", None).await, StatusCode::NOT_FOUND, "unknown_session");
    assert_error(&call(&app, Method::GET, "/nothing/here", None).await, StatusCode::NOT_FOUND, "not_found");

    let rubric = |n: &str| format!("/sessions/{id}/rollouts/{n}/rubric");
    let r = call(&app, Method::POST, &rubric("0"), Some(json!({ "answers": { "success": true } }))).await;
    assert_error(&r, StatusCode::UNPROCESSABLE_ENTITY, "missing_answers");
    assert!(r.json()["detail"].as_str().unwrap().contains("picked_up"));
    let r = call(&app, Method::POST, &rubric("3"), Some(json!({ "answers": answers(true) }))).await;
    assert_error(&r, StatusCode::CONFLICT, "not_current");
    let r = call(&app, Method::POST, &rubric("400"), Some(json!({ "answers": answers(true) }))).await;
    assert_error(&r, StatusCode::NOT_FOUND, "unknown_rollout");
    let r = call(&app, Method::POST, &rubric("-1"), Some(json!({ "answers": answers(true) }))).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "bad_request");
    let r = call(&app, Method::POST, &rubric("0"), Some(json!({ "answers": answers(true), "extra": 1 }))).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "bad_request");
    let r = call(&app, Method::POST, &rubric("1"), Some(json!({ "answers": answers(true), "amend": true }))).await;
    assert_error(&r, StatusCode::CONFLICT, "amend_mismatch");

    let r = call(&app, Method::GET, &format!("/sessions/{id}/report"), None).await;
    assert_error(&r, StatusCode::CONFLICT, "session_blinded");
    let r = call(&app, Method::GET, &format!("/sessions/{id}/summary"), None).await;
    assert_error(&r, StatusCode::CONFLICT, "session_blinded");
    let r = call(&app, Method::POST, &format!("/sessions/{id}/finalize"), Some(json!({}))).await;
    assert_error(&r, StatusCode::CONFLICT, "pending_rollouts");
    assert!(r.json()["detail"].as_str().unwrap().starts_with("pending rollouts: 0, 1, 2"));

    let mut bad = new_session();
    bad["policies"] = json!(["same", "same"]);
    assert_error(
        &call(&app, Method::POST, "/sessions", Some(bad)).await,
        StatusCode::UNPROCESSABLE_ENTITY,
        "invalid_plan",
    );
    let mut bad = new_session();
    bad["task"]["rubric"] = json!([]);
    assert_error(
        &call(&app, Method::POST, "/sessions", Some(bad)).await,
        StatusCode::UNPROCESSABLE_ENTITY,
        "invalid_task",
    );
    let r = call(&app, Method::POST, "/sessions", None).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "bad_request");

    let r = call(&app, Method::POST, &format!("/sessions/{id}/finalize"), Some(json!({ "force": true }))).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["excluded"].as_array().unwrap().len(), 40);
    let r = call(&app, Method::GET, &format!("/sessions/{id}/report?format=pdf"), None).await;
    assert_error(&r, StatusCode::BAD_REQUEST, "unknown_format");
}

/// Drives random requests against every endpoint of blinded sessions and
/// checks that no response mentions a policy id.
#[tokio::test]
async fn blinded_responses_never_mention_policies() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let ids = [create(&app).await, create(&app).await];
    let mut rng = StdRng::seed_from_u64(4);
    let mut checked = 0;
    for _ in 0..600 {
        let id = &ids[rng.random_range(0..2)];
        let n = rng.random_range(0..42);
        let (method, uri, body) = match rng.random_range(0..10) {
            0 => (Method::GET, format!("/sessions/{id}"), None),
            1 | 2 => (Method::GET, format!("/sessions/{id}/next"), None),
            3..=5 => {
                let mut a = answers(rng.random());
                if rng.random_bool(0.1) {
                    a.as_object_mut().unwrap().remove("collided");
                }
                let body = json!({ "answers": a, "failure_note": "placement: off", "amend": rng.random_bool(0.2) });
                (Method::POST, format!("/sessions/{id}/rollouts/{n}/rubric"), Some(body))
            }
            6 => (
                Method::POST,
                format!("/sessions/{id}/notes"),
                Some(json!({ "text": "lights dimmed", "rollout_index": n })),
            ),
            7 => (Method::GET, format!("/sessions/{id}/report?format={}", ["json", "markdown"][n % 2]), None),
            8 => (Method::GET, format!("/sessions/{id}/summary"), None),
            _ => (Method::POST, format!("/sessions/{id}/finalize"), Some(json!({ "force": false }))),
        };
        let r = call(&app, method, &uri, body).await;
        for p in POLICIES {
            assert!(!r.body.contains(p), "{uri} leaked {p}: {}", r.body);
        }
        checked += 1;
    }
    assert_eq!(checked, 600);
    assert!(call(&app, Method::GET, "/sessions", None).await.body.len() > 2);

    // The fuzz never forced unblinding; doing so reveals the plan.
    let r = call(&app, Method::POST, &format!("/sessions/{}/finalize", ids[0]), Some(json!({ "force": true }))).await;
    assert!(POLICIES.iter().all(|p| r.body.contains(p)));
}

#[tokio::test]
async fn restart_resumes_the_same_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path());
        let id = create(&app).await;
        for i in 0..7 {
            call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await;
            let body = json!({ "answers": answers(true) });
            call(&app, Method::POST, &format!("/sessions/{id}/rollouts/{i}/rubric"), Some(body)).await;
        }
        let next = call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await.json();
        assert_eq!(next["rollout_index"], 7);
        id
    };
    let app = app(dir.path());
    let next = call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await.json();
    assert_eq!(next["rollout_index"], 7);
    assert_eq!(next["progress"]["completed"], 7);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_requests_serialize_per_session() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Arc::new(SessionService::open(dir.path()).unwrap());
    let app = router(svc.clone(), options(), None);
    let id = create(&app).await;
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let (app, id) = (app.clone(), id.clone());
            tokio::spawn(async move { call(&app, Method::GET, &format!("/sessions/{id}/next"), None).await.json() })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap()["rollout_index"], 0);
    }
    // One SessionCreated plus exactly one RolloutStarted.
    assert_eq!(svc.snapshot(&id).unwrap().next_seq(), 2);

    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let (app, id) = (app.clone(), id.clone());
            tokio::spawn(async move {
                let body = json!({ "answers": answers(true) });
                call(&app, Method::POST, &format!("/sessions/{id}/rollouts/0/rubric"), Some(body)).await.status
            })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        if t.await.unwrap() == StatusCode::OK {
            ok += 1;
        }
    }
    assert_eq!(ok, 1, "only the first submission for the current rollout succeeds");
    drop(app);
    let reopened = SessionService::open(dir.path()).unwrap();
    assert_eq!(reopened.snapshot(&id).unwrap().progress().completed, 1);
}

#[tokio::test]
async fn static_files_served_beside_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<h1>console</h1>").unwrap();
    let app = router(Arc::new(SessionService::open(dir.path()).unwrap()), options(), Some(assets.path()));
    let r = call(&app, Method::GET, "/index.html", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, "<h1>console</h1>");
    assert!(r.content_type.starts_with("text/html"));
    let r = call(&app, Method::GET, "/", None).await;
    assert_eq!(r.body, "<h1>console</h1>");
    create(&app).await;
    assert_eq!(call(&app, Method::GET, "/missing.js", None).await.status, StatusCode::NOT_FOUND);
}
