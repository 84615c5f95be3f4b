use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use refine_core::data::write_manifest;
use refine_core::sim::{generate_synthetic, SyntheticConfig};
use refine_core::SessionConfig;
use refine_server::api::{CreatedSession, FeedbackResponse, GroupsView, Health};
use refine_server::{router, AppState, ServerConfig, StartupError};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let dataset = generate_synthetic(&SyntheticConfig {
            labels: 4,
            per_label: 30,
            dim: 8,
            separation: 5.0,
            noise: 1.0,
            seed: 1,
        })
        .unwrap();
        let mut items = dataset.items().to_vec();
        items[1].thumbnail = Some("thumbs/1.png".into());
        write_manifest(dir.path().join("items.jsonl"), &items).unwrap();
        dataset
            .features()
            .unwrap()
            .write(dir.path().join("features.fvec"))
            .unwrap();
        std::fs::create_dir_all(dir.path().join("static/thumbs")).unwrap();
        std::fs::write(dir.path().join("static/thumbs/1.png"), b"png").unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, data_dir: &str) -> ServerConfig {
        ServerConfig {
            manifest: self.path("items.jsonl"),
            features: self.path("features.fvec"),
            data_dir: self.path(data_dir),
            static_root: Some(self.path("static")),
            defaults: SessionConfig::default(),
            logical_clock: true,
        }
    }

    fn app(&self, data_dir: &str) -> Router {
        router(Arc::new(AppState::load(&self.config(data_dir)).unwrap()))
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
        .await
        .unwrap();
    (status, bytes.to_vec())
}

async fn call_json<T: serde::de::DeserializeOwned>(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, T) {
    let (status, bytes) = call(app, method, uri, body).await;
    let parsed = serde_json::from_slice(&bytes)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&bytes)));
    (status, parsed)
}

async fn start(app: &Router, body: Value) -> CreatedSession {
    let (status, created): (_, CreatedSession) =
        call_json(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED);
    created
}

fn label(id: &str) -> &str {
    id.split('_').next().unwrap()
}

#[tokio::test]
async fn health_reports_dataset_size() {
    let fx = Fixture::new();
    let (status, health): (_, Health) = call_json(&fx.app("data"), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((health.items, health.dim, health.groups), (120, 8, 0));
}

#[test]
fn missing_features_is_a_startup_error() {
    let fx = Fixture::new();
    let mut cfg = fx.config("data");
    cfg.features = fx.path("nope.fvec");
    assert!(matches!(
        AppState::load(&cfg),
        Err(StartupError::Dataset(_))
    ));
}

#[tokio::test]
async fn batch_sizes_follow_feedback() {
    let fx = Fixture::new();
    let app = fx.app("data");
    let created = start(&app, json!({ "query_id": "class0_00", "scope": 20 })).await;
    assert_eq!(created.batch.items.len(), 20);
    assert_eq!(
        start(&app, json!({ "query_id": "class0_00", "scope": 5 }))
            .await
            .batch
            .items
            .len(),
        5
    );

    let id = created.session.id;
    let first: Vec<String> = created.batch.items.iter().map(|i| i.id.clone()).collect();
    let marked: Vec<&String> = first.iter().take(12).collect();
    let (status, resp): (_, FeedbackResponse) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({ "relevant_ids": marked })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let next = resp.batch.unwrap();
    assert_eq!(next.items.len(), 8);
    assert!(next.items.iter().all(|i| !first.contains(&i.id)));

    let (_, again): (_, Value) =
        call_json(&app, "GET", &format!("/sessions/{id}/batch"), None).await;
    assert_eq!(again["iteration"], 1);
    assert_eq!(again["items"].as_array().unwrap().len(), 8);

    let (_, none): (_, FeedbackResponse) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({ "relevant_ids": [] })),
    )
    .await;
    assert_eq!(none.batch.unwrap().items.len(), 8);

    let (status, metrics): (_, Value) =
        call_json(&app, "GET", &format!("/sessions/{id}/metrics"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(metrics["cumulative_relevant"], json!([12, 12]));
}

#[tokio::test]
async fn error_statuses() {
    let fx = Fixture::new();
    let app = fx.app("data");
    let (status, _) = call(&app, "GET", "/sessions/missing/batch", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        "POST",
        "/sessions/missing/feedback",
        Some(json!({ "relevant_ids": [] })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "query_id": "no-such-item" })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let created = start(&app, json!({ "query_id": "class1_00", "scope": 4 })).await;
    let id = created.session.id;
    let shown: Vec<String> = created.batch.items.iter().map(|i| i.id.clone()).collect();
    let foreign = "class3_29";
    assert!(!shown.iter().any(|s| s == foreign));
    let (status, body): (_, Value) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({ "relevant_ids": [shown[0], foreign] })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains(foreign), "{body}");

    let (status, done): (_, FeedbackResponse) = call_json(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({ "relevant_ids": shown })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::to_value(done.status).unwrap(), "COMPLETE");
    assert!(done.batch.is_none());
    assert_eq!(done.metrics.rf_iteration_number, 0);
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({ "relevant_ids": [] })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
}

/// Answers every batch with the items sharing the query's label.
async fn run_to_completion(app: &Router, query: &str, grouping: bool) -> FeedbackResponse {
    let created = start(app, json!({ "query_id": query, "grouping": grouping })).await;
    let id = created.session.id;
    let mut batch = created.batch;
    loop {
        let relevant: Vec<&str> = batch
            .items
            .iter()
            .map(|i| i.id.as_str())
            .filter(|i| label(i) == label(query))
            .collect();
        let (status, resp): (_, FeedbackResponse) = call_json(
            app,
            "POST",
            &format!("/sessions/{id}/feedback"),
            Some(json!({ "relevant_ids": relevant })),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
        match resp.batch.clone() {
            Some(next) => batch = next,
            None => return resp,
        }
    }
}

#[tokio::test]
async fn groups_persist_across_restart() {
    let fx = Fixture::new();
    let app = fx.app("data");
    for q in ["class0_00", "class1_00", "class0_05"] {
        run_to_completion(&app, q, true).await;
    }
    let (_, before): (_, GroupsView) = call_json(&app, "GET", "/groups", None).await;
    assert!(before.stats.group_count >= 2);
    drop(app);

    let restarted = fx.app("data");
    let (_, after): (_, GroupsView) = call_json(&restarted, "GET", "/groups", None).await;
    assert_eq!(after.groups, before.groups);
    let (_, health): (_, Health) = call_json(&restarted, "GET", "/health", None).await;
    assert_eq!(health.groups, before.stats.group_count);
}

#[tokio::test]
async fn exports() {
    let fx = Fixture::new();
    let app = fx.app("data");
    let (status, _) = call(&app, "POST", "/export/classes", None).await;
    assert_eq!(
        status,
        StatusCode::BAD_REQUEST,
        "empty store cannot be exported"
    );

    run_to_completion(&app, "class2_00", false).await;
    let (status, csv) = call(&app, "POST", "/export/pairs", None).await;
    assert_eq!(status, StatusCode::OK);
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("id_a,id_b,label,flagged\n"));
    assert!(csv.lines().count() > 1);

    let (status, manifest): (_, Value) = call_json(
        &app,
        "POST",
        "/export/classes",
        Some(json!({ "min_size": 10, "val_fraction": 0.2 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let group = &manifest["groups"][0];
    let size =
        group["train"].as_array().unwrap().len() + group["validation"].as_array().unwrap().len();
    assert_eq!(group["validation"].as_array().unwrap().len(), size / 5);
}

#[tokio::test]
async fn identical_requests_give_identical_responses() {
    async fn transcript(fx: &Fixture, data_dir: &str) -> Vec<Value> {
        let app = fx.app(data_dir);
        let mut out = Vec::new();
        for q in ["class0_00", "class0_03", "class3_01"] {
            out.push(serde_json::to_value(run_to_completion(&app, q, true).await).unwrap());
        }
        let (_, groups): (_, Value) = call_json(&app, "GET", "/groups", None).await;
        out.push(groups);
        out
    }
    let fx = Fixture::new();
    assert_eq!(transcript(&fx, "a").await, transcript(&fx, "b").await);
    let events = |d: &str| std::fs::read_to_string(fx.path(d).join("events.jsonl")).unwrap();
    assert_eq!(events("a"), events("b"));
}

#[tokio::test]
async fn interleaved_sessions_do_not_interfere() {
    let fx = Fixture::new();
    let solo = fx.app("solo");
    let alone_a = run_to_completion(&solo, "class0_00", false).await;
    let alone_b = run_to_completion(&solo, "class2_07", false).await;

    let app = fx.app("mixed");
    let a = start(&app, json!({ "query_id": "class0_00" })).await;
    let b = start(&app, json!({ "query_id": "class2_07" })).await;
    let mut batches = [
        (a.session.id, a.batch, "class0"),
        (b.session.id, b.batch, "class2"),
    ];
    let mut finals: [Option<FeedbackResponse>; 2] = [None, None];
    while finals.iter().any(Option::is_none) {
        for (k, (id, batch, lbl)) in batches.iter_mut().enumerate() {
            if finals[k].is_some() {
                continue;
            }
            let relevant: Vec<&str> = batch
                .items
                .iter()
                .map(|i| i.id.as_str())
                .filter(|i| label(i) == *lbl)
                .collect();
            let (_, resp): (_, FeedbackResponse) = call_json(
                &app,
                "POST",
                &format!("/sessions/{id}/feedback"),
                Some(json!({ "relevant_ids": relevant })),
            )
            .await;
            match resp.batch.clone() {
                Some(next) => *batch = next,
                None => finals[k] = Some(resp),
            }
        }
    }
    assert_eq!(finals[0].as_ref().unwrap().metrics, alone_a.metrics);
    assert_eq!(finals[1].as_ref().unwrap().metrics, alone_b.metrics);
}

#[tokio::test]
async fn thumbnails_and_static_files() {
    let fx = Fixture::new();
    let app = fx.app("data");
    let created = start(&app, json!({ "query_id": "class0_00", "scope": 29 })).await;
    let item = created
        .batch
        .items
        .iter()
        .find(|i| i.id == "class0_01")
        .unwrap();
    assert_eq!(item.thumbnail.as_deref(), Some("thumbs/1.png"));
    let (status, body) = call(&app, "GET", "/static/thumbs/1.png", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"png");
    assert!(Path::new(&fx.path("static/thumbs/1.png")).exists());
}

#[tokio::test]
async fn query_by_vector() {
    let fx = Fixture::new();
    let app = fx.app("data");
    let created = start(
        &app,
        json!({ "query_vector": vec![0.0; 8], "scope": 3, "weight_mode": "SIGMA_RATIO" }),
    )
    .await;
    assert_eq!(created.batch.items.len(), 3);
    let (status, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({ "query_vector": vec![0.0; 3] })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
