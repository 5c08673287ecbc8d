use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cadmap_core::enrich::Enricher;
use cadmap_core::escalation::{MockClient, MockPolicy};
use cadmap_core::io::{read_json, EntitiesFile, FeaturesFile};
use cadmap_core::{
    CompatibilityTable, FixedClock, MappingStatus, Pipeline, PipelineConfig, UnifiedSpec,
};
use cadmap_review::{router, AppState, SpecStore};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fig3_spec() -> UnifiedSpec {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/fig3");
    let features: FeaturesFile = read_json(&dir.join("features.json")).unwrap();
    let entities: EntitiesFile = read_json(&dir.join("entities.json")).unwrap();
    let table = CompatibilityTable::load_override(&dir.join("compat.json")).unwrap();
    let config = PipelineConfig::default();
    let enricher = Enricher::rule_based(config.enrich_confidence);
    let client = MockClient::new(MockPolicy::AlwaysReject);
    let clock = FixedClock::epoch();
    let pipeline = Pipeline {
        config,
        table,
        enricher: &enricher,
        client: &client,
        clock: &clock,
    };
    pipeline
        .map_part("fig3", &features.features, &entities.entities)
        .unwrap()
        .spec
}

fn app(dir: &tempfile::TempDir, seed: bool) -> Router {
    let store = SpecStore::open(dir.path()).unwrap();
    if seed {
        store.put("fig3", &fig3_spec()).unwrap();
    }
    let state = AppState {
        store: Arc::new(store),
        clock: Arc::new(FixedClock::epoch()),
    };
    router(state, None)
}

async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    reviewer: Option<&str>,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let mut req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    if let Some(r) = reviewer {
        req = req.header("x-reviewer", r);
    }
    let body = body
        .map(|b| Body::from(b.to_string()))
        .unwrap_or_else(Body::empty);
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

fn flagged_id(spec: &Value) -> String {
    spec["mappings"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["status"] == "flagged")
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string()
}

#[tokio::test]
async fn list_and_get() {
    let empty = tempfile::tempdir().unwrap();
    let (status, body) = call(&app(&empty, false), "GET", "/api/specs", None, None).await;
    assert_eq!((status, body), (StatusCode::OK, json!([])));

    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir, true);
    let (status, body) = call(&app, "GET", "/api/specs", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body[0]["id"], "fig3");
    assert_eq!(body[0]["flagged"], 1);

    let (status, body) = call(&app, "GET", "/api/specs/fig3", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["part_id"], "fig3");

    let (status, body) = call(&app, "GET", "/api/specs/nope", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
}

#[tokio::test]
async fn decisions_then_approval() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir, true);
    let (_, spec) = call(&app, "GET", "/api/specs/fig3", None, None).await;
    let id = flagged_id(&spec);

    let (status, body) = call(&app, "POST", "/api/specs/fig3/approve", Some("ana"), None).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");

    let (status, _) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        None,
        Some(json!({"mapping_id": id, "action": "accept"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("ana"),
        Some(json!({"mapping_id": "E9->F9", "action": "accept"})),
    )
    .await;
    assert_eq!(
        (status, &body["error"]),
        (StatusCode::UNPROCESSABLE_ENTITY, &json!("invalid"))
    );

    let (status, body) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("ana"),
        Some(json!({"mapping_id": "E4->F4", "action": "edit", "target_feature_id": "F404"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");

    let rev = spec["revision"].as_u64().unwrap();
    let (status, body) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("ana"),
        Some(json!({"entity_id": "E2", "action": "accept", "expected_revision": rev})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["revision"], rev + 1);
    let accepted = body["mappings"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["id"] == id.as_str())
        .unwrap();
    assert_eq!(
        (accepted["status"].clone(), accepted["method"].clone()),
        (json!("accepted"), json!("human"))
    );

    // Stale revision is refused and nothing changes.
    let (status, _) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("bo"),
        Some(json!({"mapping_id": "E4->F4", "action": "reject", "expected_revision": rev})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, body) = call(
        &app,
        "POST",
        "/api/specs/fig3/approve",
        Some("ana"),
        Some(json!({"expected_revision": rev + 1})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["approval"]["reviewer"], "ana");

    let (status, _) = call(&app, "POST", "/api/specs/fig3/approve", Some("ana"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("ana"),
        Some(json!({"mapping_id": "E4->F4", "action": "reject"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let persisted: UnifiedSpec = read_json(&dir.path().join("fig3.json")).unwrap();
    assert!(persisted.approval.is_some());
    assert_eq!(
        persisted.mapping(&id).unwrap().status,
        MappingStatus::Accepted
    );
}

#[tokio::test]
async fn reject_and_edit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir, true);
    let (status, body) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("ana"),
        Some(json!({"mapping_id": "E4->F4", "action": "reject", "rationale": "wrong edge"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["unconstrained_features"]
        .as_array()
        .unwrap()
        .contains(&json!("F4")));

    let (status, body) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("bo"),
        Some(json!({"mapping_id": "E3->F3", "action": "edit", "target_feature_id": "F4"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let edited = body["mappings"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["id"] == "E3->F4")
        .unwrap();
    assert_eq!(edited["status"], "human_edited");
    assert_eq!(
        edited["provenance"].as_array().unwrap().last().unwrap()["actor_id"],
        "bo"
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_decisions_are_not_lost() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir, true);
    let (_, spec) = call(&app, "GET", "/api/specs/fig3", None, None).await;
    let start = spec["revision"].as_u64().unwrap();
    let n = 16;
    let mut tasks = Vec::new();
    for i in 0..n {
        let app = app.clone();
        let action = if i % 2 == 0 { "reject" } else { "accept" };
        tasks.push(tokio::spawn(async move {
            call(
                &app,
                "POST",
                "/api/specs/fig3/decisions",
                Some(&format!("r{i}")),
                Some(json!({"mapping_id": "E1->F1", "action": action})),
            )
            .await
            .0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, spec) = call(&app, "GET", "/api/specs/fig3", None, None).await;
    assert_eq!(spec["revision"].as_u64().unwrap(), start + n);
    let record = spec["mappings"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["id"] == "E1->F1")
        .unwrap();
    let reviews = record["provenance"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["stage"] == "review")
        .count();
    assert_eq!(reviews as u64, n);
}

#[tokio::test]
async fn malformed_bodies_get_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir, true);
    let req = Request::builder()
        .method("POST")
        .uri("/api/specs/fig3/decisions")
        .header("content-type", "application/json")
        .header("x-reviewer", "ana")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let body: Value =
        serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(body["error"], "bad_request");

    let (status, body) = call(
        &app,
        "POST",
        "/api/specs/fig3/decisions",
        Some("ana"),
        Some(json!({"mapping_id": "E1->F1", "action": "shrug"})),
    )
    .await;
    assert_eq!(
        (status, &body["error"]),
        (StatusCode::UNPROCESSABLE_ENTITY, &json!("invalid"))
    );
}
