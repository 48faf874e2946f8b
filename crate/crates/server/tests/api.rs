use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Body;
use axum::extract::connect_info::MockConnectInfo;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pps_core::dictionary::{fingerprint_id, Dictionary};
use pps_core::{Category, ScreeningStats, ScreeningStatus, Verdict};
use pps_ledger::{Event, Ledger, Suspect};
use pps_server::{router, AddressLimiter, AppState, PaperDetail};
use serde_json::{json, Value};
use tower::ServiceExt;

fn seed_fp() -> String {
    fingerprint_id("fake neural organization")
}

fn fixture_ledger(total: usize, problematic: usize) -> Arc<Ledger> {
    let ledger = Ledger::in_memory();
    let (papers, assessments) = pps_testkit::counts_fixture(total, problematic, &seed_fp(), Category::Tortured);
    let mut events = vec![Event::DictionaryInstalled {
        at: pps_testkit::epoch_plus(0),
        dictionary: Dictionary::seed(),
    }];
    events.extend(papers.into_iter().map(|paper| Event::PaperInserted { paper }));
    events.extend(
        assessments
            .into_iter()
            .map(|assessment| Event::AssessmentAppended { assessment }),
    );
    ledger.import_events(events).unwrap();
    Arc::new(ledger)
}

fn seeded() -> Arc<Ledger> {
    let ledger = Ledger::in_memory();
    ledger.ensure_dictionary(Dictionary::seed()).unwrap();
    Arc::new(ledger)
}

fn app(ledger: &Arc<Ledger>) -> Router {
    router(AppState::new(ledger.clone()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn assert_envelope(v: &Value, code: &str) {
    assert_eq!(v["error_code"], code, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()), "{v}");
}

#[tokio::test]
async fn stats_on_the_fixture_ledger() {
    let ledger = fixture_ledger(2088, 744);
    let app = app(&ledger);
    let (status, body) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    let stats: ScreeningStats = serde_json::from_value(body).unwrap();
    assert_eq!(
        (stats.total_suspects, stats.assessed, stats.awaiting),
        (2088, 744, 1344)
    );
    assert_eq!(stats, ledger.stats());

    let (_, page) = call(&app, "GET", "/api/papers?status=awaiting", None).await;
    assert_eq!(page["total"], 1344);
    let (_, page) = call(&app, "GET", "/api/papers?status=problematic&category=tortured", None).await;
    assert_eq!(page["total"], 744);
    let (_, page) = call(&app, "GET", "/api/papers?category=scigen", None).await;
    assert_eq!(page["total"], 0);
}

#[tokio::test]
async fn empty_ledger() {
    let app = app(&seeded());
    let (status, body) = call(&app, "GET", "/api/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        (body["total_suspects"].as_u64(), body["awaiting"].as_u64()),
        (Some(0), Some(0))
    );
    let (status, page) = call(&app, "GET", "/api/papers?status=awaiting", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["items"], json!([]));
    assert_eq!(page["total"], 0);
}

#[tokio::test]
async fn pagination_is_stable_and_complete() {
    let app = app(&fixture_ledger(250, 0));
    let mut seen = Vec::new();
    for page in 1..=3 {
        let (status, body) = call(&app, "GET", &format!("/api/papers?page={page}&page_size=100"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["total_pages"], 3);
        let ids: Vec<String> = body["items"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["paper_id"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(ids.len(), if page < 3 { 100 } else { 50 });
        seen.extend(ids);
    }
    let unique: HashSet<&String> = seen.iter().collect();
    assert_eq!(unique.len(), 250);
    // newest first: fixture papers are created in id order
    assert_eq!(seen[0], "paper-00249");
    assert_eq!(seen[249], "paper-00000");
    let (_, again) = call(&app, "GET", "/api/papers?page=2&page_size=100", None).await;
    assert_eq!(again["items"][0]["paper_id"], seen[100].as_str());
    let (_, beyond) = call(&app, "GET", "/api/papers?page=4&page_size=100", None).await;
    assert_eq!(beyond["items"], json!([]));
}

#[tokio::test]
async fn invalid_requests_use_the_envelope() {
    let app = app(&fixture_ledger(3, 0));
    for uri in [
        "/api/papers?status=pending",
        "/api/papers?category=poetry",
        "/api/papers?page=0",
        "/api/papers?page=abc",
        "/api/papers?page_size=0",
        "/api/papers?page_size=5000",
        "/api/proposals?state=maybe",
    ] {
        let (status, body) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert_envelope(&body, "bad_request");
    }
    let (status, body) = call(&app, "GET", "/api/nothing-here", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
}

#[tokio::test]
async fn paper_detail_explains_hits() {
    let ledger = fixture_ledger(2, 0);
    let app = app(&ledger);
    let (status, body) = call(&app, "GET", "/api/papers/paper-00001", None).await;
    assert_eq!(status, StatusCode::OK);
    let detail: PaperDetail = serde_json::from_value(body).unwrap();
    assert_eq!(detail.status, ScreeningStatus::Awaiting);
    assert!(detail.assessments.is_empty());
    assert_eq!(detail.hits.len(), 1);
    let explanation = detail.hits[0].explanation.as_ref().unwrap();
    assert_eq!(explanation.pattern, "fake neural organization");
    assert_eq!(explanation.category, Category::Tortured);
    assert_eq!(
        explanation.expected_phrase.as_deref(),
        Some("artificial neural network")
    );
    assert_eq!(detail.record.paper_id, "paper-00001");

    let (status, body) = call(&app, "GET", "/api/papers/paper-99999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
}

#[tokio::test]
async fn assessments_drive_status_and_stats() {
    let ledger = fixture_ledger(5, 0);
    let app = app(&ledger);
    let before = ledger.stats();
    let (status, stored) = call(
        &app,
        "POST",
        "/api/papers/paper-00002/assessments",
        Some(json!({"verdict": "problematic", "assessor": "alice", "note": "tortured phrase"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(stored["assessor"], "alice");
    assert!(stored["timestamp"].is_string());

    // read-your-writes
    let (_, detail) = call(&app, "GET", "/api/papers/paper-00002", None).await;
    let detail: PaperDetail = serde_json::from_value(detail).unwrap();
    assert_eq!(detail.status, ScreeningStatus::Assessed(Verdict::Problematic));
    let (_, stats) = call(&app, "GET", "/api/stats", None).await;
    let after: ScreeningStats = serde_json::from_value(stats).unwrap();
    assert_eq!(after.total_suspects, before.total_suspects);
    assert_eq!(after.awaiting, before.awaiting - 1);
    assert_eq!(after.assessed, before.assessed + 1);

    // opposite second verdict ties
    call(
        &app,
        "POST",
        "/api/papers/paper-00002/assessments",
        Some(json!({"verdict": "not_problematic", "assessor": "bob"})),
    )
    .await;
    let (_, detail) = call(&app, "GET", "/api/papers/paper-00002", None).await;
    let detail: PaperDetail = serde_json::from_value(detail).unwrap();
    assert_eq!(detail.status, ScreeningStatus::Assessed(Verdict::Unsure));
    assert_eq!(detail.assessments.len(), 2);
    assert!(detail.assessments[0].timestamp <= detail.assessments[1].timestamp);
    assert_eq!(detail.assessments[0].assessor, "alice");
}

#[tokio::test]
async fn bad_assessments_leave_the_ledger_unchanged() {
    let ledger = fixture_ledger(2, 0);
    let app = app(&ledger);
    let events = ledger.event_count();
    let cases = [
        (
            "/api/papers/ghost/assessments",
            json!({"verdict": "problematic", "assessor": "a"}),
            StatusCode::NOT_FOUND,
        ),
        (
            "/api/papers/paper-00000/assessments",
            json!({"verdict": "maybe", "assessor": "a"}),
            StatusCode::BAD_REQUEST,
        ),
        (
            "/api/papers/paper-00000/assessments",
            json!({"verdict": "unsure", "assessor": "  "}),
            StatusCode::BAD_REQUEST,
        ),
        (
            "/api/papers/paper-00000/assessments",
            json!({"assessor": "a"}),
            StatusCode::UNPROCESSABLE_ENTITY,
        ),
    ];
    for (uri, body, expected) in cases {
        let (status, reply) = call(&app, "POST", uri, Some(body.clone())).await;
        assert_eq!(status, expected, "{body}");
        assert!(reply["error_code"].is_string(), "{reply}");
    }
    let resp = app
        .clone()
        .oneshot(
            Request::post("/api/papers/paper-00000/assessments")
                .header("content-type", "application/json")
                .body(Body::from("{not json"))
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(ledger.event_count(), events);
    assert!(ledger.assessments().is_empty());
}

#[tokio::test]
async fn proposal_lifecycle() {
    let ledger = seeded();
    let app = app(&ledger);
    let (status, prop) = call(
        &app,
        "POST",
        "/api/proposals",
        Some(json!({
            "pattern": "Counterfeit Consciousness",
            "category": "tortured",
            "expected_phrase": "artificial intelligence",
            "proposer": "carol"
        })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(prop["state"], "open");
    assert_eq!(prop["pattern"], "counterfeit consciousness");
    let id = prop["proposal_id"].as_str().unwrap().to_string();
    // not matched against anything yet
    assert_eq!(ledger.dictionary().version, 1);

    let (_, open) = call(&app, "GET", "/api/proposals?state=open", None).await;
    assert_eq!(open.as_array().unwrap().len(), 1);

    let (status, resolved) = call(
        &app,
        "POST",
        &format!("/api/proposals/{id}/resolution"),
        Some(json!({"decision": "approve", "note": "seen in three papers"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(resolved["state"], "approved");
    let fp_id = resolved["fingerprint_id"].as_str().unwrap().to_string();

    let (_, dict) = call(&app, "GET", "/api/dictionary", None).await;
    assert_eq!(dict["version"], 2);
    assert_eq!(dict["versions"].as_array().unwrap().len(), 2);
    assert!(dict["fingerprints"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f["id"] == fp_id.as_str() && f["status"] == "active"));

    let (status, body) = call(
        &app,
        "POST",
        &format!("/api/proposals/{id}/resolution"),
        Some(json!({"decision": "approve"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_envelope(&body, "conflict");
    assert_eq!(ledger.dictionary().version, 2);

    // the approved pattern is now a duplicate
    let (status, body) = call(
        &app,
        "POST",
        "/api/proposals",
        Some(json!({"pattern": "counterfeit consciousness", "category": "tortured", "expected_phrase": "ai", "proposer": "dan"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["details"]["existing_id"], fp_id.as_str());
}

#[tokio::test]
async fn rejection_and_bad_proposals() {
    let ledger = seeded();
    let app = app(&ledger);
    let (status, body) = call(
        &app,
        "POST",
        "/api/proposals",
        Some(json!({"pattern": "fake neural organization", "category": "tortured", "expected_phrase": "x y", "proposer": "e"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["details"]["existing_id"], seed_fp().as_str());

    for bad in [
        json!({"pattern": "network", "category": "scigen", "proposer": "e"}),
        json!({"pattern": "two words", "category": "tortured", "proposer": "e"}),
        json!({"pattern": "two words", "category": "scigen", "expected_phrase": "x", "proposer": "e"}),
        json!({"pattern": "two words", "category": "limerick", "proposer": "e"}),
        json!({"pattern": "two words", "category": "scigen", "proposer": ""}),
    ] {
        let (status, body) = call(&app, "POST", "/api/proposals", Some(bad.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert_envelope(&body, "bad_request");
    }

    let (_, prop) = call(
        &app,
        "POST",
        "/api/proposals",
        Some(json!({"pattern": "quantum flux capacitance", "category": "scigen", "proposer": "e"})),
    )
    .await;
    let id = prop["proposal_id"].as_str().unwrap();
    let uri = format!("/api/proposals/{id}/resolution");
    let (status, _) = call(&app, "POST", &uri, Some(json!({"decision": "shelve"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(
        &app,
        "POST",
        &uri,
        Some(json!({"decision": "reject", "note": "too generic"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["state"], "rejected");
    assert_eq!(body["resolution_note"], "too generic");
    assert_eq!(ledger.dictionary().version, 1);
    let (status, _) = call(&app, "POST", &uri, Some(json!({"decision": "approve"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body) = call(
        &app,
        "POST",
        "/api/proposals/prop-999999/resolution",
        Some(json!({"decision": "approve"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "not_found");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_approvals_yield_one_fingerprint() {
    let ledger = seeded();
    let app = app(&ledger);
    let (_, prop) = call(
        &app,
        "POST",
        "/api/proposals",
        Some(json!({"pattern": "stochastic parrot garden", "category": "scigen", "proposer": "f"})),
    )
    .await;
    let uri = format!("/api/proposals/{}/resolution", prop["proposal_id"].as_str().unwrap());
    let before = ledger.dictionary().fingerprints.len();
    let tasks: Vec<_> = (0..100)
        .map(|_| {
            let app = app.clone();
            let uri = uri.clone();
            tokio::spawn(async move { call(&app, "POST", &uri, Some(json!({"decision": "approve"}))).await.0 })
        })
        .collect();
    let mut codes = Vec::new();
    for t in tasks {
        codes.push(t.await.unwrap());
    }
    let ok = codes.iter().filter(|c| **c == StatusCode::OK).count();
    let conflict = codes.iter().filter(|c| **c == StatusCode::CONFLICT).count();
    assert_eq!((ok, conflict), (1, 99));
    assert_eq!(ledger.dictionary().fingerprints.len(), before + 1);
    assert_eq!(ledger.dictionary().version, 2);
}

#[tokio::test]
async fn resolution_can_require_an_admin_token() {
    let ledger = seeded();
    let mut state = AppState::new(ledger.clone());
    state.admin_token = Some(Arc::from("letmein"));
    let app = router(state);
    let (_, prop) = call(
        &app,
        "POST",
        "/api/proposals",
        Some(json!({"pattern": "rolling stone garden", "category": "scigen", "proposer": "g"})),
    )
    .await;
    let uri = format!("/api/proposals/{}/resolution", prop["proposal_id"].as_str().unwrap());
    let (status, body) = call(&app, "POST", &uri, Some(json!({"decision": "approve"}))).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_envelope(&body, "unauthorized");

    let req = |token: &str| {
        Request::post(&uri)
            .header("content-type", "application/json")
            .header("authorization", format!("Bearer {token}"))
            .body(Body::from(r#"{"decision":"approve"}"#))
            .unwrap()
    };
    assert_eq!(
        app.clone().oneshot(req("wrong")).await.unwrap().status(),
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        app.clone().oneshot(req("letmein")).await.unwrap().status(),
        StatusCode::OK
    );
}

#[tokio::test]
async fn writes_are_rate_limited_per_address() {
    let ledger = fixture_ledger(1, 0);
    let mut state = AppState::new(ledger.clone());
    state.limiter = Arc::new(AddressLimiter::new(1, 2));
    let client_a = router(state.clone()).layer(MockConnectInfo(SocketAddr::from(([10, 0, 0, 1], 5000))));
    let client_b = router(state).layer(MockConnectInfo(SocketAddr::from(([10, 0, 0, 2], 5000))));
    let post = json!({"verdict": "unsure", "assessor": "h"});
    let uri = "/api/papers/paper-00000/assessments";
    assert_eq!(
        call(&client_a, "POST", uri, Some(post.clone())).await.0,
        StatusCode::CREATED
    );
    assert_eq!(
        call(&client_a, "POST", uri, Some(post.clone())).await.0,
        StatusCode::CREATED
    );
    let resp = client_a
        .clone()
        .oneshot(
            Request::post(uri)
                .header("content-type", "application/json")
                .body(Body::from(post.to_string()))
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::TOO_MANY_REQUESTS);
    assert!(resp.headers().contains_key("retry-after"));
    // reads are never limited; other addresses have their own budget
    assert_eq!(call(&client_a, "GET", "/api/stats", None).await.0, StatusCode::OK);
    assert_eq!(call(&client_b, "POST", uri, Some(post)).await.0, StatusCode::CREATED);
    assert_eq!(ledger.assessments().len(), 3);
}

#[tokio::test]
async fn healthz_and_dictionary() {
    let ledger = seeded();
    ledger
        .ingest(Suspect {
            doi: Some("10.1/h".into()),
            title: "t".into(),
            triggers: vec![pps_core::Trigger {
                fingerprint_id: seed_fp(),
                category: Category::Tortured,
            }],
            ..Default::default()
        })
        .unwrap();
    let app = app(&ledger);
    let (status, body) = call(&app, "GET", "/api/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["papers"], 1);
    let (_, dict) = call(&app, "GET", "/api/dictionary", None).await;
    assert_eq!(
        dict["active"].as_u64().unwrap() as usize,
        Dictionary::seed().active().count()
    );
}
