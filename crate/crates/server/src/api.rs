use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::connect_info::MockConnectInfo;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{ConnectInfo, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pps_core::{
    explain_hit, Assessment, Category, DetectionHit, Explanation, Fingerprint, PaperRecord, ScreeningStats,
    ScreeningStatus, Verdict,
};
use pps_ledger::{
    Decision, DictionaryVersion, FingerprintProposal, Ledger, NewProposal, Page, PaperFilter, PaperSummary,
    ProposalState, StatusFilter, MAX_PAGE_SIZE,
};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::limit::AddressLimiter;

pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Clone)]
pub struct AppState {
    pub ledger: Arc<Ledger>,
    pub limiter: Arc<AddressLimiter>,
    pub admin_token: Option<Arc<str>>,
}

impl AppState {
    /// Open service: no write limit, no admin token.
    pub fn new(ledger: Arc<Ledger>) -> Self {
        AppState {
            ledger,
            limiter: Arc::new(AddressLimiter::disabled()),
            admin_token: None,
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainedHit {
    #[serde(flatten)]
    pub hit: DetectionHit,
    /// Absent only if the hit's fingerprint is unknown to the dictionary.
    pub explanation: Option<Explanation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperDetail {
    pub record: PaperRecord,
    pub hits: Vec<ExplainedHit>,
    pub assessments: Vec<Assessment>,
    pub status: ScreeningStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssessmentRequest {
    pub verdict: String,
    pub assessor: String,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProposalRequest {
    pub pattern: String,
    pub category: String,
    #[serde(default)]
    pub expected_phrase: Option<String>,
    pub proposer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolutionRequest {
    pub decision: String,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionaryView {
    pub version: u64,
    pub loaded_from: String,
    pub active: usize,
    pub fingerprints: Vec<Fingerprint>,
    pub versions: Vec<DictionaryVersion>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub papers: usize,
    pub dictionary_version: u64,
}

#[derive(Debug, Default, Deserialize)]
struct ListQuery {
    status: Option<String>,
    category: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct ProposalQuery {
    state: Option<String>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/healthz", get(healthz))
        .route("/api/stats", get(stats))
        .route("/api/dictionary", get(dictionary))
        .route("/api/papers", get(list_papers))
        .route("/api/papers/{id}", get(get_paper))
        .route("/api/papers/{id}/assessments", post(post_assessment))
        .route("/api/proposals", get(list_proposals).post(post_proposal))
        .route("/api/proposals/{id}/resolution", post(resolve_proposal))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), limit_writes))
        .with_state(state)
}

async fn limit_writes(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() != Method::GET && req.method() != Method::HEAD {
        let ext = req.extensions();
        let addr = ext
            .get::<ConnectInfo<SocketAddr>>()
            .map(|c| c.0.ip())
            .or_else(|| ext.get::<MockConnectInfo<SocketAddr>>().map(|c| c.0.ip()));
        if let Err(wait) = state.limiter.check(addr) {
            let secs = wait.as_secs_f64().ceil().max(1.0) as u64;
            let mut resp = ApiError::new(StatusCode::TOO_MANY_REQUESTS, "rate_limited", "too many write requests")
                .with_details(serde_json::json!({ "retry_after_secs": secs }))
                .into_response();
            resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(secs));
            return resp;
        }
    }
    next.run(req).await
}

/// Runs ledger work off the async executor; writes fsync.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|rej| ApiError::new(rej.status(), "bad_request", rej.body_text()))
}

fn parse_opt<T: std::str::FromStr>(raw: Option<String>) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|e: T::Err| ApiError::bad_request(e.to_string())),
    }
}

async fn healthz(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        papers: state.ledger.paper_count(),
        dictionary_version: state.ledger.dictionary().version,
    })
}

async fn stats(State(state): State<AppState>) -> Json<ScreeningStats> {
    Json(state.ledger.stats())
}

async fn dictionary(State(state): State<AppState>) -> Json<DictionaryView> {
    let dict = state.ledger.dictionary();
    Json(DictionaryView {
        version: dict.version,
        loaded_from: dict.loaded_from.clone(),
        active: dict.active().count(),
        fingerprints: dict.fingerprints.clone(),
        versions: state.ledger.dictionary_versions(),
    })
}

async fn list_papers(
    State(state): State<AppState>,
    query: Result<Query<ListQuery>, QueryRejection>,
) -> ApiResult<Json<Page<PaperSummary>>> {
    let Query(q) = query.map_err(|rej| ApiError::bad_request(rej.body_text()))?;
    let filter = PaperFilter {
        status: parse_opt::<StatusFilter>(q.status)?,
        category: parse_opt::<Category>(q.category)?,
    };
    let page = q.page.unwrap_or(1);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page_size > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request(format!(
            "page_size must be at most {MAX_PAGE_SIZE}"
        )));
    }
    let ledger = state.ledger.clone();
    blocking(move || Ok(ledger.list_papers(filter, page, page_size)?))
        .await
        .map(Json)
}

async fn get_paper(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PaperDetail>> {
    let view = state
        .ledger
        .paper_view(&id)
        .ok_or_else(|| ApiError::not_found(format!("paper {id:?} not found")))?;
    let dict = state.ledger.dictionary();
    let hits = view
        .paper
        .hits
        .iter()
        .map(|h| ExplainedHit {
            hit: h.clone(),
            explanation: explain_hit(h, &dict).ok(),
        })
        .collect();
    Ok(Json(PaperDetail {
        hits,
        record: view.paper,
        assessments: view.assessments,
        status: view.status,
    }))
}

async fn post_assessment(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<AssessmentRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Assessment>)> {
    let req = body(payload)?;
    let verdict: Verdict = req
        .verdict
        .trim()
        .parse()
        .map_err(|e: pps_core::ParseEnumError| ApiError::bad_request(e.to_string()))?;
    let ledger = state.ledger.clone();
    let stored = blocking(move || Ok(ledger.append_assessment(&id, verdict, &req.assessor, req.note)?)).await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn list_proposals(
    State(state): State<AppState>,
    query: Result<Query<ProposalQuery>, QueryRejection>,
) -> ApiResult<Json<Vec<FingerprintProposal>>> {
    let Query(q) = query.map_err(|rej| ApiError::bad_request(rej.body_text()))?;
    let filter = parse_opt::<ProposalState>(q.state)?;
    Ok(Json(state.ledger.proposals(filter)))
}

async fn post_proposal(
    State(state): State<AppState>,
    payload: Result<Json<ProposalRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<FingerprintProposal>)> {
    let req = body(payload)?;
    let category: Category = req
        .category
        .trim()
        .parse()
        .map_err(|e: pps_core::ParseEnumError| ApiError::bad_request(e.to_string()))?;
    let proposal = NewProposal {
        pattern: req.pattern,
        category,
        expected_phrase: req.expected_phrase,
        proposer: req.proposer,
    };
    let ledger = state.ledger.clone();
    let stored = blocking(move || Ok(ledger.submit_proposal(proposal)?)).await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

fn authorize(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(expected) = &state.admin_token else {
        return Ok(());
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented.is_some_and(|t| constant_time_eq(t.as_bytes(), expected.as_bytes())) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "resolving proposals requires the admin token",
        ))
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn resolve_proposal(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    payload: Result<Json<ResolutionRequest>, JsonRejection>,
) -> ApiResult<Json<FingerprintProposal>> {
    authorize(&state, &headers)?;
    let req = body(payload)?;
    let decision = match req.decision.trim() {
        "approve" => Decision::Approve,
        "reject" => Decision::Reject,
        other => {
            return Err(ApiError::bad_request(format!(
                "decision must be \"approve\" or \"reject\", got {other:?}"
            )))
        }
    };
    let ledger = state.ledger.clone();
    blocking(move || Ok(ledger.resolve_proposal(&id, decision, req.note)?))
        .await
        .map(Json)
}
