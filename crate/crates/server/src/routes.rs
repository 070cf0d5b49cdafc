use std::sync::Arc;

use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use lle_core::extract::{Citation, PatientRecord};
use lle_core::kb::{lint_kb, load_kb, snapshot, Override, StackRef, DEFAULT_EXHAUSTIVE_LIMIT};
use lle_core::rule::TriBool;
use lle_core::session::{
    compute_stats, create_session, Adjustment, AuditEvent, Mutation, RecommendationResult, ReviewSession,
    SessionError, SessionState, Stage,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

/// `Json` whose rejections use the service error body.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let Json(value) = Json::<T>::from_request(req, state).await?;
        Ok(ApiJson(value))
    }
}

pub const ACTOR_HEADER: &str = "x-actor";

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/kb", post(register_kb).get(list_kb))
        .route("/kb/{ns}/{version}", get(get_kb))
        .route("/kb/{ns}/{version}/lint", post(lint_registered))
        .route("/sessions", post(new_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/factors", get(get_factors))
        .route("/sessions/{id}/factors/{name}", patch(override_factor))
        .route("/sessions/{id}/finalize-step1", post(finalize_step1))
        .route("/sessions/{id}/recommendations", get(get_recommendations))
        .route("/sessions/{id}/recommendations/{rid}", patch(adjust_recommendation))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/export", get(export))
        .route("/metrics", get(metrics))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(|| async { Json(json!({"status": "ok"})) }))
        .merge(api)
        .fallback(|| async { ApiError::not_found("NoRoute", "no such endpoint") })
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.bearer_token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or invalid bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

fn actor(headers: &HeaderMap) -> String {
    headers
        .get(ACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.trim().is_empty())
        .unwrap_or("clinician")
        .to_string()
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string())))
}

async fn register_kb(State(state): State<AppState>, body: axum::body::Bytes) -> ApiResult<impl IntoResponse> {
    let registry = state.registry.clone();
    let (artifact, warnings) = blocking(move || {
        let kb = load_kb(&body)?;
        let artifact = snapshot(&kb)?;
        let warnings = lint_kb(artifact.kb(), DEFAULT_EXHAUSTIVE_LIMIT);
        Ok((registry.register(artifact)?, warnings))
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "namespace": artifact.namespace(),
            "version": artifact.version(),
            "content_hash": artifact.content_hash(),
            "created_at": artifact.created_at(),
            "warnings": warnings,
        })),
    ))
}

async fn list_kb(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "artifacts": state.registry.list() }))
}

async fn get_kb(State(state): State<AppState>, Path((ns, version)): Path<(String, String)>) -> ApiResult<Response> {
    let artifact = state.registry.resolve(&ns, &version)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], artifact.to_json()).into_response())
}

async fn lint_registered(
    State(state): State<AppState>,
    Path((ns, version)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let artifact = state.registry.resolve(&ns, &version)?;
    let findings = lint_kb(artifact.kb(), DEFAULT_EXHAUSTIVE_LIMIT);
    let errors = findings.iter().filter(|f| f.is_error()).count();
    Ok(Json(json!({
        "artifact": artifact.label(),
        "content_hash": artifact.content_hash(),
        "errors": errors,
        "findings": findings,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    record: PatientRecord,
    stack: Vec<String>,
}

/// The session as clients see it.
#[derive(Serialize)]
pub struct SessionView<'a> {
    pub session_id: &'a str,
    pub patient_id: &'a str,
    pub stack: &'a [String],
    pub extractor_id: &'a str,
    pub state: SessionState,
    pub revision: u64,
    pub created_at: DateTime<Utc>,
    pub finalized_at: Option<DateTime<Utc>>,
    pub overrides: &'a [Override],
    pub warnings: &'a [lle_core::kb::LintFinding],
    pub factors: Vec<FactorView<'a>>,
    pub results: &'a [RecommendationResult],
    pub audit: &'a [AuditEvent],
}

#[derive(Serialize)]
pub struct CitedText<'a> {
    pub doc_id: &'a str,
    pub sentence_index: usize,
    pub text: &'a str,
}

#[derive(Serialize)]
pub struct FactorView<'a> {
    pub name: &'a str,
    pub question: &'a str,
    pub value: TriBool,
    pub explanation: &'a str,
    pub source: lle_core::extract::AnswerSource,
    pub extractor_id: &'a str,
    pub citations: Vec<CitedText<'a>>,
}

fn factor_views(session: &ReviewSession) -> Vec<FactorView<'_>> {
    let ekb = session.effective_kb();
    let record = &session.header.record;
    session
        .answers
        .answers
        .values()
        .map(|a| FactorView {
            name: &a.factor_name,
            question: ekb.factor(&a.factor_name).map_or("", |f| f.question.as_str()),
            value: a.value,
            explanation: &a.explanation,
            source: a.source,
            extractor_id: &a.extractor_id,
            citations: a
                .citations
                .iter()
                .map(|Citation { doc_id, sentence_index }| CitedText {
                    doc_id,
                    sentence_index: *sentence_index,
                    text: record.sentence(doc_id, *sentence_index).map_or("", |s| s.text.as_str()),
                })
                .collect(),
        })
        .collect()
}

fn session_view(session: &ReviewSession) -> SessionView<'_> {
    let h = &session.header;
    SessionView {
        session_id: &h.session_id,
        patient_id: &h.patient_id,
        stack: &h.stack,
        extractor_id: &h.extractor_id,
        state: session.state,
        revision: session.revision,
        created_at: h.created_at,
        finalized_at: session.finalized_at,
        overrides: &h.effective_kb.overrides,
        warnings: &h.effective_kb.warnings,
        factors: factor_views(session),
        results: &session.results,
        audit: &session.audit,
    }
}

async fn new_session(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<NewSession>,
) -> ApiResult<impl IntoResponse> {
    let refs = body
        .stack
        .iter()
        .map(|s| s.parse::<StackRef>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(ApiError::from)?;
    let session = blocking(move || {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = create_session(
            id,
            body.record,
            &state.registry,
            &refs,
            state.extractor.as_ref(),
            &state.tools,
            Utc::now(),
        )?;
        Ok(state.sessions.insert(session)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(session_view(&session)).expect("view"))))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.sessions.get(&id)?;
    Ok(Json(serde_json::to_value(session_view(&session)).expect("view")))
}

async fn get_factors(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.sessions.get(&id)?;
    Ok(Json(json!({
        "session_id": session.id(),
        "state": session.state,
        "revision": session.revision,
        "factors": factor_views(&session),
    })))
}

async fn get_recommendations(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.sessions.get(&id)?;
    Ok(Json(json!({
        "session_id": session.id(),
        "state": session.state,
        "revision": session.revision,
        "results": session.results,
    })))
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let session = state.sessions.get(&id)?;
    Ok(Json(serde_json::to_value(session.export()).expect("export")))
}

fn required_reason(reason: Option<String>) -> ApiResult<String> {
    match reason {
        Some(r) if !r.trim().is_empty() => Ok(r),
        _ => Err(ApiError::validation("MissingReason", "a non-empty reason is required")),
    }
}

/// Applies one mutation and answers with the new revision and its event.
async fn mutate<F>(state: AppState, id: String, f: F) -> ApiResult<Json<Value>>
where
    F: FnOnce(&mut ReviewSession) -> Result<(), SessionError> + Send + 'static,
{
    let session = blocking(move || Ok(state.sessions.mutate(&id, f)?)).await?;
    Ok(Json(json!({
        "session_id": session.id(),
        "state": session.state,
        "revision": session.revision,
        "event": session.audit.last(),
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorOverride {
    value: TriBool,
    reason: Option<String>,
    revision: u64,
}

async fn override_factor(
    State(state): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<FactorOverride>,
) -> ApiResult<Json<Value>> {
    let reason = required_reason(body.reason)?;
    let ctx = Mutation::now(actor(&headers)).at_revision(body.revision);
    mutate(state, id, move |s| s.override_factor(&name, body.value, &reason, &ctx).map(|_| ())).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RevisionOnly {
    revision: u64,
}

async fn finalize_step1(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<RevisionOnly>,
) -> ApiResult<Json<Value>> {
    let ctx = Mutation::now(actor(&headers)).at_revision(body.revision);
    let explainer = state.explainer.clone();
    let store = state.sessions.clone();
    let session = blocking(move || {
        Ok(store.mutate(&id, |s| s.finalize_step1(explainer.as_ref(), &ctx).map(|_| ()))?)
    })
    .await?;
    Ok(Json(json!({
        "session_id": session.id(),
        "state": session.state,
        "revision": session.revision,
        "results": session.results,
    })))
}

async fn finalize(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<RevisionOnly>,
) -> ApiResult<Json<Value>> {
    let ctx = Mutation::now(actor(&headers)).at_revision(body.revision);
    mutate(state, id, move |s| s.finalize(&ctx).map(|_| ())).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendationChange {
    action: String,
    #[serde(default)]
    payload: serde_json::Map<String, Value>,
    reason: Option<String>,
    revision: u64,
}

async fn adjust_recommendation(
    State(state): State<AppState>,
    Path((id, rid)): Path<(String, String)>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<RecommendationChange>,
) -> ApiResult<Json<Value>> {
    let reason = required_reason(body.reason)?;
    let mut tagged = body.payload;
    tagged.insert("action".into(), Value::String(body.action));
    tagged.insert("id".into(), Value::String(rid));
    let adjustment: Adjustment = serde_json::from_value(Value::Object(tagged))
        .map_err(|e| ApiError::validation("InvalidAdjustment", e.to_string()))?;
    let ctx = Mutation::now(actor(&headers)).at_revision(body.revision);
    mutate(state, id, move |s| s.adjust_recommendation(&adjustment, &reason, &ctx).map(|_| ())).await
}

#[derive(Deserialize)]
struct MetricsQuery {
    stage: Option<String>,
}

async fn metrics(State(state): State<AppState>, Query(q): Query<MetricsQuery>) -> ApiResult<Json<Value>> {
    let stage: Stage = q
        .stage
        .as_deref()
        .unwrap_or("step1")
        .parse()
        .map_err(|e: String| ApiError::validation("InvalidStage", e))?;
    let store = state.sessions.clone();
    let stats = blocking(move || {
        let sessions = store.all()?;
        Ok(compute_stats(sessions.iter().map(Arc::as_ref), stage)?)
    })
    .await?;
    Ok(Json(json!({
        "stage": stage,
        "total_items": stats.total_items,
        "adjusted_items": stats.adjusted_items,
        "adjustment_percentage": stats.adjustment_percentage,
    })))
}
