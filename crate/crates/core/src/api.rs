//! JSON-over-HTTP access to sessions.
//!
//! Every mutation is persisted before the response is sent, and mutations of
//! one session are serialized: a second request waits for the first.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::engine::{
    AssessmentOutcome, Engine, EngineError, PendingAssessment, Phase, Session, SessionId,
};
use crate::explain::{explanation_request, status_fingerprint};
use crate::graph::export_graph;
use crate::normalize_label;
use crate::oracle::{EducationLevel, Health, OracleError, QuestionAnalysis};
use crate::path::{build_path_with, render_text, PathOptions};
use crate::store::{SessionStore, StoreError};

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    Unprocessable(String),
    BadGateway { message: String, retryable: bool },
    GatewayTimeout(String),
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str, &str) {
        match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, "not_found", m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, "conflict", m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", m),
            ApiError::BadGateway { message, .. } => {
                (StatusCode::BAD_GATEWAY, "oracle_failure", message)
            }
            ApiError::GatewayTimeout(m) => (StatusCode::GATEWAY_TIMEOUT, "oracle_timeout", m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", m),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = self.parts();
        let mut body = json!({"error": code, "message": message});
        if let ApiError::BadGateway { retryable, .. } = &self {
            body["retryable"] = json!(retryable);
        }
        (status, Json(body)).into_response()
    }
}

impl From<OracleError> for ApiError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Timeout => ApiError::GatewayTimeout(e.to_string()),
            e => ApiError::BadGateway {
                retryable: e.retryable(),
                message: e.to_string(),
            },
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::EmptyQuestion | EngineError::InvalidMaxDepth(_) => {
                ApiError::Unprocessable(e.to_string())
            }
            EngineError::UnknownConcept(_) => ApiError::NotFound(e.to_string()),
            EngineError::ConflictingAssessment { .. } => ApiError::Conflict(e.to_string()),
            EngineError::OracleFailure(e) => ApiError::BadGateway {
                retryable: e.retryable(),
                message: e.to_string(),
            },
            EngineError::CorruptLog(_) => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::NotFound(e.to_string()),
            e => ApiError::Internal(e.to_string()),
        }
    }
}

/// JSON body extractor that reports every malformed body as 422.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|e| ApiError::Unprocessable(e.body_text()))
    }
}

pub struct AppState {
    engine: Engine,
    store: Arc<dyn SessionStore>,
    locks: Mutex<HashMap<SessionId, Arc<tokio::sync::Mutex<()>>>>,
    explanations: Mutex<HashMap<String, String>>,
    explanation_timeout: Duration,
}

impl AppState {
    pub fn new(engine: Engine, store: Arc<dyn SessionStore>) -> Self {
        Self {
            engine,
            store,
            locks: Mutex::new(HashMap::new()),
            explanations: Mutex::new(HashMap::new()),
            explanation_timeout: Duration::from_secs(60),
        }
    }

    pub fn with_explanation_timeout(mut self, timeout: Duration) -> Self {
        self.explanation_timeout = timeout;
        self
    }

    fn lock_for(&self, id: &SessionId) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.clone())
            .or_default()
            .clone()
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared, cors_origins: &[String]) -> Router {
    let origins: Vec<HeaderValue> = cors_origins
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::list(origins))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(get_session))
        .route("/api/v1/sessions/{id}/assessments", post(assess))
        .route("/api/v1/sessions/{id}/graph", get(get_graph))
        .route("/api/v1/sessions/{id}/path", get(get_path))
        .route("/api/v1/sessions/{id}/path.txt", get(get_path_text))
        .route("/api/v1/sessions/{id}/explanation", post(explain))
        .layer(cors)
        .with_state(state)
}

/// Binds `listen` and serves until interrupted.
pub async fn serve(state: Shared, listen: &str, cors_origins: &[String]) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, cors_origins))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse_id(raw: &str) -> Result<SessionId, ApiError> {
    SessionId::parse(raw).ok_or_else(|| ApiError::NotFound(format!("session {raw} not found")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn load(state: &Shared, id: SessionId) -> Result<Session, ApiError> {
    let store = state.store.clone();
    blocking(move || Ok(store.load(&id)?)).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub question: String,
    pub education_level: EducationLevel,
    pub max_depth: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: SessionId,
    pub analysis: QuestionAnalysis,
    pub pending: Vec<PendingAssessment>,
    pub phase: Phase,
}

async fn create_session(
    State(state): State<Shared>,
    ApiJson(body): ApiJson<CreateSession>,
) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let st = state.clone();
    let session = blocking(move || {
        let session =
            st.engine
                .start_session(&body.question, body.education_level, body.max_depth)?;
        st.store.save(&session)?;
        Ok(session)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(CreatedSession {
            session_id: session.session_id.clone(),
            pending: session.pending_assessments(),
            phase: session.phase,
            analysis: session.analysis,
        }),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentRequest {
    pub concept_id: String,
    pub known: bool,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AssessmentResponse {
    pub outcome: AssessmentOutcome,
    pub pending: Vec<PendingAssessment>,
    pub phase: Phase,
}

async fn assess(
    State(state): State<Shared>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<AssessmentRequest>,
) -> Result<Json<AssessmentResponse>, ApiError> {
    let id = parse_id(&id)?;
    let concept = normalize_label(&body.concept_id)
        .map_err(|_| ApiError::NotFound(format!("concept {:?} not found", body.concept_id)))?;
    let lock = state.lock_for(&id);
    let _guard = lock.lock().await;
    let st = state.clone();
    blocking(move || {
        let mut session = st.store.load(&id)?;
        let before = session.event_log.len();
        let result = st
            .engine
            .submit_assessment(&mut session, &concept, body.known, body.force);
        if session.event_log.len() != before {
            st.store.save(&session)?;
        }
        let outcome = result?;
        Ok(Json(AssessmentResponse {
            outcome,
            pending: session.pending_assessments(),
            phase: session.phase,
        }))
    })
    .await
}

#[derive(Debug, Serialize)]
struct SessionView {
    #[serde(flatten)]
    session: Session,
    pending: Vec<PendingAssessment>,
}

async fn get_session(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = load(&state, parse_id(&id)?).await?;
    let pending = session.pending_assessments();
    Ok(Json(SessionView { session, pending }).into_response())
}

async fn get_graph(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = load(&state, parse_id(&id)?).await?;
    Ok(Json(export_graph(&session)).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct PathQuery {
    #[serde(default)]
    include_known: bool,
}

async fn get_path(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<PathQuery>,
) -> Result<Response, ApiError> {
    let session = load(&state, parse_id(&id)?).await?;
    let options = PathOptions {
        include_known: q.include_known,
    };
    Ok(Json(build_path_with(&session, options)).into_response())
}

async fn get_path_text(
    State(state): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<PathQuery>,
) -> Result<Response, ApiError> {
    let session = load(&state, parse_id(&id)?).await?;
    let options = PathOptions {
        include_known: q.include_known,
    };
    let text = render_text(&build_path_with(&session, options));
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplanationResponse {
    pub explanation: String,
}

async fn explain(
    State(state): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<ExplanationResponse>, ApiError> {
    let id = parse_id(&id)?;
    let session = load(&state, id).await?;
    let request = explanation_request(&session)
        .ok_or_else(|| ApiError::Conflict("no concept has been assessed yet".into()))?;
    let key = status_fingerprint(&session);
    if let Some(text) = state.explanations.lock().expect("cache").get(&key) {
        return Ok(Json(ExplanationResponse {
            explanation: text.clone(),
        }));
    }
    let oracle = state.engine.oracle().clone();
    let call = tokio::task::spawn_blocking(move || oracle.generate_explanation(&request));
    let text = match tokio::time::timeout(state.explanation_timeout, call).await {
        Err(_) => return Err(ApiError::GatewayTimeout("explanation timed out".into())),
        Ok(joined) => joined.map_err(|e| ApiError::Internal(e.to_string()))??,
    };
    state
        .explanations
        .lock()
        .expect("cache")
        .insert(key, text.clone());
    Ok(Json(ExplanationResponse { explanation: text }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub oracle_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

async fn healthz(State(state): State<Shared>) -> Result<Json<HealthResponse>, ApiError> {
    let oracle = state.engine.oracle().clone();
    let mode = oracle.mode().to_string();
    let health = blocking(move || Ok(oracle.health())).await?;
    Ok(Json(match health {
        Health::Ok => HealthResponse {
            status: "ok".into(),
            oracle_mode: mode,
            detail: None,
        },
        Health::Degraded(detail) => HealthResponse {
            status: "degraded".into(),
            oracle_mode: mode,
            detail: Some(detail),
        },
    }))
}
