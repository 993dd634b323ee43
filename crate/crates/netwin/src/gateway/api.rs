use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use netwin_core::action::{Action, ActionCommand, ActionError};
use netwin_core::analytics::{
    run_pipeline, stage_prefix, AnalyticsBackend, AnalyticsBundle, AnalyticsContext,
    AnalyticsError, Deterministic, MessageProfile, MockLm, RemoteLm, Stage, Window,
};
use netwin_core::bus::{topic_for, Stage as BusStage};
use netwin_core::json;
use netwin_core::twin::{device_twin_id, GraphFilter, TwinError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::AppState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl ToString) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.to_string(),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, json_body(&self)).into_response()
    }
}

impl From<TwinError> for ApiError {
    fn from(e: TwinError) -> Self {
        match &e {
            TwinError::UnknownTwin(_) => Self::new(StatusCode::NOT_FOUND, "unknown_twin", e),
            TwinError::UnknownSeries(..) => Self::new(StatusCode::NOT_FOUND, "unknown_series", e),
            TwinError::InvalidRange { .. } => Self::new(StatusCode::BAD_REQUEST, "bad_range", e),
            TwinError::AuthenticationFailed => {
                Self::new(StatusCode::UNAUTHORIZED, "unauthorized", e)
            }
            TwinError::Transport(_) => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "transport_error", e)
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", e),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let message = e.to_string();
        let (status, code) = match e.root() {
            AnalyticsError::StagePrefix { .. }
            | AnalyticsError::NoStages
            | AnalyticsError::UnknownStage(_) => (StatusCode::BAD_REQUEST, "invalid_stages"),
            AnalyticsError::InvalidWindow { .. } => (StatusCode::BAD_REQUEST, "bad_range"),
            AnalyticsError::InvalidContext(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            AnalyticsError::UnknownTwin(_) => (StatusCode::NOT_FOUND, "unknown_twin"),
            AnalyticsError::EmptyScope
            | AnalyticsError::InsufficientData(_)
            | AnalyticsError::IrregularCadence(_)
            | AnalyticsError::NoCandidates(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "insufficient_data")
            }
            AnalyticsError::Backend(_)
            | AnalyticsError::Template { .. }
            | AnalyticsError::StageFailed { .. } => (StatusCode::BAD_GATEWAY, "backend_error"),
        };
        Self::new(status, code, message)
    }
}

impl From<ActionError> for ApiError {
    fn from(e: ActionError) -> Self {
        let code = match e {
            ActionError::InvalidVerb(_) => "invalid_verb",
            ActionError::InvalidArguments { .. } => "invalid_arguments",
            ActionError::Malformed(_) => "invalid_request",
        };
        Self::new(StatusCode::BAD_REQUEST, code, e)
    }
}

/// Canonical JSON response body.
fn json_body<T: Serialize>(value: &T) -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        json::to_canonical(value),
    )
        .into_response()
}

fn body<T: for<'de> Deserialize<'de>>(
    payload: Result<Json<Value>, JsonRejection>,
) -> Result<T, ApiError> {
    let Json(v) = payload.map_err(|e| ApiError::bad_request(e.body_text()))?;
    serde_json::from_value(v).map_err(ApiError::bad_request)
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub async fn twins(
    State(state): State<AppState>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let filter = match q.get("model") {
        Some(m) => GraphFilter::Model(m.clone()),
        None => GraphFilter::All,
    };
    let view = state.controller().query_graph(&filter)?;
    Ok(json_body(&json!({ "twins": view.instances })))
}

pub async fn twin(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let view = state
        .controller()
        .query_graph(&GraphFilter::Twin(id.clone()))?;
    let twin = view.instances.iter().find(|i| i.twin_id == id).cloned();
    Ok(json_body(
        &json!({ "twin": twin, "relationships": view.relationships }),
    ))
}

pub async fn relationships(State(state): State<AppState>) -> Result<Response, ApiError> {
    let view = state.controller().query_graph(&GraphFilter::All)?;
    Ok(json_body(&json!({ "relationships": view.relationships })))
}

pub async fn models(State(state): State<AppState>) -> Result<Response, ApiError> {
    let models: Vec<_> = state.controller().read(|s| s.models().cloned().collect());
    Ok(json_body(&json!({ "models": models })))
}

fn param_u64(q: &HashMap<String, String>, key: &str, default: u64) -> Result<u64, ApiError> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::bad_request(format!("`{key}` must be a non-negative integer"))),
    }
}

pub async fn kpis(
    State(state): State<AppState>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let required = |k: &str| {
        q.get(k)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| ApiError::bad_request(format!("`{k}` is required")))
    };
    let entity = required("entity")?;
    let metric = required("metric")?;
    let from = param_u64(&q, "from", 0)?;
    let to = param_u64(&q, "to", u64::MAX)?;
    let samples = state.controller().query_kpis(entity, metric, from, to)?;
    let pairs: Vec<Value> = samples
        .iter()
        .map(|s| json!([s.timestamp_ms, json::number(s.value)]))
        .collect();
    Ok(json_body(&pairs))
}

pub async fn stats(State(state): State<AppState>) -> Response {
    let c = state.controller().stats();
    let handler = state.shared.handler_stats.as_ref().map(|h| h.snapshot());
    json_body(&json!({
        "controller": {
            "consumed": c.consumed(),
            "rejected": c.rejected(),
            "changesets": c.changesets(),
            "sweeps": c.sweeps(),
            "data_time_ms": c.data_time_ms(),
        },
        "handler": handler,
        "gateway": {
            "actions_published": state.actions_published(),
            "stream_clients": state.stream_clients(),
        },
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    #[serde(default)]
    scope: Option<Vec<String>>,
    #[serde(default)]
    window: Option<Window>,
    stages: Vec<String>,
    #[serde(default)]
    profile: Option<MessageProfile>,
    #[serde(default)]
    backend: Option<String>,
}

pub async fn run_analytics(
    State(state): State<AppState>,
    payload: Result<Json<Value>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req: RunRequest = body(payload)?;
    let stages = req
        .stages
        .iter()
        .map(|s| s.parse::<Stage>())
        .collect::<Result<Vec<_>, _>>()?;
    let stages = stage_prefix(&stages)?;
    let profile = req.profile.unwrap_or_default();
    profile.validate()?;

    // Bare device ids are accepted in place of their twin ids.
    let scope = req.scope.map(|ids| {
        state.controller().read(|store| {
            ids.into_iter()
                .map(|id| {
                    let twin = device_twin_id(&id);
                    if store.instance(&id).is_none() && store.instance(&twin).is_some() {
                        twin
                    } else {
                        id
                    }
                })
                .collect::<Vec<_>>()
        })
    });
    let analytics = state.shared.analytics.clone();
    let ctx = state.controller().read(|store| {
        AnalyticsContext::from_store(
            store,
            scope.as_deref(),
            req.window.unwrap_or_else(Window::all),
            analytics,
            profile,
        )
    })?;

    let bundle = match req.backend.as_deref().unwrap_or("deterministic") {
        "deterministic" => run_pipeline(&ctx, &stages, &Deterministic).await?,
        "mock" => run_mock(&state, &ctx, &stages).await?,
        "remote" => {
            let url = state
                .shared
                .config
                .remote_lm_url
                .as_deref()
                .ok_or_else(|| {
                    ApiError::new(
                        StatusCode::BAD_GATEWAY,
                        "backend_error",
                        "no remote model endpoint is configured",
                    )
                })?;
            let timeout = Duration::from_millis(state.shared.config.remote_lm_timeout_ms);
            let backend = RemoteLm::new(url, state.shared.templates.clone(), timeout)?;
            run_pipeline(&ctx, &stages, &backend).await?
        }
        other => return Err(ApiError::bad_request(format!("unknown backend `{other}`"))),
    };
    Ok(json_body(&bundle))
}

/// Exercises the prompt path: every stage prompt is rendered and answered
/// with the reference report for that stage.
async fn run_mock(
    state: &AppState,
    ctx: &AnalyticsContext,
    stages: &[Stage],
) -> Result<AnalyticsBundle, ApiError> {
    let reference = run_pipeline(ctx, stages, &Deterministic).await?;
    let mut mock = MockLm::new(state.shared.templates.clone());
    let reports = serde_json::to_value(&reference.reports).map_err(ApiError::bad_request)?;
    for stage in stages {
        if let Some(report) = reports.get(stage.as_str()) {
            mock = mock.with_reply(*stage, json::to_canonical_string(report));
        }
    }
    let backend: &dyn AnalyticsBackend = &mock;
    Ok(run_pipeline(ctx, stages, backend).await?)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionRequest {
    device_id: String,
    verb: String,
    #[serde(default)]
    arguments: Value,
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

pub async fn post_action(
    State(state): State<AppState>,
    headers: HeaderMap,
    payload: Result<Json<Value>, JsonRejection>,
) -> Result<Response, ApiError> {
    let token = bearer(&headers).ok_or_else(|| {
        ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "bearer token required",
        )
    })?;
    let session = state.controller().authenticate(token)?;
    let req: ActionRequest = body(payload)?;
    let action = Action::parse(&req.verb, &req.arguments)?;
    let known = state
        .controller()
        .read(|s| s.instance(&device_twin_id(&req.device_id)).is_some());
    if !known {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_device",
            format!("unknown device `{}`", req.device_id),
        ));
    }
    let topic =
        topic_for(BusStage::Actions, &req.device_id, None).map_err(ApiError::bad_request)?;
    let command = ActionCommand {
        device_id: req.device_id,
        action,
        issued_by: session.principal,
        issued_at: state.controller().now_ms(),
    };
    state
        .shared
        .bus
        .publish(&topic, command.encode().into_bytes())
        .await
        .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "transport_error", e))?;
    state
        .shared
        .actions_published
        .fetch_add(1, Ordering::SeqCst);
    let mut resp =
        json_body(&json!({ "status": "accepted", "topic": topic.as_str(), "command": command }));
    *resp.status_mut() = StatusCode::ACCEPTED;
    Ok(resp)
}
