use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gridwatch_core::config::MetricKind;
use gridwatch_core::monitor::CommandError;
use gridwatch_core::rollup::RollupError;
use gridwatch_core::timeseries::{SeriesKey, TimeseriesError};
use gridwatch_core::{parse_external_command, Timestamp};
use serde::{Deserialize, Serialize};
use tower_http::cors::{Any, CorsLayer};

use crate::auth::{Role, TokenTable};
use crate::engine::{CommandSender, SnapshotCell, SubmitError};
use crate::views::{HistoryPoint, HistoryView, StatusSnapshot};

pub const DEFAULT_NOTIFICATION_LIMIT: usize = 50;
pub const MAX_NOTIFICATION_LIMIT: usize = 1000;
pub const DEFAULT_HISTORY_WINDOW_S: i64 = 3600;

#[derive(Clone)]
pub struct ApiState {
    pub snapshot: SnapshotCell,
    pub commands: CommandSender,
    pub tokens: Arc<TokenTable>,
}

impl ApiState {
    fn current(&self) -> Arc<StatusSnapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn require(&self, headers: &HeaderMap, min: Role) -> Result<Role, ApiError> {
        let header = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        let role = self
            .tokens
            .authorize(header)
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token"))?;
        if role < min {
            return Err(ApiError::new(StatusCode::FORBIDDEN, format!("requires the {min} role")));
        }
        Ok(role)
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut resp = (self.status, Json(ErrorBody { error: self.message })).into_response();
        if self.status == StatusCode::UNAUTHORIZED {
            resp.headers_mut().insert(header::WWW_AUTHENTICATE, HeaderValue::from_static("Bearer"));
        }
        resp
    }
}

impl From<RollupError> for ApiError {
    fn from(e: RollupError) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, e.to_string())
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct FilterQuery {
    vo: Option<String>,
    metric: Option<String>,
}

impl FilterQuery {
    fn vo(&self) -> Option<&str> {
        self.vo.as_deref().filter(|v| !v.is_empty())
    }

    fn metric(&self) -> Result<Option<MetricKind>, ApiError> {
        match self.metric.as_deref().filter(|m| !m.is_empty()) {
            None => Ok(None),
            Some(m) => m
                .parse()
                .map(Some)
                .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e)),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct HistoryQuery {
    start: Option<i64>,
    end: Option<i64>,
    res: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
pub struct LimitQuery {
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Listing<T> {
    generated_at: String,
    #[serde(flatten)]
    items: T,
}

#[derive(Serialize)]
struct Hosts {
    hosts: Vec<crate::views::HostView>,
}

#[derive(Serialize)]
struct Services {
    services: Vec<crate::views::ServiceView>,
}

#[derive(Serialize)]
struct Accepted {
    accepted: bool,
    verb: String,
}

async fn hosts(State(s): State<ApiState>, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    s.require(&headers, Role::Viewer)?;
    let snap = s.current();
    Ok(Json(Listing { generated_at: snap.generated_at.to_iso8601(), items: Hosts { hosts: snap.hosts() } }))
}

async fn services(State(s): State<ApiState>, headers: HeaderMap) -> Result<impl IntoResponse, ApiError> {
    s.require(&headers, Role::Viewer)?;
    let snap = s.current();
    Ok(Json(Listing {
        generated_at: snap.generated_at.to_iso8601(),
        items: Services { services: snap.services() },
    }))
}

async fn map(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Query(q): Query<FilterQuery>,
) -> Result<impl IntoResponse, ApiError> {
    s.require(&headers, Role::Viewer)?;
    Ok(Json(s.current().map(q.vo(), q.metric()?)?))
}

async fn site(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Path(name): Path<String>,
    Query(q): Query<FilterQuery>,
) -> Result<impl IntoResponse, ApiError> {
    s.require(&headers, Role::Viewer)?;
    Ok(Json(s.current().site(&name, q.vo(), q.metric()?)?))
}

async fn history(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Path((host, service, label)): Path<(String, String, String)>,
    Query(q): Query<HistoryQuery>,
) -> Result<impl IntoResponse, ApiError> {
    s.require(&headers, Role::Viewer)?;
    let snap = s.current();
    let end = q.end.unwrap_or(snap.generated_at.secs() + 1);
    let start = q.start.unwrap_or(end - DEFAULT_HISTORY_WINDOW_S);
    if start >= end {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "start must be before end"));
    }
    let key = SeriesKey::new(&host, &service, &label);
    let db = snap
        .series
        .get(&key)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no series {host}/{service}/{label}")))?;
    let points = match db.fetch(Timestamp::from_secs(start), Timestamp::from_secs(end), q.res.unwrap_or(0)) {
        Ok(p) => p,
        Err(TimeseriesError::EmptyWindow) => Vec::new(),
        Err(e) => return Err(ApiError::new(StatusCode::BAD_REQUEST, e.to_string())),
    };
    Ok(Json(HistoryView {
        host_name: host,
        service_description: service,
        label,
        start,
        end,
        points: points.into_iter().map(|(t, v)| HistoryPoint { t: t.secs(), v }).collect(),
    }))
}

async fn notifications(
    State(s): State<ApiState>,
    headers: HeaderMap,
    Query(q): Query<LimitQuery>,
) -> Result<impl IntoResponse, ApiError> {
    s.require(&headers, Role::Viewer)?;
    let limit = q.limit.unwrap_or(DEFAULT_NOTIFICATION_LIMIT).min(MAX_NOTIFICATION_LIMIT);
    Ok(Json(s.current().notifications(limit)))
}

async fn command(State(s): State<ApiState>, headers: HeaderMap, body: String) -> Result<Response, ApiError> {
    s.require(&headers, Role::Operator)?;
    let cmd = parse_external_command(body.trim()).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    if cmd.verb.is_global() {
        s.require(&headers, Role::Admin)?;
    }
    let verb = cmd.verb.to_string();
    match s.commands.submit(cmd).await {
        Ok(()) => Ok((StatusCode::ACCEPTED, Json(Accepted { accepted: true, verb })).into_response()),
        Err(SubmitError::Stopped) => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "monitor is shutting down")),
        Err(SubmitError::Rejected(e)) => {
            let status = match e {
                CommandError::UnknownTarget(_) | CommandError::UnknownDowntime(_) => StatusCode::NOT_FOUND,
                CommandError::NoProblem(_) | CommandError::NotCheckable(_) => StatusCode::CONFLICT,
                CommandError::InvalidDowntime => StatusCode::BAD_REQUEST,
            };
            Err(ApiError::new(status, e.to_string()))
        }
    }
}

pub fn router(state: ApiState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]);
    Router::new()
        .route("/api/status/hosts", get(hosts))
        .route("/api/status/services", get(services))
        .route("/api/map", get(map))
        .route("/api/site/{name}", get(site))
        .route("/api/history/{host}/{service}/{label}", get(history))
        .route("/api/notifications", get(notifications))
        .route("/api/command", post(command))
        .layer(cors)
        .with_state(state)
}
