//! HTTP surface. Handlers forward to component addresses over the bus.

use crate::boot::AppState;
use crate::wiring;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Extension, Json, Router};
use rm_core::bus::{BusError, Fault, FaultCode};
use rm_core::clock::now_secs;
use rm_core::domain::{AuthToken, Claims, Deployment, HandleId};
use rm_core::engine::Addresses;
use serde::Deserialize;
use serde_json::{json, Value};

pub const REQUEST_TIMEOUT_MS: u64 = 10_000;

/// (method, path, requires token)
pub const ROUTES: &[(&str, &str, bool)] = &[
    ("POST", "/api/login", false),
    ("GET", "/api/health", false),
    ("GET", "/api/spec", false),
    ("GET", "/api/resources", true),
    ("POST", "/api/resources", true),
    ("GET", "/api/resources/{id}", true),
    ("GET", "/api/deployments", true),
    ("POST", "/api/deployments", true),
    ("GET", "/api/deployments/{id}", true),
    ("DELETE", "/api/deployments/{id}", true),
    ("POST", "/api/deployments/{id}/startup", true),
    ("POST", "/api/deployments/{id}/shutdown", true),
    ("POST", "/api/deployments/{id}/invoke", true),
    ("GET", "/api/metrics", true),
    ("POST", "/api/metrics/push", true),
    ("GET", "/api/alerts", true),
    ("GET", "/api/episodes", true),
    ("POST", "/api/sim/inject", true),
    ("POST", "/api/sim/clear", true),
    ("POST", "/sim/functions/{handleId}/invoke", false),
];

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), details: None }
    }

    fn unauthorized(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "badRequest", message)
    }
}

impl From<Fault> for ApiError {
    fn from(f: Fault) -> Self {
        let (status, code) = match f.code {
            FaultCode::BadRequest => (StatusCode::BAD_REQUEST, "badRequest"),
            FaultCode::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            FaultCode::NotFound => (StatusCode::NOT_FOUND, "notFound"),
            FaultCode::Conflict => (StatusCode::CONFLICT, "conflict"),
            FaultCode::Timeout => (StatusCode::GATEWAY_TIMEOUT, "timeout"),
            FaultCode::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError { status, code, message: f.message, details: Some(f.details).filter(|d| !d.is_null()) }
    }
}

impl From<BusError> for ApiError {
    fn from(e: BusError) -> Self {
        match e {
            BusError::Handler(f) => f.into(),
            BusError::Timeout(_) => Self::new(StatusCode::GATEWAY_TIMEOUT, "timeout", e.to_string()),
            other => {
                tracing::error!(error = %other, "bus failure");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal error")
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": { "code": self.code, "message": self.message } });
        if let Some(d) = self.details {
            body["error"]["details"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

async fn ask(s: &AppState, address: &str, body: Value) -> Result<Value, ApiError> {
    Ok(s.bus.request(address, body, REQUEST_TIMEOUT_MS).await?)
}

fn ok(v: Value) -> ApiResult {
    Ok(Json(v).into_response())
}

fn created(v: Value) -> ApiResult {
    Ok((StatusCode::CREATED, Json(v)).into_response())
}

/// Deployment document with derived durations.
fn deployment_view(v: Value) -> Value {
    let Ok(d) = serde_json::from_value::<Deployment>(v.clone()) else { return v };
    let mut v = v;
    v["deploymentTimeMs"] = json!(d.deployment_time_ms());
    v["terminationTimeMs"] = json!(d.termination_time_ms());
    v
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn require_token(State(s): State<AppState>, mut req: Request, next: Next) -> Response {
    let token = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|h| h.to_str().ok())
        .and_then(|h| h.strip_prefix("Bearer "))
        .map(|t| AuthToken(t.trim().to_string()));
    let Some(token) = token else {
        return ApiError::unauthorized("missing bearer token").into_response();
    };
    match token.verify(s.config.auth_secret.as_bytes(), now_secs()) {
        Ok(claims) => {
            req.extensions_mut().insert(claims);
            next.run(req).await
        }
        Err(e) => ApiError::unauthorized(e.to_string()).into_response(),
    }
}

#[derive(Deserialize)]
struct LoginBody {
    user: String,
    password: String,
}

async fn login(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult {
    let b: LoginBody = parse_json(&body)?;
    let valid = match s.store.get_user(&b.user) {
        Some(u) => u.verify(&b.password),
        None => {
            // same work as a real check
            let _ = rm_core::store::UserRecord::new("-", "-").verify(&b.password);
            false
        }
    };
    if !valid {
        return Err(ApiError::unauthorized("invalid credentials"));
    }
    let exp = now_secs() + s.config.token_ttl_seconds;
    let token = AuthToken::issue(s.config.auth_secret.as_bytes(), &b.user, exp);
    ok(json!({ "token": token, "expiresAt": exp }))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "up" }))
}

async fn spec() -> Json<Value> {
    let routes: Vec<Value> = ROUTES
        .iter()
        .map(|(m, p, auth)| json!({ "method": m, "path": p, "auth": if *auth { "bearer" } else { "none" } }))
        .collect();
    Json(json!({ "name": "resource-manager", "version": env!("CARGO_PKG_VERSION"), "routes": routes }))
}

async fn list_resources(State(s): State<AppState>) -> ApiResult {
    ok(json!({ "resources": ask(&s, Addresses::RESOURCE_LIST, Value::Null).await? }))
}

async fn register_resource(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult {
    let r: Value = parse_json(&body)?;
    created(ask(&s, Addresses::RESOURCE_REGISTER, r).await?)
}

async fn get_resource(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(ask(&s, Addresses::RESOURCE_GET, json!({ "id": id })).await?)
}

async fn list_deployments(State(s): State<AppState>) -> ApiResult {
    let all = ask(&s, Addresses::LIST, Value::Null).await?;
    let views: Vec<Value> = all.as_array().cloned().unwrap_or_default().into_iter().map(deployment_view).collect();
    ok(json!({ "deployments": views }))
}

async fn create_deployment(
    State(s): State<AppState>,
    Extension(claims): Extension<Claims>,
    body: axum::body::Bytes,
) -> ApiResult {
    let request: Value = parse_json(&body)?;
    let d = ask(&s, Addresses::CREATE, json!({ "owner": claims.sub, "request": request })).await?;
    created(json!({ "id": d["id"], "status": d["status"] }))
}

async fn get_deployment(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(deployment_view(ask(&s, Addresses::GET, json!({ "id": id })).await?))
}

async fn delete_deployment(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let d = ask(&s, Addresses::TERMINATE, json!({ "id": id })).await?;
    Ok((StatusCode::ACCEPTED, Json(deployment_view(d))).into_response())
}

async fn startup(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(deployment_view(ask(&s, Addresses::STARTUP, json!({ "id": id })).await?))
}

async fn shutdown(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    ok(deployment_view(ask(&s, Addresses::SHUTDOWN, json!({ "id": id })).await?))
}

#[derive(Deserialize, Default)]
struct InvokeBody {
    #[serde(default)]
    artifact: Option<String>,
    #[serde(default)]
    payload: Value,
}

async fn invoke(State(s): State<AppState>, Path(id): Path<String>, body: axum::body::Bytes) -> ApiResult {
    let b: InvokeBody = if body.is_empty() { InvokeBody::default() } else { parse_json(&body)? };
    let out = ask(&s, Addresses::INVOKE, json!({ "id": id, "artifact": b.artifact, "payload": b.payload })).await?;
    ok(out)
}

/// `metric`, `tag.<k>=<v>`, `fromMs`, `toMs`, `agg`.
fn metrics_query(params: &[(String, String)]) -> Result<Value, ApiError> {
    let mut q = json!({ "tags": {} });
    for (k, v) in params {
        let num = || v.parse::<i64>().map_err(|_| ApiError::bad_request(format!("{k} must be an integer")));
        match k.as_str() {
            "metric" => q["metric"] = json!(v),
            "fromMs" => q["fromMs"] = json!(num()?),
            "toMs" => q["toMs"] = json!(num()?),
            "agg" => {
                let agg: rm_core::tsdb::Aggregator = v.parse().map_err(|e: rm_core::tsdb::QueryError| ApiError::bad_request(e.to_string()))?;
                q["aggregator"] = json!(agg);
            }
            _ => match k.strip_prefix("tag.") {
                Some(tag) if !tag.is_empty() => q["tags"][tag] = json!(v),
                _ => return Err(ApiError::bad_request(format!("unknown parameter {k}"))),
            },
        }
    }
    if q.get("metric").is_none() {
        return Err(ApiError::bad_request("metric is required"));
    }
    Ok(q)
}

async fn query_metrics(State(s): State<AppState>, Query(params): Query<Vec<(String, String)>>) -> ApiResult {
    let q = metrics_query(&params)?;
    ok(ask(&s, wiring::METRICS_QUERY, q).await?)
}

async fn push_metrics(State(s): State<AppState>, body: String) -> ApiResult {
    ok(ask(&s, wiring::METRICS_PUSH, Value::String(body)).await?)
}

async fn alerts(State(s): State<AppState>, Query(params): Query<Vec<(String, String)>>) -> ApiResult {
    let mut from = 0;
    for (k, v) in &params {
        if k == "fromMs" {
            from = v.parse::<i64>().map_err(|_| ApiError::bad_request("fromMs must be an integer"))?;
        }
    }
    ok(ask(&s, wiring::ALERTS_LIST, json!({ "fromMs": from })).await?)
}

async fn episodes(State(s): State<AppState>) -> ApiResult {
    ok(ask(&s, wiring::EPISODES_LIST, Value::Null).await?)
}

async fn inject(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult {
    let b: Value = parse_json(&body)?;
    ok(ask(&s, wiring::INJECT, b).await?)
}

async fn clear(State(s): State<AppState>, body: axum::body::Bytes) -> ApiResult {
    let b: Value = parse_json(&body)?;
    ok(ask(&s, wiring::CLEAR, b).await?)
}

/// Provider-side function endpoint, bypassing the manager.
async fn direct_invoke(State(s): State<AppState>, Path(handle): Path<String>, body: axum::body::Bytes) -> ApiResult {
    let b: InvokeBody = if body.is_empty() { InvokeBody::default() } else { parse_json(&body)? };
    let handle = HandleId::new(handle);
    let driver = s
        .providers
        .find_handle(&handle)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "notFound", format!("unknown handle {handle}")))?;
    match driver.invoke(&handle, b.payload).await {
        Ok(inv) => ok(json!({ "response": inv.response, "rttMs": inv.rtt_ms })),
        Err(e) => Err(rm_core::engine::fault_for(&e.into()).into()),
    }
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "notFound", "no such route")
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/api/resources", get(list_resources).post(register_resource))
        .route("/api/resources/{id}", get(get_resource))
        .route("/api/deployments", get(list_deployments).post(create_deployment))
        .route("/api/deployments/{id}", get(get_deployment).delete(delete_deployment))
        .route("/api/deployments/{id}/startup", post(startup))
        .route("/api/deployments/{id}/shutdown", post(shutdown))
        .route("/api/deployments/{id}/invoke", post(invoke))
        .route("/api/metrics", get(query_metrics))
        .route("/api/metrics/push", post(push_metrics))
        .route("/api/alerts", get(alerts))
        .route("/api/episodes", get(episodes))
        .route("/api/sim/inject", post(inject))
        .route("/api/sim/clear", post(clear))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/api/login", post(login))
        .route("/api/health", get(health))
        .route("/api/spec", get(spec))
        .route("/sim/functions/{handleId}/invoke", post(direct_invoke))
        .merge(protected)
        .fallback(fallback)
        .with_state(state)
}
