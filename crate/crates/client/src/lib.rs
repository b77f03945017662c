//! HTTP client for the resource manager service.

use rm_core::alerting::ViolationEpisode;
use rm_core::domain::{AlertNotification, Deployment, DeploymentId, DeploymentStatus, ResourceRecord};
use rm_core::engine::{DeploymentRequest, InvokeOutcome};
use rm_core::tsdb::{PushOutcome, Query, SeriesResult};
use reqwest::{Method, StatusCode, Url};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::{Duration, Instant};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("HTTP {status} {code}: {message}")]
    Api { status: u16, code: String, message: String, details: Value },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("timed out waiting for {0}")]
    Timeout(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Created {
    pub id: DeploymentId,
    pub status: DeploymentStatus,
}

/// Deployment document plus the durations the server derives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentView {
    #[serde(flatten)]
    pub deployment: Deployment,
    pub deployment_time_ms: Option<i64>,
    pub termination_time_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DirectInvocation {
    pub response: Value,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EpisodeView {
    #[serde(flatten)]
    pub episode: ViolationEpisode,
    pub reaction_time_ms: Option<f64>,
}

#[derive(Clone)]
pub struct Client {
    base: Url,
    http: reqwest::Client,
    token: Option<String>,
}

impl Client {
    pub fn new(base: &str) -> Result<Self> {
        let base = Url::parse(base).map_err(|e| ClientError::Transport(e.to_string()))?;
        let http = reqwest::Client::builder()
            .tcp_nodelay(true)
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Client { base, http, token: None })
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn base_url(&self) -> &str {
        self.base.as_str()
    }

    fn url(&self, path: &str) -> Url {
        self.base.join(path).expect("relative path")
    }

    async fn send(&self, method: Method, url: Url, body: Option<Body>) -> Result<(StatusCode, Vec<u8>)> {
        let mut req = self.http.request(method, url);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        req = match body {
            Some(Body::Json(v)) => req
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(serde_json::to_vec(&v).expect("json body")),
            Some(Body::Text(t)) => req.header(reqwest::header::CONTENT_TYPE, "text/plain").body(t),
            None => req,
        };
        let resp = req.send().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            let v: Value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
            let err = &v["error"];
            return Err(ClientError::Api {
                status: status.as_u16(),
                code: err["code"].as_str().unwrap_or_default().to_string(),
                message: err["message"].as_str().unwrap_or_default().to_string(),
                details: err.get("details").cloned().unwrap_or(Value::Null),
            });
        }
        Ok((status, bytes.to_vec()))
    }

    async fn call<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<Body>) -> Result<T> {
        self.call_url(method, self.url(path), body).await
    }

    async fn call_url<T: DeserializeOwned>(&self, method: Method, url: Url, body: Option<Body>) -> Result<T> {
        let (_, bytes) = self.send(method, url, body).await?;
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    /// Logs in and keeps the token for later calls.
    pub async fn login(&mut self, user: &str, password: &str) -> Result<String> {
        let v: Value = self
            .call(Method::POST, "/api/login", Some(Body::Json(json!({ "user": user, "password": password }))))
            .await?;
        let token = v["token"].as_str().ok_or_else(|| ClientError::Decode("missing token".into()))?.to_string();
        self.token = Some(token.clone());
        Ok(token)
    }

    pub async fn health(&self) -> Result<Value> {
        self.call(Method::GET, "/api/health", None).await
    }

    pub async fn api_spec(&self) -> Result<Value> {
        self.call(Method::GET, "/api/spec", None).await
    }

    pub async fn resources(&self) -> Result<Vec<ResourceRecord>> {
        let v: Value = self.call(Method::GET, "/api/resources", None).await?;
        decode(v["resources"].clone())
    }

    pub async fn resource(&self, id: &str) -> Result<ResourceRecord> {
        self.call(Method::GET, &format!("/api/resources/{id}"), None).await
    }

    pub async fn register_resource(&self, r: &ResourceRecord) -> Result<ResourceRecord> {
        self.call(Method::POST, "/api/resources", Some(Body::Json(json!(r)))).await
    }

    pub async fn create_deployment(&self, req: &DeploymentRequest) -> Result<Created> {
        self.call(Method::POST, "/api/deployments", Some(Body::Json(json!(req)))).await
    }

    pub async fn deployment(&self, id: &DeploymentId) -> Result<DeploymentView> {
        self.call(Method::GET, &format!("/api/deployments/{id}"), None).await
    }

    pub async fn deployments(&self) -> Result<Vec<DeploymentView>> {
        let v: Value = self.call(Method::GET, "/api/deployments", None).await?;
        decode(v["deployments"].clone())
    }

    pub async fn terminate(&self, id: &DeploymentId) -> Result<DeploymentView> {
        self.call(Method::DELETE, &format!("/api/deployments/{id}"), None).await
    }

    pub async fn startup(&self, id: &DeploymentId) -> Result<DeploymentView> {
        self.call(Method::POST, &format!("/api/deployments/{id}/startup"), None).await
    }

    pub async fn shutdown(&self, id: &DeploymentId) -> Result<DeploymentView> {
        self.call(Method::POST, &format!("/api/deployments/{id}/shutdown"), None).await
    }

    pub async fn invoke(&self, id: &DeploymentId, artifact: Option<&str>, payload: Value) -> Result<InvokeOutcome> {
        let body = json!({ "artifact": artifact, "payload": payload });
        self.call(Method::POST, &format!("/api/deployments/{id}/invoke"), Some(Body::Json(body))).await
    }

    /// Calls the provider endpoint of a handle without going through the manager.
    pub async fn direct_invoke(&self, handle_id: &str, payload: Value) -> Result<DirectInvocation> {
        let body = json!({ "payload": payload });
        self.call(Method::POST, &format!("/sim/functions/{handle_id}/invoke"), Some(Body::Json(body))).await
    }

    pub async fn query_metrics(&self, q: &Query) -> Result<Vec<SeriesResult>> {
        let mut url = self.url("/api/metrics");
        {
            let mut pairs = url.query_pairs_mut();
            pairs.append_pair("metric", &q.metric);
            for (k, v) in &q.tags {
                pairs.append_pair(&format!("tag.{k}"), v);
            }
            if q.from_ms != i64::MIN {
                pairs.append_pair("fromMs", &q.from_ms.to_string());
            }
            if q.to_ms != i64::MAX {
                pairs.append_pair("toMs", &q.to_ms.to_string());
            }
            if let Some(a) = q.aggregator {
                pairs.append_pair("agg", &a.to_string());
            }
        }
        let v: Value = self.call_url(Method::GET, url, None).await?;
        decode(v["series"].clone())
    }

    pub async fn push_metrics(&self, lines: &str) -> Result<PushOutcome> {
        self.call(Method::POST, "/api/metrics/push", Some(Body::Text(lines.to_string()))).await
    }

    pub async fn alerts(&self, from_ms: i64) -> Result<Vec<AlertNotification>> {
        let v: Value = self.call(Method::GET, &format!("/api/alerts?fromMs={from_ms}"), None).await?;
        decode(v["alerts"].clone())
    }

    pub async fn episodes(&self) -> Result<Vec<EpisodeView>> {
        let v: Value = self.call(Method::GET, "/api/episodes", None).await?;
        decode(v["episodes"].clone())
    }

    /// Raises the probed latency of a deployment; returns the server-side injection time.
    pub async fn inject(&self, id: &DeploymentId, extra_latency_ms: f64) -> Result<i64> {
        let body = json!({ "deploymentId": id, "extraLatencyMs": extra_latency_ms });
        let v: Value = self.call(Method::POST, "/api/sim/inject", Some(Body::Json(body))).await?;
        v["injectedAtMs"].as_i64().ok_or_else(|| ClientError::Decode("missing injectedAtMs".into()))
    }

    pub async fn clear(&self, id: &DeploymentId) -> Result<()> {
        let _: Value = self.call(Method::POST, "/api/sim/clear", Some(Body::Json(json!({ "deploymentId": id })))).await?;
        Ok(())
    }

    /// Polls until the deployment reaches one of `want`.
    pub async fn wait_for(&self, id: &DeploymentId, want: &[DeploymentStatus], timeout: Duration) -> Result<DeploymentView> {
        let deadline = Instant::now() + timeout;
        loop {
            let d = self.deployment(id).await?;
            if want.contains(&d.deployment.status) {
                return Ok(d);
            }
            if Instant::now() >= deadline {
                return Err(ClientError::Timeout(format!("{id} in {}", d.deployment.status)));
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
    }
}

enum Body {
    Json(Value),
    Text(String),
}

fn decode<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| ClientError::Decode(e.to_string()))
}
