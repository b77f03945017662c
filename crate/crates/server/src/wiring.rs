//! Bus addresses owned by the metrics store and the alerting loop.

use rm_core::alerting::{AlertError, Alerting};
use rm_core::bus::{Consumer, EventBus, Fault, FaultCode};
use rm_core::domain::DeploymentId;
use rm_core::engine::fault_for;
use rm_core::tsdb::{Query, Tsdb};
use serde_json::{json, Value};
use std::sync::Arc;

pub const METRICS_QUERY: &str = "metrics.query";
pub const METRICS_PUSH: &str = "metrics.push";
pub const ALERTS_LIST: &str = "alert.list";
pub const EPISODES_LIST: &str = "alert.episodes";
pub const INJECT: &str = "alert.inject";
pub const CLEAR: &str = "alert.clear";

fn alert_fault(e: AlertError) -> Fault {
    match e {
        AlertError::Engine(e) => fault_for(&e),
        AlertError::NotBenchMode => Fault::new(FaultCode::Conflict, e.to_string()),
        AlertError::UnknownEpisode(_) | AlertError::MissingGroundTruth => Fault::new(FaultCode::NotFound, e.to_string()),
        AlertError::DeliveryFailed { .. } => Fault::internal(e.to_string()),
    }
}

fn field<'a>(body: &'a Value, name: &str) -> Result<&'a str, Fault> {
    body.get(name).and_then(Value::as_str).ok_or_else(|| Fault::bad_request(format!("missing field {name}")))
}

pub fn metrics(bus: &EventBus, tsdb: &Arc<Tsdb>) -> Vec<Consumer> {
    let db = tsdb.clone();
    let query = bus.consumer_fn(METRICS_QUERY, move |body: Value| {
        let db = db.clone();
        async move {
            let q: Query = serde_json::from_value(body).map_err(|e| Fault::bad_request(e.to_string()))?;
            let series = db.query(&q).map_err(|e| Fault::bad_request(e.to_string()))?;
            Ok(json!({ "series": series }))
        }
    });
    let db = tsdb.clone();
    let push = bus.consumer_fn(METRICS_PUSH, move |body: Value| {
        let db = db.clone();
        async move {
            let text = body.as_str().ok_or_else(|| Fault::bad_request("expected line protocol text"))?;
            Ok(serde_json::to_value(db.ingest_text(text)).unwrap_or_default())
        }
    });
    vec![query, push]
}

pub fn alerting(bus: &EventBus, alerting: &Arc<Alerting>) -> Vec<Consumer> {
    let a = alerting.clone();
    let store = alerting.engine().store().clone();
    let list = bus.consumer_fn(ALERTS_LIST, move |body: Value| {
        let store = store.clone();
        async move {
            let from = body.get("fromMs").and_then(Value::as_i64).unwrap_or(0);
            Ok(json!({ "alerts": store.alerts_since(from) }))
        }
    });
    let episodes = bus.consumer_fn(EPISODES_LIST, move |_| {
        let a = a.clone();
        async move {
            let eps: Vec<Value> = a
                .episodes()
                .into_iter()
                .map(|ep| {
                    let reaction = a.reaction_time(&ep.episode_id).ok();
                    let mut v = serde_json::to_value(&ep).unwrap_or_default();
                    v["reactionTimeMs"] = json!(reaction);
                    v
                })
                .collect();
            Ok(json!({ "episodes": eps }))
        }
    });
    let a = alerting.clone();
    let inject = bus.consumer_fn(INJECT, move |body: Value| {
        let a = a.clone();
        async move {
            let id = DeploymentId::from(field(&body, "deploymentId")?);
            let extra = body.get("extraLatencyMs").and_then(Value::as_f64).unwrap_or(0.0);
            if !(extra.is_finite() && extra >= 0.0) {
                return Err(Fault::bad_request("extraLatencyMs must be a non-negative number"));
            }
            let at = a.inject(&id, extra).map_err(alert_fault)?;
            Ok(json!({ "deploymentId": id, "injectedAtMs": at }))
        }
    });
    let a = alerting.clone();
    let clear = bus.consumer_fn(CLEAR, move |body: Value| {
        let a = a.clone();
        async move {
            let id = DeploymentId::from(field(&body, "deploymentId")?);
            a.clear(&id).map_err(alert_fault)?;
            Ok(json!({ "deploymentId": id }))
        }
    });
    vec![list, episodes, inject, clear]
}
