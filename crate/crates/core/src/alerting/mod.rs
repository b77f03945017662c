//! SLO evaluation loop, violation episodes and webhook delivery.

use crate::bus::EventBus;
use crate::clock::now_ms;
use crate::domain::{AlertNotification, Deployment, DeploymentId, DeploymentStatus};
use crate::engine::{Engine, EngineError};
use crate::store::Store;
use crate::tsdb::{Monitor, Tsdb};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::Duration;
use tokio::task::JoinHandle;

pub const ALERTS_ADDRESS: &str = "alerts";
pub const DELIVERY_ADDRESS: &str = "alert.delivery";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlertError {
    #[error("delivery failed after {attempts} attempts: {last}")]
    DeliveryFailed { attempts: u32, last: String },
    #[error("no injection recorded for this episode")]
    MissingGroundTruth,
    #[error("unknown episode {0}")]
    UnknownEpisode(String),
    #[error("fault injection requires bench mode")]
    NotBenchMode,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone)]
pub struct AlertingConfig {
    pub reallocation_enabled: bool,
    pub bench_mode: bool,
    /// Model milliseconds between delivery attempts.
    pub retry_backoff_ms: Vec<u64>,
    pub request_timeout: Duration,
    /// Real period of the deployment rescan.
    pub rescan_period: Duration,
}

impl Default for AlertingConfig {
    fn default() -> Self {
        AlertingConfig {
            reallocation_enabled: false,
            bench_mode: false,
            retry_backoff_ms: vec![1000, 2000, 4000],
            request_timeout: Duration::from_secs(5),
            rescan_period: Duration::from_millis(10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SloStatus {
    Ok,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Evaluation {
    pub deployment_id: DeploymentId,
    pub slo_index: usize,
    pub status: SloStatus,
    pub observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub at_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationEpisode {
    pub episode_id: String,
    pub deployment_id: DeploymentId,
    pub slo_index: usize,
    pub started_at_ms: i64,
    pub last_notified_at_ms: Option<i64>,
    pub resolved_at_ms: Option<i64>,
    pub notifications: u32,
    pub injected_at_ms: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Delivered {
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy)]
struct Injection {
    at_ms: i64,
    claimed: bool,
}

#[derive(Default)]
struct State {
    open: HashMap<(DeploymentId, usize), ViolationEpisode>,
    closed: Vec<ViolationEpisode>,
    injections: HashMap<DeploymentId, Injection>,
    tasks: HashMap<(DeploymentId, usize), JoinHandle<()>>,
}

pub struct Alerting {
    engine: Arc<Engine>,
    monitor: Arc<Monitor>,
    bus: EventBus,
    config: AlertingConfig,
    http: reqwest::Client,
    state: Mutex<State>,
}

impl Alerting {
    pub fn new(engine: Arc<Engine>, monitor: Arc<Monitor>, bus: EventBus, config: AlertingConfig) -> Arc<Self> {
        let http = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .expect("http client");
        Arc::new(Alerting { engine, monitor, bus, config, http, state: Mutex::new(State::default()) })
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn config(&self) -> &AlertingConfig {
        &self.config
    }

    fn store(&self) -> &Arc<Store> {
        self.engine.store()
    }

    fn tsdb(&self) -> &Arc<Tsdb> {
        self.monitor.tsdb()
    }

    fn scale(&self) -> f64 {
        self.engine.providers().world().time_scale()
    }

    /// Real duration of a model interval, never below 1 ms.
    fn real(&self, model_ms: f64) -> Duration {
        Duration::from_secs_f64((model_ms * self.scale()).max(1.0) / 1000.0)
    }

    /// Compares the newest sample of the objective's metric against its
    /// threshold. `latency` is probed first so the value is current.
    pub fn evaluate(&self, d: &Deployment, slo_index: usize) -> Evaluation {
        let now = now_ms();
        let slo = &d.slos[slo_index];
        let mut eval = Evaluation {
            deployment_id: d.id.clone(),
            slo_index,
            status: SloStatus::Violated,
            observed: None,
            reason: None,
            at_ms: now,
        };
        if slo.metric == "latency" && d.status == DeploymentStatus::Ready {
            self.monitor.probe_deployment(d);
        }
        let tags = BTreeMap::from([("deployment".to_string(), d.id.to_string())]);
        let window = self.real(2.0 * slo.evaluation_interval_ms as f64).as_millis() as i64;
        match self.tsdb().last(&slo.metric, &tags) {
            Some((ts, value)) if now - ts <= window.max(2) => {
                eval.observed = Some(value);
                if slo.is_met_by(value) {
                    eval.status = SloStatus::Ok;
                }
            }
            _ => eval.reason = Some("no data".into()),
        }
        eval
    }

    /// Evaluates every objective of every alerting deployment once.
    pub fn evaluation_tick(self: &Arc<Self>) -> Vec<Evaluation> {
        let mut out = Vec::new();
        for d in self.store().list_deployments_with_alerting() {
            for i in 0..d.slos.len() {
                let e = self.evaluate(&d, i);
                self.apply(&d, &e);
                out.push(e);
            }
        }
        out
    }

    /// Episode bookkeeping for one evaluation; violating ticks emit an alert.
    fn apply(self: &Arc<Self>, d: &Deployment, e: &Evaluation) {
        let key = (d.id.clone(), e.slo_index);
        if e.status == SloStatus::Ok {
            let mut st = self.state.lock();
            if let Some(mut ep) = st.open.remove(&key) {
                ep.resolved_at_ms = Some(e.at_ms.max(ep.started_at_ms));
                st.closed.push(ep);
            }
            return;
        }
        let (alert, fresh) = {
            let mut st = self.state.lock();
            let fresh = !st.open.contains_key(&key);
            let injected_at = if fresh {
                st.injections.get_mut(&d.id).filter(|i| !i.claimed && i.at_ms <= e.at_ms).map(|i| {
                    i.claimed = true;
                    i.at_ms
                })
            } else {
                None
            };
            let ep = st.open.entry(key).or_insert_with(|| ViolationEpisode {
                episode_id: uuid::Uuid::new_v4().to_string(),
                deployment_id: d.id.clone(),
                slo_index: e.slo_index,
                started_at_ms: e.at_ms,
                last_notified_at_ms: None,
                resolved_at_ms: None,
                notifications: 0,
                injected_at_ms: injected_at,
            });
            let slo = &d.slos[e.slo_index];
            let alert = AlertNotification {
                deployment_id: d.id.clone(),
                slo_index: e.slo_index,
                metric: slo.metric.clone(),
                observed_value: e.observed,
                threshold: slo.threshold,
                comparator: slo.comparator,
                timestamp_ms: e.at_ms,
                episode_id: ep.episode_id.clone(),
            };
            (alert, fresh)
        };
        if let Err(err) = self.store().append_alert(alert.clone()) {
            tracing::warn!(error = %err, "alert not recorded");
        }
        self.bus.publish(ALERTS_ADDRESS, serde_json::to_value(&alert).unwrap_or_default());
        if !d.alerting.webhook_url.is_empty() {
            let me = self.clone();
            let url = d.alerting.webhook_url.clone();
            tokio::spawn(async move { me.deliver(&url, alert).await });
        }
        if fresh && self.config.reallocation_enabled && d.status == DeploymentStatus::Ready {
            let me = self.clone();
            let id = d.id.clone();
            tokio::spawn(async move {
                match me.engine.reallocate(&id).await {
                    Ok(r) => tracing::info!(deployment = %id, from = %r.from, to = %r.to, "reallocated"),
                    Err(err) => tracing::warn!(deployment = %id, error = %err, "reallocation skipped"),
                }
            });
        }
    }

    async fn deliver(&self, url: &str, alert: AlertNotification) {
        let result = self.notify(url, &alert).await;
        let mut body = json!({ "episodeId": alert.episode_id, "deploymentId": alert.deployment_id });
        match &result {
            Ok(d) => {
                body["delivered"] = json!(true);
                body["attempts"] = json!(d.attempts);
                let mut st = self.state.lock();
                let key = (alert.deployment_id.clone(), alert.slo_index);
                let now = now_ms();
                let ep = st.open.get_mut(&key).filter(|ep| ep.episode_id == alert.episode_id);
                let ep = match ep {
                    Some(ep) => Some(ep),
                    None => st.closed.iter_mut().rev().find(|ep| ep.episode_id == alert.episode_id),
                };
                if let Some(ep) = ep {
                    ep.last_notified_at_ms = Some(now);
                    ep.notifications += 1;
                }
            }
            Err(e) => {
                tracing::warn!(episode = %alert.episode_id, error = %e, "alert delivery failed");
                body["delivered"] = json!(false);
                body["error"] = json!(e.to_string());
            }
        }
        self.bus.publish(DELIVERY_ADDRESS, body);
    }

    /// POSTs the alert document; retries on non-2xx or transport errors.
    pub async fn notify(&self, url: &str, alert: &AlertNotification) -> Result<Delivered, AlertError> {
        let body = serde_json::to_vec(alert).expect("alert serializes");
        let mut attempts = 0;
        let mut last = String::new();
        for backoff in std::iter::once(None).chain(self.config.retry_backoff_ms.iter().map(Some)) {
            if let Some(ms) = backoff {
                let real = *ms as f64 * self.scale();
                if real > 0.0 {
                    tokio::time::sleep(Duration::from_secs_f64(real / 1000.0)).await;
                }
            }
            attempts += 1;
            let sent = self
                .http
                .post(url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone())
                .send()
                .await;
            match sent {
                Ok(r) if r.status().is_success() => return Ok(Delivered { attempts }),
                Ok(r) => last = format!("HTTP {}", r.status().as_u16()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(AlertError::DeliveryFailed { attempts, last })
    }

    /// Forces the probed latency of every resource behind `id` up by
    /// `extra_ms` and records the injection time.
    pub fn inject(&self, id: &DeploymentId, extra_ms: f64) -> Result<i64, AlertError> {
        if !self.config.bench_mode {
            return Err(AlertError::NotBenchMode);
        }
        let d = self.engine.get(id)?;
        let world = self.engine.providers().world();
        let at = now_ms();
        for r in d.resource_ids() {
            world.set_extra_latency(r, extra_ms);
        }
        self.state.lock().injections.insert(id.clone(), Injection { at_ms: at, claimed: false });
        Ok(at)
    }

    pub fn clear(&self, id: &DeploymentId) -> Result<(), AlertError> {
        if !self.config.bench_mode {
            return Err(AlertError::NotBenchMode);
        }
        let d = self.engine.get(id)?;
        let world = self.engine.providers().world();
        for r in d.resource_ids() {
            world.set_extra_latency(r, 0.0);
        }
        self.state.lock().injections.remove(id);
        Ok(())
    }

    /// Open episodes first, then closed ones in resolution order.
    pub fn episodes(&self) -> Vec<ViolationEpisode> {
        let st = self.state.lock();
        let mut open: Vec<_> = st.open.values().cloned().collect();
        open.sort_by_key(|e| e.started_at_ms);
        open.into_iter().chain(st.closed.iter().cloned()).collect()
    }

    pub fn episode(&self, episode_id: &str) -> Option<ViolationEpisode> {
        self.episodes().into_iter().find(|e| e.episode_id == episode_id)
    }

    /// Model milliseconds from the injection to detection.
    pub fn reaction_time(&self, episode_id: &str) -> Result<f64, AlertError> {
        let ep = self.episode(episode_id).ok_or_else(|| AlertError::UnknownEpisode(episode_id.into()))?;
        let injected = ep.injected_at_ms.ok_or(AlertError::MissingGroundTruth)?;
        let real = (ep.started_at_ms - injected) as f64;
        let scale = self.scale();
        Ok(if scale > 0.0 { real / scale } else { real })
    }

    fn phase(&self, id: &DeploymentId, slo_index: usize, period: Duration) -> Duration {
        let mut h = DefaultHasher::new();
        (id.as_str(), slo_index).hash(&mut h);
        let nanos = period.as_nanos().max(1) as u64;
        Duration::from_nanos(h.finish() % nanos)
    }

    fn spawn_ticker(self: &Arc<Self>, id: DeploymentId, slo_index: usize, interval_ms: u64) -> JoinHandle<()> {
        let weak = Arc::downgrade(self);
        let period = self.real(interval_ms as f64);
        let start = tokio::time::Instant::now() + self.phase(&id, slo_index, period);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval_at(start, period);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            loop {
                tick.tick().await;
                let Some(me) = weak.upgrade() else { return };
                let Ok(d) = me.store().get_deployment(&id) else { return };
                if !d.alerting.enabled || !matches!(d.status, DeploymentStatus::Ready | DeploymentStatus::Stopped) {
                    return;
                }
                if slo_index >= d.slos.len() {
                    return;
                }
                let e = me.evaluate(&d, slo_index);
                me.apply(&d, &e);
            }
        })
    }

    /// Starts or stops per-objective tickers to match the store.
    pub fn rescan(self: &Arc<Self>) -> usize {
        let active = self.store().list_deployments_with_alerting();
        let mut st = self.state.lock();
        st.tasks.retain(|_, t| !t.is_finished());
        let mut wanted = HashMap::new();
        for d in &active {
            for (i, slo) in d.slos.iter().enumerate() {
                wanted.insert((d.id.clone(), i), slo.evaluation_interval_ms);
            }
        }
        st.tasks.retain(|k, t| {
            let keep = wanted.contains_key(k);
            if !keep {
                t.abort();
            }
            keep
        });
        for (key, interval) in wanted {
            if !st.tasks.contains_key(&key) {
                let t = self.spawn_ticker(key.0.clone(), key.1, interval);
                st.tasks.insert(key, t);
            }
        }
        st.tasks.len()
    }

    /// Supervisor: rescans periodically and on every status change.
    pub fn spawn(self: &Arc<Self>) -> JoinHandle<()> {
        let weak = Arc::downgrade(self);
        let mut status = self.bus.subscribe(crate::engine::Addresses::STATUS);
        let mut tick = tokio::time::interval(self.config.rescan_period);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        tokio::spawn(async move {
            let mut listening = true;
            loop {
                tokio::select! {
                    _ = tick.tick() => {}
                    got = status.recv(), if listening => listening = got.is_some(),
                }
                let Some(me) = weak.upgrade() else { return };
                me.rescan();
            }
        })
    }
}

impl Drop for Alerting {
    fn drop(&mut self) {
        for (_, t) in self.state.get_mut().tasks.drain() {
            t.abort();
        }
    }
}
