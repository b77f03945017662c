use crate::api;
use crate::config::{ConfigError, GlobalConfig};
use crate::wiring;
use rm_core::alerting::{Alerting, AlertingConfig};
use rm_core::bus::{Consumer, EventBus};
use rm_core::clock::now_ms;
use rm_core::engine::{self, Engine, EngineConfig};
use rm_core::sim::{Providers, Testbed};
use rm_core::store::{Store, UserRecord};
use rm_core::tsdb::{Monitor, Tsdb};
use serde::Serialize;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

/// Startup order. Each entry is logged with its sequence number.
pub const COMPONENTS: [&str; 8] = [
    "store.migrate",
    "store",
    "event-bus",
    "metrics-tsdb",
    "provider-drivers",
    "deployment-engine",
    "slo-alerting",
    "rest-listener",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BootStep {
    pub seq: u32,
    pub component: &'static str,
    pub at_ms: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum BootError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("startup failed in {component}: {cause}")]
    StartupFailed { component: &'static str, cause: String, completed: Vec<BootStep> },
}

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<GlobalConfig>,
    pub bus: EventBus,
    pub store: Arc<Store>,
    pub providers: Providers,
    pub tsdb: Arc<Tsdb>,
    pub engine: Arc<Engine>,
    pub alerting: Arc<Alerting>,
}

struct Tasks(Vec<JoinHandle<()>>);

impl Drop for Tasks {
    fn drop(&mut self) {
        for t in &self.0 {
            t.abort();
        }
    }
}

pub struct Running {
    pub addr: SocketAddr,
    pub steps: Vec<BootStep>,
    pub state: AppState,
    _tasks: Tasks,
    _consumers: Vec<Consumer>,
    stop: Option<oneshot::Sender<()>>,
    server: Option<JoinHandle<()>>,
}

impl Running {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting requests and waits for in-flight ones.
    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(server) = self.server.take() {
            let _ = server.await;
        }
    }

    pub async fn wait(mut self) {
        if let Some(server) = self.server.take() {
            let _ = server.await;
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(server) = &self.server {
            server.abort();
        }
    }
}

struct Sequencer {
    steps: Vec<BootStep>,
}

impl Sequencer {
    fn done(&mut self, component: &'static str) {
        let seq = self.steps.len() as u32 + 1;
        tracing::info!(seq, component, "component started");
        self.steps.push(BootStep { seq, component, at_ms: now_ms() });
    }

    fn fail(&self, component: &'static str, cause: impl ToString) -> BootError {
        let cause = cause.to_string();
        tracing::error!(component, %cause, "startup failed");
        BootError::StartupFailed { component, cause, completed: self.steps.clone() }
    }
}

/// Loads and validates the configuration, then boots.
pub async fn boot_from_env(path: Option<&std::path::Path>) -> Result<Running, BootError> {
    boot(GlobalConfig::from_env(path)?).await
}

/// Starts every component in order; nothing after a failing step starts.
pub async fn boot(config: GlobalConfig) -> Result<Running, BootError> {
    config.validate()?;
    let config = Arc::new(config);
    let mut seq = Sequencer { steps: Vec::new() };
    let mut tasks = Tasks(Vec::new());
    let mut consumers = Vec::new();

    std::fs::create_dir_all(&config.store_path).map_err(|e| seq.fail("store", e))?;
    let store = Arc::new(Store::open(&config.store_path).map_err(|e| seq.fail("store", e))?);
    store.migrate(store.latest_version()).map_err(|e| seq.fail("store", e))?;
    seq.done("store.migrate");

    for u in &config.users {
        store.put_user(UserRecord::new(&u.name, &u.password)).map_err(|e| seq.fail("store", e))?;
        if !u.credentials.is_empty() {
            store.put_credentials(&u.name, u.credentials.clone()).map_err(|e| seq.fail("store", e))?;
        }
    }
    seq.done("store");

    let bus = EventBus::new();
    seq.done("event-bus");

    let tsdb = Arc::new(Tsdb::default());
    consumers.extend(wiring::metrics(&bus, &tsdb));
    seq.done("metrics-tsdb");

    let mut testbed = match &config.testbed_config_path {
        Some(p) => Testbed::load(p).map_err(|e| seq.fail("provider-drivers", e))?,
        None => Testbed::continuum(config.testbed_slots, config.seed),
    };
    testbed.seed = config.seed;
    testbed.validate().map_err(|e| seq.fail("provider-drivers", e))?;
    let resources = testbed.resources.clone();
    let providers = Providers::simulated(testbed, config.time_scale);
    store
        .transact(|tx| {
            for r in resources {
                if tx.resource(&r.id).is_none() {
                    tx.put_resource(r)?;
                }
            }
            Ok::<_, rm_core::store::StoreError>(())
        })
        .map_err(|e| seq.fail("provider-drivers", e))?;
    let monitor = Arc::new(Monitor::new(tsdb.clone(), store.clone(), providers.clone()));
    let period = Duration::from_secs_f64((config.collector_period_ms as f64 * config.time_scale).max(1.0) / 1000.0);
    tasks.0.push(monitor.clone().spawn(period));
    seq.done("provider-drivers");

    let engine_config = EngineConfig {
        default_evaluation_interval_ms: config.evaluation_interval_ms,
        reallocation_enabled: config.reallocation_enabled,
    };
    let engine = Engine::new(store.clone(), providers.clone(), bus.clone(), engine_config);
    let recovered = engine.recover().map_err(|e| seq.fail("deployment-engine", e))?;
    tracing::info!(recovered, "deployments restored");
    consumers.extend(engine::register(&bus, &engine));
    seq.done("deployment-engine");

    let alerting_config = AlertingConfig {
        reallocation_enabled: config.reallocation_enabled,
        bench_mode: config.bench_mode,
        ..Default::default()
    };
    let alerting = Alerting::new(engine.clone(), monitor, bus.clone(), alerting_config);
    tasks.0.push(alerting.spawn());
    consumers.extend(wiring::alerting(&bus, &alerting));
    seq.done("slo-alerting");

    let state = AppState { config: config.clone(), bus, store, providers, tsdb, engine, alerting };
    let listener = tokio::net::TcpListener::bind(config.listen_addr()?)
        .await
        .map_err(|e| seq.fail("rest-listener", e))?;
    let addr = listener.local_addr().map_err(|e| seq.fail("rest-listener", e))?;
    let app = api::router(state.clone());
    let (stop, stopped) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        let serve = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = stopped.await;
        });
        if let Err(e) = serve.await {
            tracing::error!(error = %e, "listener stopped");
        }
    });
    seq.done("rest-listener");
    tracing::info!(%addr, "listening");

    Ok(Running {
        addr,
        steps: seq.steps,
        state,
        _tasks: tasks,
        _consumers: consumers,
        stop: Some(stop),
        server: Some(server),
    })
}
