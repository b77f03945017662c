//! Connects the scenarios to a service, either booted in-process or remote.

use crate::BenchError;
use rm_client::Client;
use rm_core::store::Credentials;
use rm_core::sim::Testbed;
use rm_server::{GlobalConfig, Running, UserConfig};
use std::path::PathBuf;

pub const BENCH_USER: &str = "bench";

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub config_path: Option<PathBuf>,
    /// Remote service; embedded when absent.
    pub url: Option<String>,
    pub user: String,
    pub password: String,
    pub seed: u64,
    pub time_scale: Option<f64>,
    pub evaluation_interval_ms: Option<u64>,
    pub testbed_slots: Option<usize>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            config_path: None,
            url: None,
            user: BENCH_USER.into(),
            password: "bench".into(),
            seed: 42,
            time_scale: None,
            evaluation_interval_ms: None,
            testbed_slots: None,
        }
    }
}

pub struct Harness {
    pub client: Client,
    pub time_scale: f64,
    pub seed: u64,
    pub evaluation_interval_ms: u64,
    running: Option<Running>,
    _store: Option<tempfile::TempDir>,
}

fn bench_credentials(testbed: &Testbed, user: &str) -> Credentials {
    testbed.credentials.iter().map(|(p, prefix)| (*p, format!("{prefix}{user}"))).collect()
}

impl Harness {
    pub async fn start(cfg: &HarnessConfig) -> Result<Self, BenchError> {
        match &cfg.url {
            Some(url) => Self::remote(cfg, url).await,
            None => Self::embedded(cfg).await,
        }
    }

    async fn remote(cfg: &HarnessConfig, url: &str) -> Result<Self, BenchError> {
        let mut client = Client::new(url)?;
        client.login(&cfg.user, &cfg.password).await?;
        Ok(Harness {
            client,
            time_scale: cfg.time_scale.unwrap_or(1.0),
            seed: cfg.seed,
            evaluation_interval_ms: cfg.evaluation_interval_ms.unwrap_or(rm_core::domain::DEFAULT_EVALUATION_INTERVAL_MS),
            running: None,
            _store: None,
        })
    }

    async fn embedded(cfg: &HarnessConfig) -> Result<Self, BenchError> {
        let mut config = match &cfg.config_path {
            Some(p) => GlobalConfig::load(p)?,
            None => GlobalConfig::default(),
        };
        let mut store_dir = None;
        if cfg.config_path.is_none() {
            let dir = tempfile::tempdir()?;
            config.store_path = dir.path().to_path_buf();
            config.listen_address = "127.0.0.1:0".into();
            store_dir = Some(dir);
        }
        if let Some(s) = cfg.time_scale {
            config.time_scale = s;
        }
        if let Some(i) = cfg.evaluation_interval_ms {
            config.evaluation_interval_ms = i;
        }
        if let Some(n) = cfg.testbed_slots {
            config.testbed_slots = n;
        }
        config.seed = cfg.seed;
        config.bench_mode = true;
        if config.auth_secret.is_empty() {
            config.auth_secret = uuid::Uuid::new_v4().to_string();
        }
        let testbed = match &config.testbed_config_path {
            Some(p) => Testbed::load(p).map_err(|e| BenchError::Setup(e.to_string()))?,
            None => Testbed::continuum(1, cfg.seed),
        };
        config.users.retain(|u| u.name != cfg.user);
        config.users.push(UserConfig {
            name: cfg.user.clone(),
            password: cfg.password.clone(),
            credentials: bench_credentials(&testbed, &cfg.user),
        });
        let time_scale = config.time_scale;
        let interval = config.evaluation_interval_ms;
        let running = rm_server::boot(config).await.map_err(|e| BenchError::Setup(e.to_string()))?;
        let mut client = Client::new(&running.url())?;
        client.login(&cfg.user, &cfg.password).await?;
        Ok(Harness {
            client,
            time_scale,
            seed: cfg.seed,
            evaluation_interval_ms: interval,
            running: Some(running),
            _store: store_dir,
        })
    }

    /// The in-process service, when embedded.
    pub fn server(&self) -> Option<&Running> {
        self.running.as_ref()
    }

    /// Real milliseconds for `model_ms` of simulated time.
    pub fn real_ms(&self, model_ms: f64) -> f64 {
        model_ms * self.time_scale
    }

    pub async fn shutdown(mut self) {
        if let Some(r) = self.running.take() {
            r.shutdown().await;
        }
    }
}
