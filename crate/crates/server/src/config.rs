use rm_core::store::Credentials;
use serde::{Deserialize, Serialize};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

pub const CONFIG_ENV: &str = "RM_CONFIG";
pub const TIME_SCALE_ENV: &str = "RM_TIME_SCALE";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config field {field}: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: &str, reason: impl Into<String>) -> Self {
        ConfigError { field: field.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserConfig {
    pub name: String,
    pub password: String,
    #[serde(default)]
    pub credentials: Credentials,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct GlobalConfig {
    pub listen_address: String,
    pub store_path: PathBuf,
    pub time_scale: f64,
    /// Default for objectives that do not name their own interval.
    pub evaluation_interval_ms: u64,
    /// Testbed document; the built-in continuum testbed when absent.
    pub testbed_config_path: Option<PathBuf>,
    /// Copies of each built-in node.
    pub testbed_slots: usize,
    pub seed: u64,
    pub auth_secret: String,
    pub token_ttl_seconds: i64,
    pub reallocation_enabled: bool,
    /// Enables the fault-injection routes used by the harness.
    pub bench_mode: bool,
    /// Model milliseconds between collector rounds.
    pub collector_period_ms: u64,
    pub users: Vec<UserConfig>,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            listen_address: "127.0.0.1:8080".into(),
            store_path: PathBuf::from("data"),
            time_scale: 1.0,
            evaluation_interval_ms: rm_core::domain::DEFAULT_EVALUATION_INTERVAL_MS,
            testbed_config_path: None,
            testbed_slots: 10,
            seed: 42,
            auth_secret: String::new(),
            token_ttl_seconds: 3600,
            reallocation_enabled: false,
            bench_mode: false,
            collector_period_ms: 5000,
            users: Vec::new(),
        }
    }
}

impl GlobalConfig {
    /// Reads a TOML or JSON (by extension) document.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("configPath", format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| ConfigError::new("configPath", e))
    }

    /// `path`, else `RM_CONFIG`, else defaults; then `RM_TIME_SCALE`.
    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let mut config = match path.map(Path::to_path_buf).or(env_path) {
            Some(p) => Self::load(&p)?,
            None => GlobalConfig::default(),
        };
        if let Ok(v) = std::env::var(TIME_SCALE_ENV) {
            config.time_scale = v.trim().parse().map_err(|_| ConfigError::new("timeScale", format!("not a number: {v}")))?;
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(ConfigError::new("timeScale", "must be positive"));
        }
        if self.token_ttl_seconds <= 0 {
            return Err(ConfigError::new("tokenTtlSeconds", "must be positive"));
        }
        if self.auth_secret.is_empty() {
            return Err(ConfigError::new("authSecret", "must not be empty"));
        }
        if self.evaluation_interval_ms < rm_core::domain::MIN_EVALUATION_INTERVAL_MS {
            return Err(ConfigError::new("evaluationIntervalMs", "must be at least 100"));
        }
        if self.collector_period_ms == 0 {
            return Err(ConfigError::new("collectorPeriodMs", "must be positive"));
        }
        self.listen_addr()?;
        if self.testbed_config_path.is_none() && self.testbed_slots == 0 {
            return Err(ConfigError::new("testbedSlots", "must be positive"));
        }
        let mut names = std::collections::BTreeSet::new();
        for u in &self.users {
            if u.name.is_empty() || !names.insert(&u.name) {
                return Err(ConfigError::new("users", format!("empty or duplicate name {:?}", u.name)));
            }
        }
        Ok(())
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen_address.parse().map_err(|_| ConfigError::new("listenAddress", "expected host:port"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> GlobalConfig {
        GlobalConfig { auth_secret: "s".into(), ..Default::default() }
    }

    #[test]
    fn field_names_in_errors() {
        assert!(valid().validate().is_ok());
        let field = |c: GlobalConfig| c.validate().unwrap_err().field;
        assert_eq!(field(GlobalConfig { time_scale: 0.0, ..valid() }), "timeScale");
        assert_eq!(field(GlobalConfig { time_scale: f64::NAN, ..valid() }), "timeScale");
        assert_eq!(field(GlobalConfig { token_ttl_seconds: 0, ..valid() }), "tokenTtlSeconds");
        assert_eq!(field(GlobalConfig { auth_secret: String::new(), ..valid() }), "authSecret");
        assert_eq!(field(GlobalConfig { listen_address: "nope".into(), ..valid() }), "listenAddress");
        assert_eq!(field(GlobalConfig { evaluation_interval_ms: 5, ..valid() }), "evaluationIntervalMs");
    }

    #[test]
    fn toml_and_json_documents() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("rm.toml");
        std::fs::write(
            &toml_path,
            "timeScale = 0.5\nauthSecret = \"k\"\n[[users]]\nname = \"a\"\npassword = \"b\"\n[users.credentials]\nFAAS_EDGE = \"ofs-a\"\n",
        )
        .unwrap();
        let c = GlobalConfig::load(&toml_path).unwrap();
        assert_eq!(c.time_scale, 0.5);
        assert_eq!(c.users[0].credentials.len(), 1);
        assert_eq!(c.listen_address, "127.0.0.1:8080");

        let json_path = dir.path().join("rm.json");
        std::fs::write(&json_path, r#"{"timeScale": 0.01, "authSecret": "k", "benchMode": true}"#).unwrap();
        let c = GlobalConfig::load(&json_path).unwrap();
        assert!(c.bench_mode);
        assert_eq!(GlobalConfig::load(&dir.path().join("missing.toml")).unwrap_err().field, "configPath");
    }
}
