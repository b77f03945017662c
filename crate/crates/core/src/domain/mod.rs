//! Shared domain types.

mod lifecycle;
mod slo;
mod token;

pub use lifecycle::{next_state, DeploymentStatus, IllegalTransition, LifecycleEvent};
pub use slo::{
    format_slo, parse_slo, parse_slo_with_interval, Comparator, ServiceLevelObjective,
    SloParseError, DEFAULT_EVALUATION_INTERVAL_MS, MIN_EVALUATION_INTERVAL_MS,
};
pub use token::{constant_time_eq, AuthToken, Claims, TokenError};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(ResourceId);
string_id!(DeploymentId);
string_id!(HandleId);

impl DeploymentId {
    pub fn generate() -> Self {
        Self(uuid::Uuid::new_v4().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Platform {
    FaasEdge,
    Serverless,
    Container,
    Vm,
}

impl Platform {
    pub const ALL: [Platform; 4] =
        [Platform::FaasEdge, Platform::Serverless, Platform::Container, Platform::Vm];

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::FaasEdge => "FAAS_EDGE",
            Platform::Serverless => "SERVERLESS",
            Platform::Container => "CONTAINER",
            Platform::Vm => "VM",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResourceState {
    Available,
    Reserved,
    Deployed,
    Unreachable,
}

impl ResourceState {
    /// Allowed resource state edges. `Reserved -> Available` covers releasing a
    /// reservation whose provisioning never completed.
    pub fn can_transition_to(self, to: ResourceState) -> bool {
        use ResourceState::*;
        matches!(
            (self, to),
            (Available, Reserved)
                | (Reserved, Deployed)
                | (Reserved, Available)
                | (Deployed, Available)
                | (_, Unreachable)
                | (Unreachable, Available)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceRecord {
    pub id: ResourceId,
    pub platform: Platform,
    pub region: String,
    pub cpu_cores: u32,
    pub memory_gb: f64,
    pub storage_gb: f64,
    pub cost_per_hour: f64,
    #[serde(default = "default_state")]
    pub state: ResourceState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deployment_id: Option<DeploymentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

fn default_state() -> ResourceState {
    ResourceState::Available
}

impl ResourceRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.0.is_empty() {
            return Err("id must not be empty".into());
        }
        if self.cpu_cores < 1 {
            return Err(format!("{}: cpuCores must be >= 1", self.id));
        }
        if !(self.memory_gb > 0.0) || !self.memory_gb.is_finite() {
            return Err(format!("{}: memoryGb must be > 0", self.id));
        }
        if !(self.storage_gb > 0.0) || !self.storage_gb.is_finite() {
            return Err(format!("{}: storageGb must be > 0", self.id));
        }
        if !(self.cost_per_hour >= 0.0) || !self.cost_per_hour.is_finite() {
            return Err(format!("{}: costPerHour must be >= 0", self.id));
        }
        let holds = matches!(self.state, ResourceState::Reserved | ResourceState::Deployed);
        if holds != self.deployment_id.is_some() && self.state != ResourceState::Unreachable {
            return Err(format!("{}: deployment reference does not match state", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ArtifactKind {
    Function,
    ContainerService,
}

impl ArtifactKind {
    pub fn runs_on(self, platform: Platform) -> bool {
        match self {
            ArtifactKind::Function => {
                matches!(platform, Platform::FaasEdge | Platform::Serverless | Platform::Vm)
            }
            ArtifactKind::ContainerService => platform == Platform::Container,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Behavior {
    #[serde(default)]
    pub sleep_ms: u64,
    #[serde(default)]
    pub image_pull_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Artifact {
    pub name: String,
    pub kind: ArtifactKind,
    #[serde(default)]
    pub behavior: Behavior,
    pub image_ref: String,
}

/// Persisted view of a provider-side deployment handle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HandleRecord {
    pub handle_id: HandleId,
    pub resource_id: ResourceId,
    pub artifact: String,
    pub pull_count: u32,
    pub running: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Assignment {
    pub resource_id: ResourceId,
    pub artifact: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handle: Option<HandleRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AlertingSettings {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default)]
    pub webhook_url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transition {
    pub status: DeploymentStatus,
    pub at_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Deployment {
    pub id: DeploymentId,
    pub owner_id: String,
    pub assignments: Vec<Assignment>,
    #[serde(default)]
    pub slos: Vec<ServiceLevelObjective>,
    #[serde(default)]
    pub alerting: AlertingSettings,
    pub status: DeploymentStatus,
    /// First time each status was entered.
    pub transitions: BTreeMap<DeploymentStatus, i64>,
    /// Every transition in order, including repeated READY/STOPPED cycles.
    #[serde(default)]
    pub history: Vec<Transition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_startup_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_shutdown_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Deployment {
    pub fn new(id: DeploymentId, owner_id: impl Into<String>, created_at_ms: i64) -> Self {
        let mut d = Deployment {
            id,
            owner_id: owner_id.into(),
            assignments: Vec::new(),
            slos: Vec::new(),
            alerting: AlertingSettings::default(),
            status: DeploymentStatus::New,
            transitions: BTreeMap::new(),
            history: Vec::new(),
            credentials_ref: None,
            last_startup_ms: None,
            last_shutdown_ms: None,
            error: None,
        };
        d.record(DeploymentStatus::New, created_at_ms);
        d
    }

    /// Advances the state machine, stamping the new state. Timestamps are
    /// clamped so the history stays non-decreasing.
    pub fn apply(&mut self, event: LifecycleEvent, at_ms: i64) -> Result<DeploymentStatus, IllegalTransition> {
        let next = next_state(self.status, event)?;
        self.record(next, at_ms);
        Ok(next)
    }

    fn record(&mut self, status: DeploymentStatus, at_ms: i64) {
        let at_ms = self.history.last().map_or(at_ms, |t| t.at_ms.max(at_ms));
        self.status = status;
        self.transitions.entry(status).or_insert(at_ms);
        self.history.push(Transition { status, at_ms });
    }

    fn span(&self, from: DeploymentStatus, to: DeploymentStatus) -> Option<i64> {
        Some(self.transitions.get(&to)? - self.transitions.get(&from)?)
    }

    /// READY minus DEPLOYING.
    pub fn deployment_time_ms(&self) -> Option<i64> {
        self.span(DeploymentStatus::Deploying, DeploymentStatus::Ready)
    }

    /// TERMINATED minus TERMINATING.
    pub fn termination_time_ms(&self) -> Option<i64> {
        self.span(DeploymentStatus::Terminating, DeploymentStatus::Terminated)
    }

    pub fn resource_ids(&self) -> impl Iterator<Item = &ResourceId> {
        self.assignments.iter().map(|a| &a.resource_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricSample {
    pub metric: String,
    pub timestamp_ms: i64,
    pub value: f64,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl MetricSample {
    pub fn new(metric: impl Into<String>, timestamp_ms: i64, value: f64) -> Self {
        MetricSample { metric: metric.into(), timestamp_ms, value, tags: BTreeMap::new() }
    }

    pub fn tag(mut self, k: impl Into<String>, v: impl Into<String>) -> Self {
        self.tags.insert(k.into(), v.into());
        self
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.metric.is_empty() || self.metric.chars().any(char::is_whitespace) {
            return Err("metric must be non-empty without whitespace");
        }
        if self.timestamp_ms <= 0 {
            return Err("timestamp must be positive");
        }
        if !self.value.is_finite() {
            return Err("value must be finite");
        }
        let bad = |s: &String| s.is_empty() || s.contains('=') || s.chars().any(char::is_whitespace);
        if self.tags.iter().any(|(k, v)| bad(k) || bad(v)) {
            return Err("tag keys and values must be non-empty without whitespace or '='");
        }
        Ok(())
    }
}

/// Webhook payload. Field order is part of the wire contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AlertNotification {
    pub deployment_id: DeploymentId,
    pub slo_index: usize,
    pub metric: String,
    /// `None` when the violation is missing data.
    pub observed_value: Option<f64>,
    pub threshold: f64,
    pub comparator: Comparator,
    pub timestamp_ms: i64,
    pub episode_id: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_kind_rules() {
        assert!(ArtifactKind::Function.runs_on(Platform::FaasEdge));
        assert!(ArtifactKind::Function.runs_on(Platform::Serverless));
        assert!(ArtifactKind::Function.runs_on(Platform::Vm));
        assert!(!ArtifactKind::Function.runs_on(Platform::Container));
        assert!(ArtifactKind::ContainerService.runs_on(Platform::Container));
        assert!(!ArtifactKind::ContainerService.runs_on(Platform::Vm));
    }

    #[test]
    fn resource_state_edges() {
        use ResourceState::*;
        assert!(Available.can_transition_to(Reserved));
        assert!(Reserved.can_transition_to(Deployed));
        assert!(Deployed.can_transition_to(Available));
        assert!(Deployed.can_transition_to(Unreachable));
        assert!(Unreachable.can_transition_to(Available));
        assert!(!Available.can_transition_to(Deployed));
        assert!(!Unreachable.can_transition_to(Reserved));
    }

    #[test]
    fn deployment_timings_and_monotone_history() {
        let mut d = Deployment::new(DeploymentId::from("d"), "u", 100);
        d.apply(LifecycleEvent::ValidateOk, 101).unwrap();
        d.apply(LifecycleEvent::ResourcesReserved, 105).unwrap();
        d.apply(LifecycleEvent::AllReady, 104).unwrap(); // clock skew clamps to 105
        assert_eq!(d.deployment_time_ms(), Some(0));
        d.apply(LifecycleEvent::Stop, 200).unwrap();
        d.apply(LifecycleEvent::Start, 210).unwrap();
        assert_eq!(d.transitions[&DeploymentStatus::Ready], 105);
        d.apply(LifecycleEvent::Terminate, 300).unwrap();
        d.apply(LifecycleEvent::AllTerminated, 365).unwrap();
        assert_eq!(d.termination_time_ms(), Some(65));
        assert!(d.history.windows(2).all(|w| w[0].at_ms <= w[1].at_ms));
        assert!(d.apply(LifecycleEvent::Start, 400).is_err());
    }

    #[test]
    fn resource_validation() {
        let mut r = ResourceRecord {
            id: "r".into(),
            platform: Platform::Vm,
            region: "us-east-1".into(),
            cpu_cores: 2,
            memory_gb: 8.0,
            storage_gb: 8.0,
            cost_per_hour: 0.09,
            state: ResourceState::Available,
            deployment_id: None,
            metrics_endpoint: None,
            labels: BTreeMap::new(),
        };
        assert!(r.validate().is_ok());
        r.cpu_cores = 0;
        assert!(r.validate().is_err());
        r.cpu_cores = 1;
        r.state = ResourceState::Reserved;
        assert!(r.validate().is_err());
        r.deployment_id = Some("d".into());
        assert!(r.validate().is_ok());
    }

    #[test]
    fn metric_sample_validation() {
        assert!(MetricSample::new("m", 1, 1.0).tag("k", "v").validate().is_ok());
        assert!(MetricSample::new("", 1, 1.0).validate().is_err());
        assert!(MetricSample::new("m", 0, 1.0).validate().is_err());
        assert!(MetricSample::new("m", 1, f64::NAN).validate().is_err());
        assert!(MetricSample::new("m", 1, 1.0).tag("k=", "v").validate().is_err());
    }
}
