//! Testbed configuration: regions, resources, artifacts, credential
//! prefixes and profile overrides for the simulated providers.

use super::profile::{ProfileOverride, ProviderProfile};
use crate::domain::{
    Artifact, ArtifactKind, Behavior, Platform, ResourceId, ResourceRecord, ResourceState,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegionSpec {
    pub name: String,
    pub base_latency_ms: f64,
    #[serde(default = "yes")]
    pub reachable: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Testbed {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
    /// Required credential prefix per platform.
    #[serde(default)]
    pub credentials: BTreeMap<Platform, String>,
    #[serde(default)]
    pub resources: Vec<ResourceRecord>,
    #[serde(default)]
    pub artifacts: Vec<Artifact>,
    #[serde(default)]
    pub profiles: BTreeMap<Platform, ProfileOverride>,
}

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error("reading testbed: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing testbed: {0}")]
    Parse(String),
    #[error("invalid testbed: {0}")]
    Invalid(String),
}

impl Testbed {
    /// Loads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TestbedError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let tb: Testbed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| TestbedError::Parse(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| TestbedError::Parse(e.to_string()))?
        };
        tb.validate()?;
        Ok(tb)
    }

    pub fn validate(&self) -> Result<(), TestbedError> {
        let invalid = |s: String| TestbedError::Invalid(s);
        let regions: BTreeSet<&str> = self.regions.iter().map(|r| r.name.as_str()).collect();
        if regions.len() != self.regions.len() {
            return Err(invalid("duplicate region".into()));
        }
        let mut ids = BTreeSet::new();
        for r in &self.resources {
            r.validate().map_err(invalid)?;
            if r.state != ResourceState::Available || r.deployment_id.is_some() {
                return Err(invalid(format!("{}: testbed resources start AVAILABLE", r.id)));
            }
            if !regions.contains(r.region.as_str()) {
                return Err(invalid(format!("{}: unknown region {}", r.id, r.region)));
            }
            if !ids.insert(&r.id) {
                return Err(invalid(format!("duplicate resource {}", r.id)));
            }
        }
        let mut names = BTreeSet::new();
        for a in &self.artifacts {
            if !names.insert(&a.name) {
                return Err(invalid(format!("duplicate artifact {}", a.name)));
            }
        }
        for p in Platform::ALL {
            self.profile(p).validate().map_err(invalid)?;
        }
        Ok(())
    }

    pub fn profile(&self, platform: Platform) -> ProviderProfile {
        let mut p = ProviderProfile::default_for(platform);
        if let Some(o) = self.profiles.get(&platform) {
            p.apply(o);
        }
        p
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }

    pub fn region(&self, name: &str) -> Option<&RegionSpec> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// The thirteen-node edge/fog/cloud testbed, with `slots` copies of each
    /// node so that concurrent deployments never contend for the same one.
    /// Copies carry labels `testbedId` (1..=13) and `slot`.
    pub fn continuum(slots: usize, seed: u64) -> Self {
        let slots = slots.max(1);
        // (table id, platform, region, cores, memory GB, storage GB, cost/h, kind)
        let nodes: &[(u32, Platform, &str, u32, f64, f64, f64, &str)] = &[
            (1, Platform::FaasEdge, "uibk", 8, 16.0, 64.0, 0.0, "intel-nuc"),
            (2, Platform::FaasEdge, "uibk", 4, 1.0, 16.0, 0.0, "raspberry-pi-3"),
            (3, Platform::FaasEdge, "uibk", 4, 4.0, 32.0, 0.0, "raspberry-pi-4"),
            (4, Platform::Container, "uibk", 2, 2.0, 30.0, 0.0, "k8s-node"),
            (5, Platform::Container, "uibk", 4, 4.0, 30.0, 0.0, "k8s-node"),
            (6, Platform::Container, "uibk", 4, 4.0, 30.0, 0.0, "k8s-node"),
            (7, Platform::Container, "uibk", 8, 8.0, 30.0, 0.0, "k8s-node"),
            (8, Platform::Container, "uibk", 8, 8.0, 30.0, 0.0, "k8s-node"),
            (9, Platform::Container, "uibk", 2, 2.0, 30.0, 0.0, "k8s-node"),
            (10, Platform::Container, "uibk", 8, 8.0, 160.0, 0.0, "k8s-control-plane"),
            (11, Platform::Vm, "us-east-1", 2, 8.0, 8.0, 0.0928, "t2.large"),
            (12, Platform::Serverless, "us-east-1", 6, 0.128, 0.512, 0.06, "lambda"),
            (13, Platform::Serverless, "us-west-2", 6, 0.128, 0.512, 0.06, "lambda"),
        ];
        let mut resources = Vec::new();
        for slot in 0..slots {
            for &(tid, platform, region, cores, mem, storage, cost, kind) in nodes {
                let id = if slot == 0 { format!("r{tid:02}") } else { format!("r{tid:02}-s{slot}") };
                let labels = BTreeMap::from([
                    ("testbedId".to_string(), tid.to_string()),
                    ("slot".to_string(), slot.to_string()),
                    ("node".to_string(), kind.to_string()),
                ]);
                resources.push(ResourceRecord {
                    id: ResourceId::new(id.clone()),
                    platform,
                    region: region.to_string(),
                    cpu_cores: cores,
                    memory_gb: mem,
                    storage_gb: storage,
                    cost_per_hour: cost,
                    state: ResourceState::Available,
                    deployment_id: None,
                    metrics_endpoint: Some(format!("sim://{id}/metrics")),
                    labels,
                });
            }
        }
        Testbed {
            seed,
            regions: vec![
                RegionSpec { name: "uibk".into(), base_latency_ms: 2.0, reachable: true },
                RegionSpec { name: "us-east-1".into(), base_latency_ms: 90.0, reachable: true },
                RegionSpec { name: "us-west-2".into(), base_latency_ms: 150.0, reachable: true },
            ],
            credentials: BTreeMap::from([
                (Platform::FaasEdge, "ofs-".to_string()),
                (Platform::Container, "k8s-".to_string()),
                (Platform::Serverless, "aws-".to_string()),
                (Platform::Vm, "aws-".to_string()),
            ]),
            resources,
            artifacts: vec![
                Artifact {
                    name: "function1".into(),
                    kind: ArtifactKind::Function,
                    behavior: Behavior { sleep_ms: 1000, image_pull_ms: 200 },
                    image_ref: "registry.local/sleep-1s:latest".into(),
                },
                Artifact {
                    name: "function2".into(),
                    kind: ArtifactKind::Function,
                    behavior: Behavior { sleep_ms: 0, image_pull_ms: 200 },
                    image_ref: "registry.local/echo:latest".into(),
                },
                Artifact {
                    name: "service1".into(),
                    kind: ArtifactKind::ContainerService,
                    behavior: Behavior { sleep_ms: 0, image_pull_ms: 1500 },
                    image_ref: "docker.io/library/nginx:stable".into(),
                },
            ],
            profiles: BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuum_is_valid_and_sized() {
        let tb = Testbed::continuum(3, 1);
        tb.validate().unwrap();
        assert_eq!(tb.resources.len(), 39);
        assert_eq!(tb.resources.iter().filter(|r| r.labels["testbedId"] == "11").count(), 3);
        assert!(tb.artifact("function1").is_some());
    }

    #[test]
    fn round_trips_through_toml_and_json() {
        let tb = Testbed::continuum(1, 9);
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("tb.toml");
        std::fs::write(&t, toml::to_string(&tb).unwrap()).unwrap();
        assert_eq!(Testbed::load(&t).unwrap(), tb);
        let j = dir.path().join("tb.json");
        std::fs::write(&j, serde_json::to_string(&tb).unwrap()).unwrap();
        assert_eq!(Testbed::load(&j).unwrap(), tb);
    }

    #[test]
    fn rejects_unknown_region() {
        let mut tb = Testbed::continuum(1, 0);
        tb.resources[0].region = "mars".into();
        assert!(matches!(tb.validate(), Err(TestbedError::Invalid(_))));
    }

    #[test]
    fn profile_overrides_apply() {
        let mut tb = Testbed::continuum(1, 0);
        tb.profiles.insert(
            Platform::Vm,
            ProfileOverride { per_deployment_penalty_ms: Some(0.0), ..Default::default() },
        );
        assert_eq!(tb.profile(Platform::Vm).per_deployment_penalty_ms, 0.0);
        assert_eq!(tb.profile(Platform::Vm).deploy_latency_ms.mean_ms, 200_000.0);
    }
}
