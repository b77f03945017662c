//! Deployment lifecycle: validation, reservation, provider fan-out, start/stop,
//! termination and reallocation.

mod bus_api;

pub use bus_api::{fault_for, register, Addresses};

use crate::bus::EventBus;
use crate::clock::now_ms;
use crate::domain::{
    parse_slo_with_interval, AlertingSettings, Artifact, Assignment, Deployment, DeploymentId,
    DeploymentStatus, HandleRecord, IllegalTransition, LifecycleEvent, Platform, ResourceId,
    ResourceRecord, ResourceState, ServiceLevelObjective, DEFAULT_EVALUATION_INTERVAL_MS,
};
use crate::sim::{Invocation, ProviderError, Providers};
use crate::store::{Credentials, Store, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssignmentRequest {
    pub resource_id: ResourceId,
    pub artifact: String,
}

/// An SLO either as text (`latency < 10s`) or as a structured object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SloSpec {
    Text(String),
    Structured(ServiceLevelObjective),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DeploymentRequest {
    #[serde(default)]
    pub assignments: Vec<AssignmentRequest>,
    #[serde(default)]
    pub slos: Vec<SloSpec>,
    #[serde(default)]
    pub alerting: AlertingSettings,
    /// Inline credentials per platform. Without them the stored set named by
    /// `credentialsRef` (default: the owner) is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials: Option<Credentials>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("validation failed: {}", .0.join("; "))]
    ValidationFailed(Vec<String>),
    #[error("resources already taken: {0:?}")]
    ResourceConflict(Vec<ResourceId>),
    #[error("{0} not found")]
    NotFound(String),
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
    #[error("deployment {0} is not READY")]
    NotReady(DeploymentId),
    #[error("no alternative resource available")]
    NoCandidate,
    #[error("reallocation is disabled")]
    ReallocationDisabled,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("store: {0}")]
    Store(String),
}

impl From<StoreError> for EngineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::ResourceConflict(ids) => EngineError::ResourceConflict(ids),
            StoreError::NotFound(what) => EngineError::NotFound(what),
            other => EngineError::Store(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub default_evaluation_interval_ms: u64,
    pub reallocation_enabled: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { default_evaluation_interval_ms: DEFAULT_EVALUATION_INTERVAL_MS, reallocation_enabled: false }
    }
}

/// Validated request, ready to commit.
#[derive(Debug, Clone)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub slos: Vec<ServiceLevelObjective>,
    pub credentials: Credentials,
    pub credentials_ref: String,
}

/// One parallel branch of provisioning: pre-pull, then deploy.
#[derive(Debug, Clone)]
pub struct PlanStep {
    pub resource: ResourceRecord,
    pub artifact: Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InvokeOutcome {
    pub response: Value,
    pub rtt_ms: f64,
    pub handle_id: String,
    pub resource_id: ResourceId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Reallocation {
    pub from: ResourceId,
    pub to: ResourceId,
    pub assignment: Assignment,
}

pub struct Engine {
    store: Arc<Store>,
    providers: Providers,
    bus: EventBus,
    config: EngineConfig,
}

fn first_failure(results: &[Result<HandleRecord, ProviderError>]) -> Option<String> {
    results.iter().find_map(|r| r.as_ref().err().map(ToString::to_string))
}

impl Engine {
    pub fn new(store: Arc<Store>, providers: Providers, bus: EventBus, config: EngineConfig) -> Arc<Self> {
        Arc::new(Engine { store, providers, bus, config })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    fn artifact(&self, name: &str) -> Option<Artifact> {
        self.providers.world().testbed().artifact(name).cloned()
    }

    fn publish(&self, d: &Deployment) {
        let at = d.history.last().map_or(0, |t| t.at_ms);
        self.bus.publish(Addresses::STATUS, json!({ "id": d.id, "status": d.status, "atMs": at }));
    }

    /// Pure check of a request. Reasons are returned as data; nothing changes.
    pub fn validate(&self, owner: &str, req: &DeploymentRequest) -> Result<Plan, Vec<String>> {
        let mut reasons = Vec::new();
        if req.assignments.is_empty() {
            reasons.push("no resources requested".to_string());
        }
        let credentials_ref = req.credentials_ref.clone().unwrap_or_else(|| owner.to_string());
        let credentials = match &req.credentials {
            Some(c) => c.clone(),
            None => self.store.get_credentials(&credentials_ref).unwrap_or_default(),
        };
        let world = self.providers.world();
        let mut seen = BTreeSet::new();
        let mut steps = Vec::new();
        for (i, a) in req.assignments.iter().enumerate() {
            let at = format!("assignments[{i}] ({})", a.resource_id);
            if !seen.insert(a.resource_id.clone()) {
                reasons.push(format!("{at}: resource requested twice"));
                continue;
            }
            let Ok(resource) = self.store.get_resource(&a.resource_id) else {
                reasons.push(format!("{at}: unknown resource"));
                continue;
            };
            let Some(artifact) = self.artifact(&a.artifact) else {
                reasons.push(format!("{at}: unknown artifact {:?}", a.artifact));
                continue;
            };
            let mut bad = false;
            if !artifact.kind.runs_on(resource.platform) {
                reasons.push(format!("{at}: artifact {} cannot run on {}", artifact.name, resource.platform));
                bad = true;
            }
            let cred = credentials.get(&resource.platform).map(String::as_str).unwrap_or("");
            if !world.check_credentials(resource.platform, cred) {
                reasons.push(format!("{at}: credentials rejected for {}", resource.platform));
                bad = true;
            }
            if resource.state == ResourceState::Unreachable || !world.region_reachable(&resource.region) {
                reasons.push(format!("{at}: region {} unreachable", resource.region));
                bad = true;
            }
            if !bad {
                steps.push(PlanStep { resource, artifact });
            }
        }
        let mut slos = Vec::new();
        for (i, s) in req.slos.iter().enumerate() {
            let parsed = match s {
                SloSpec::Text(t) => {
                    parse_slo_with_interval(t, self.config.default_evaluation_interval_ms).map_err(|e| e.to_string())
                }
                SloSpec::Structured(slo) => Ok(slo.clone()),
            };
            match parsed.and_then(|slo| slo.validate().map(|_| slo).map_err(str::to_string)) {
                Ok(slo) => slos.push(slo),
                Err(e) => reasons.push(format!("slos[{i}]: {e}")),
            }
        }
        if req.alerting.enabled {
            let url = &req.alerting.webhook_url;
            if !(url.starts_with("http://") || url.starts_with("https://")) || url.len() < 10 {
                reasons.push(format!("alerting.webhookUrl {url:?} is not an http(s) URL"));
            }
        }
        if reasons.is_empty() {
            Ok(Plan { steps, slos, credentials, credentials_ref })
        } else {
            Err(reasons)
        }
    }

    /// Validates and commits the deployment plus its reservation, then
    /// provisions in the background. Returns once the commit is durable.
    pub fn create(self: &Arc<Self>, owner: &str, req: &DeploymentRequest) -> Result<Deployment, EngineError> {
        let created = now_ms();
        let plan = self.validate(owner, req).map_err(EngineError::ValidationFailed)?;
        let mut d = Deployment::new(DeploymentId::generate(), owner, created);
        d.apply(LifecycleEvent::ValidateOk, now_ms())?;
        d.assignments = plan
            .steps
            .iter()
            .map(|s| Assignment { resource_id: s.resource.id.clone(), artifact: s.artifact.name.clone(), handle: None })
            .collect();
        d.slos = plan.slos.clone();
        d.alerting = req.alerting.clone();
        d.credentials_ref = Some(plan.credentials_ref.clone());
        let ids: BTreeSet<ResourceId> = d.resource_ids().cloned().collect();
        let d = self.store.transact(|tx| {
            let mut d = d;
            tx.put_deployment(d.clone())?;
            tx.reserve(&d.id, &ids)?;
            d.apply(LifecycleEvent::ResourcesReserved, tx.now_ms())?;
            tx.put_deployment(d.clone())?;
            Ok::<_, EngineError>(d)
        })?;
        self.publish(&d);
        let me = self.clone();
        let id = d.id.clone();
        tokio::spawn(async move { me.provision(id, plan).await });
        Ok(d)
    }

    async fn provision(self: Arc<Self>, id: DeploymentId, plan: Plan) {
        let branches = plan.steps.iter().map(|step| {
            let me = self.clone();
            let id = id.clone();
            let cred = plan.credentials.get(&step.resource.platform).cloned().unwrap_or_default();
            async move {
                let driver = me.providers.driver(step.resource.platform)?;
                driver.pre_pull(&step.resource, &step.artifact).await?;
                let handle = driver.deploy(&step.resource, &step.artifact, &cred).await?;
                let rid = step.resource.id.clone();
                let saved = me.store.transact(|tx| {
                    let mut d = tx.deployment(&id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))?;
                    tx.mark_deployed(&id, &rid)?;
                    if let Some(a) = d.assignments.iter_mut().find(|a| a.resource_id == rid) {
                        a.handle = Some(handle.clone());
                    }
                    tx.put_deployment(d)
                });
                if let Err(e) = saved {
                    tracing::error!(deployment = %id, error = %e, "recording handle failed");
                }
                Ok::<_, ProviderError>(handle)
            }
        });
        let results = futures::future::join_all(branches).await;
        match first_failure(&results) {
            None => {
                let done = self.store.transact(|tx| {
                    let mut d = tx.deployment(&id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))?;
                    d.apply(LifecycleEvent::AllReady, tx.now_ms())?;
                    tx.put_deployment(d.clone())?;
                    Ok::<_, EngineError>(d)
                });
                match done {
                    Ok(d) => self.publish(&d),
                    Err(e) => tracing::error!(deployment = %id, error = %e, "cannot mark READY"),
                }
            }
            Some(cause) => {
                tracing::warn!(deployment = %id, %cause, "provisioning failed, rolling back");
                let provisioned: Vec<(Platform, HandleRecord)> = results
                    .into_iter()
                    .zip(&plan.steps)
                    .filter_map(|(r, s)| r.ok().map(|h| (s.resource.platform, h)))
                    .collect();
                self.terminate_handles(&provisioned).await;
                self.fail(&id, cause);
            }
        }
    }

    async fn terminate_handles(&self, handles: &[(Platform, HandleRecord)]) {
        let calls = handles.iter().map(|(p, h)| async move {
            if let Ok(driver) = self.providers.driver(*p) {
                match driver.terminate(&h.handle_id).await {
                    Ok(()) | Err(ProviderError::UnknownHandle(_)) => {}
                    Err(e) => tracing::warn!(handle = %h.handle_id, error = %e, "terminate failed"),
                }
            }
        });
        futures::future::join_all(calls).await;
    }

    /// Releases everything and moves the deployment to ERROR.
    fn fail(&self, id: &DeploymentId, cause: String) {
        let out = self.store.transact(|tx| {
            let mut d = tx.deployment(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))?;
            tx.release(id)?;
            for a in &mut d.assignments {
                a.handle = None;
            }
            d.error = Some(cause);
            d.apply(LifecycleEvent::Failure, tx.now_ms())?;
            tx.put_deployment(d.clone())?;
            Ok::<_, EngineError>(d)
        });
        match out {
            Ok(d) => self.publish(&d),
            Err(e) => tracing::error!(deployment = %id, error = %e, "cannot record failure"),
        }
    }

    fn platform_of(&self, id: &ResourceId) -> Option<Platform> {
        self.store.read(|t| t.resources.get(id).map(|r| r.platform))
    }

    fn handles_of(&self, d: &Deployment) -> Vec<(Platform, HandleRecord)> {
        d.assignments
            .iter()
            .filter_map(|a| Some((self.platform_of(&a.resource_id)?, a.handle.clone()?)))
            .collect()
    }

    /// Moves to TERMINATING and tears down in the background.
    pub fn terminate(self: &Arc<Self>, id: &DeploymentId) -> Result<Deployment, EngineError> {
        let d = self.store.transact(|tx| {
            let mut d = tx.deployment(id).cloned().ok_or_else(|| EngineError::NotFound(format!("deployment {id}")))?;
            d.apply(LifecycleEvent::Terminate, tx.now_ms())?;
            tx.put_deployment(d.clone())?;
            Ok::<_, EngineError>(d)
        })?;
        self.publish(&d);
        let me = self.clone();
        let handles = self.handles_of(&d);
        let id = id.clone();
        tokio::spawn(async move {
            me.terminate_handles(&handles).await;
            me.finish_termination(&id);
        });
        Ok(d)
    }

    fn finish_termination(&self, id: &DeploymentId) {
        let out = self.store.transact(|tx| {
            let mut d = tx.deployment(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))?;
            tx.release(id)?;
            for a in &mut d.assignments {
                if let Some(h) = &mut a.handle {
                    h.running = false;
                }
            }
            d.apply(LifecycleEvent::AllTerminated, tx.now_ms())?;
            tx.put_deployment(d.clone())?;
            Ok::<_, EngineError>(d)
        });
        match out {
            Ok(d) => self.publish(&d),
            Err(e) => tracing::error!(deployment = %id, error = %e, "cannot finish termination"),
        }
    }

    pub async fn startup(&self, id: &DeploymentId) -> Result<Deployment, EngineError> {
        self.toggle(id, LifecycleEvent::Start).await
    }

    pub async fn shutdown(&self, id: &DeploymentId) -> Result<Deployment, EngineError> {
        self.toggle(id, LifecycleEvent::Stop).await
    }

    async fn toggle(&self, id: &DeploymentId, event: LifecycleEvent) -> Result<Deployment, EngineError> {
        let started = Instant::now();
        let d = self.get(id)?;
        crate::domain::next_state(d.status, event)?;
        let calls = self.handles_of(&d).into_iter().map(|(p, h)| async move {
            let driver = self.providers.driver(p)?;
            match event {
                LifecycleEvent::Start => driver.startup(&h.handle_id).await,
                _ => driver.shutdown(&h.handle_id).await,
            }
        });
        let results = futures::future::join_all(calls).await;
        let mut updated = BTreeMap::new();
        for r in results {
            let h = r?;
            updated.insert(h.resource_id.clone(), h);
        }
        let d = self.store.transact(|tx| {
            let mut d = tx.deployment(id).cloned().ok_or_else(|| EngineError::NotFound(format!("deployment {id}")))?;
            d.apply(event, tx.now_ms())?;
            for a in &mut d.assignments {
                if let Some(h) = updated.remove(&a.resource_id) {
                    a.handle = Some(h);
                }
            }
            let took = started.elapsed().as_secs_f64() * 1000.0;
            match event {
                LifecycleEvent::Start => d.last_startup_ms = Some(took),
                _ => d.last_shutdown_ms = Some(took),
            }
            tx.put_deployment(d.clone())?;
            Ok::<_, EngineError>(d)
        })?;
        self.publish(&d);
        Ok(d)
    }

    pub fn get(&self, id: &DeploymentId) -> Result<Deployment, EngineError> {
        Ok(self.store.get_deployment(id)?)
    }

    /// Invokes the assignment running `artifact`, or the first one.
    pub async fn invoke(&self, id: &DeploymentId, artifact: Option<&str>, payload: Value) -> Result<InvokeOutcome, EngineError> {
        let (platform, handle) = self.store.read(|t| {
            let d = t.deployments.get(id).ok_or_else(|| EngineError::NotFound(format!("deployment {id}")))?;
            if d.status != DeploymentStatus::Ready {
                return Err(EngineError::NotReady(id.clone()));
            }
            let a = d
                .assignments
                .iter()
                .find(|a| artifact.is_none_or(|n| a.artifact == n))
                .ok_or_else(|| EngineError::NotFound(format!("artifact {} in {id}", artifact.unwrap_or(""))))?;
            let platform = t.resources.get(&a.resource_id).map(|r| r.platform);
            Ok((platform, a.handle.clone()))
        })?;
        let (Some(platform), Some(handle)) = (platform, handle) else {
            return Err(EngineError::NotReady(id.clone()));
        };
        let Invocation { response, rtt_ms, .. } =
            self.providers.driver(platform)?.invoke(&handle.handle_id, payload).await?;
        Ok(InvokeOutcome { response, rtt_ms, handle_id: handle.handle_id.to_string(), resource_id: handle.resource_id })
    }

    /// Moves the slowest assignment of a READY deployment to an AVAILABLE
    /// resource of the same platform in another region: reserve the new
    /// resource, terminate the old handle, release it, deploy on the new one.
    pub async fn reallocate(&self, id: &DeploymentId) -> Result<Reallocation, EngineError> {
        if !self.config.reallocation_enabled {
            return Err(EngineError::ReallocationDisabled);
        }
        let d = self.get(id)?;
        if d.status != DeploymentStatus::Ready {
            return Err(EngineError::NotReady(id.clone()));
        }
        let mut worst: Option<(f64, usize)> = None;
        for (i, a) in d.assignments.iter().enumerate() {
            let (Some(p), Some(h)) = (self.platform_of(&a.resource_id), &a.handle) else { continue };
            let latency = self.providers.driver(p)?.probe_latency(&h.handle_id).unwrap_or(f64::INFINITY);
            if worst.is_none_or(|(w, _)| latency > w) {
                worst = Some((latency, i));
            }
        }
        let (_, idx) = worst.ok_or(EngineError::NoCandidate)?;
        let old = d.assignments[idx].clone();
        let old_resource = self.store.get_resource(&old.resource_id)?;
        let artifact = self.artifact(&old.artifact).ok_or_else(|| EngineError::NotFound(old.artifact.clone()))?;

        let new_resource = self.store.transact(|tx| {
            let candidate = tx
                .resources()
                .filter(|r| {
                    r.platform == old_resource.platform
                        && r.region != old_resource.region
                        && r.state == ResourceState::Available
                        && self.providers.world().region_reachable(&r.region)
                })
                .map(|r| r.id.clone())
                .next()
                .ok_or(EngineError::NoCandidate)?;
            tx.reserve(id, &BTreeSet::from([candidate.clone()]))?;
            Ok::<_, EngineError>(tx.resource(&candidate).cloned().expect("reserved"))
        })?;

        let driver = self.providers.driver(old_resource.platform)?;
        if let Some(h) = &old.handle {
            match driver.terminate(&h.handle_id).await {
                Ok(()) | Err(ProviderError::UnknownHandle(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.store.transact(|tx| tx.release_one(id, &old.resource_id))?;

        let credentials = self.credentials_for(&d);
        let cred = credentials.get(&new_resource.platform).cloned().unwrap_or_default();
        let deployed = async {
            driver.pre_pull(&new_resource, &artifact).await?;
            driver.deploy(&new_resource, &artifact, &cred).await
        }
        .await;
        let handle = match deployed {
            Ok(h) => h,
            Err(e) => {
                self.fail(id, e.to_string());
                return Err(e.into());
            }
        };
        let assignment =
            Assignment { resource_id: new_resource.id.clone(), artifact: old.artifact.clone(), handle: Some(handle) };
        let d = self.store.transact(|tx| {
            let mut d = tx.deployment(id).cloned().ok_or_else(|| StoreError::NotFound(id.to_string()))?;
            tx.mark_deployed(id, &new_resource.id)?;
            d.assignments[idx] = assignment.clone();
            tx.put_deployment(d.clone())?;
            Ok::<_, EngineError>(d)
        })?;
        self.publish(&d);
        Ok(Reallocation { from: old.resource_id, to: new_resource.id, assignment })
    }

    /// Adds a resource at runtime. Ids are unique; new resources start AVAILABLE.
    pub fn register_resource(&self, mut resource: ResourceRecord) -> Result<ResourceRecord, EngineError> {
        resource.state = ResourceState::Available;
        resource.deployment_id = None;
        let mut reasons = Vec::new();
        if let Err(e) = resource.validate() {
            reasons.push(e);
        }
        if self.providers.world().probe(&resource.region).is_none() {
            reasons.push(format!("{}: unknown region {}", resource.id, resource.region));
        }
        if !reasons.is_empty() {
            return Err(EngineError::ValidationFailed(reasons));
        }
        self.store.transact(|tx| {
            if tx.resource(&resource.id).is_some() {
                return Err(EngineError::ResourceConflict(vec![resource.id.clone()]));
            }
            tx.put_resource(resource.clone())?;
            Ok(resource.clone())
        })
    }

    fn credentials_for(&self, d: &Deployment) -> Credentials {
        d.credentials_ref.as_deref().and_then(|r| self.store.get_credentials(r)).unwrap_or_default()
    }

    /// Brings driver state in line with the store after a restart: running
    /// deployments get their handles back, interrupted operations settle.
    pub fn recover(&self) -> Result<usize, EngineError> {
        let mut touched = 0;
        for d in self.store.list_deployments() {
            match d.status {
                DeploymentStatus::Ready | DeploymentStatus::Stopped => {
                    for a in &d.assignments {
                        let (Some(h), Ok(r), Some(art)) =
                            (&a.handle, self.store.get_resource(&a.resource_id), self.artifact(&a.artifact))
                        else {
                            continue;
                        };
                        self.providers.driver(r.platform)?.restore(h, &r, &art);
                        touched += 1;
                    }
                }
                DeploymentStatus::New | DeploymentStatus::Validating | DeploymentStatus::Deploying => {
                    self.fail(&d.id, "interrupted by restart".into());
                    touched += 1;
                }
                DeploymentStatus::Terminating => {
                    self.finish_termination(&d.id);
                    touched += 1;
                }
                DeploymentStatus::Terminated | DeploymentStatus::Error => {}
            }
        }
        Ok(touched)
    }
}

#[cfg(test)]
pub(crate) mod tests;
