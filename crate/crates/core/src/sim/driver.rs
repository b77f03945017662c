use super::profile::{ConcurrencyLimit, LatencySpec, ProviderProfile};
use super::queue::ServerPool;
use super::testbed::{RegionSpec, Testbed};
use super::ProviderError;
use crate::domain::{Artifact, HandleId, HandleRecord, Platform, ResourceId, ResourceRecord, ResourceState};
use async_trait::async_trait;
use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Default cap on virtual queueing before an invocation is refused.
pub const DEFAULT_QUEUE_TIMEOUT_MS: f64 = 600_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub response: Value,
    /// Model round trip in provider milliseconds (not scaled).
    pub rtt_ms: f64,
    pub network_ms: f64,
    pub queue_ms: f64,
    pub execution_ms: f64,
}

#[async_trait]
pub trait ProviderDriver: Send + Sync {
    fn platform(&self) -> Platform;

    /// Caches the artifact image on the resource. Returns false on a cache hit.
    async fn pre_pull(&self, resource: &ResourceRecord, artifact: &Artifact) -> Result<bool, ProviderError>;

    async fn deploy(
        &self,
        resource: &ResourceRecord,
        artifact: &Artifact,
        credentials: &str,
    ) -> Result<HandleRecord, ProviderError>;

    async fn terminate(&self, handle: &HandleId) -> Result<(), ProviderError>;

    async fn invoke(&self, handle: &HandleId, payload: Value) -> Result<Invocation, ProviderError>;

    async fn startup(&self, handle: &HandleId) -> Result<HandleRecord, ProviderError>;

    async fn shutdown(&self, handle: &HandleId) -> Result<HandleRecord, ProviderError>;

    fn handle(&self, handle: &HandleId) -> Option<HandleRecord>;

    /// Re-registers a handle persisted before a restart.
    fn restore(&self, handle: &HandleRecord, resource: &ResourceRecord, artifact: &Artifact);

    /// Latency an invocation issued now would see, without running it.
    fn probe_latency(&self, handle: &HandleId) -> Result<f64, ProviderError>;

    /// Node metrics in exposition format.
    fn scrape(&self, resource: &ResourceRecord) -> Result<String, ProviderError>;
}

/// State shared by all simulated drivers: clock, regions, faults, seeds.
pub struct SimWorld {
    testbed: Testbed,
    time_scale: f64,
    epoch: Instant,
    regions: RwLock<BTreeMap<String, RegionSpec>>,
    extra_latency: RwLock<HashMap<ResourceId, f64>>,
    fail_deploys: Mutex<HashMap<ResourceId, usize>>,
    fail_platform_deploys: Mutex<HashMap<Platform, usize>>,
    counters: Mutex<HashMap<(ResourceId, &'static str), u64>>,
    queue_timeout_ms: RwLock<f64>,
}

impl SimWorld {
    pub fn new(testbed: Testbed, time_scale: f64) -> Arc<Self> {
        let regions = testbed.regions.iter().map(|r| (r.name.clone(), r.clone())).collect();
        Arc::new(SimWorld {
            testbed,
            time_scale: time_scale.max(0.0),
            epoch: Instant::now(),
            regions: RwLock::new(regions),
            extra_latency: RwLock::new(HashMap::new()),
            fail_deploys: Mutex::new(HashMap::new()),
            fail_platform_deploys: Mutex::new(HashMap::new()),
            counters: Mutex::new(HashMap::new()),
            queue_timeout_ms: RwLock::new(DEFAULT_QUEUE_TIMEOUT_MS),
        })
    }

    pub fn testbed(&self) -> &Testbed {
        &self.testbed
    }

    pub fn time_scale(&self) -> f64 {
        self.time_scale
    }

    /// Real milliseconds a model duration takes.
    pub fn scaled(&self, model_ms: f64) -> f64 {
        model_ms * self.time_scale
    }

    pub async fn sleep_model(&self, model_ms: f64) {
        let real = self.scaled(model_ms);
        if real > 0.0 {
            tokio::time::sleep(Duration::from_secs_f64(real / 1000.0)).await;
        }
    }

    /// Provider-side clock in model milliseconds.
    pub fn virtual_now_ms(&self) -> f64 {
        let real = self.epoch.elapsed().as_secs_f64() * 1000.0;
        if self.time_scale > 0.0 {
            real / self.time_scale
        } else {
            real
        }
    }

    /// Independent stream per (seed, resource, operation, call number).
    pub fn rng(&self, resource: &ResourceId, op: &'static str) -> ChaCha8Rng {
        let n = {
            let mut c = self.counters.lock();
            let e = c.entry((resource.clone(), op)).or_insert(0);
            *e += 1;
            *e
        };
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(&self.testbed.seed.to_le_bytes());
        feed(resource.as_str().as_bytes());
        feed(&[0]);
        feed(op.as_bytes());
        feed(&n.to_le_bytes());
        ChaCha8Rng::seed_from_u64(h)
    }

    pub fn probe(&self, region: &str) -> Option<(f64, bool)> {
        self.regions.read().get(region).map(|r| {
            if r.reachable {
                (r.base_latency_ms, true)
            } else {
                (f64::INFINITY, false)
            }
        })
    }

    pub fn regions(&self) -> Vec<RegionSpec> {
        self.regions.read().values().cloned().collect()
    }

    pub fn set_region_reachable(&self, region: &str, reachable: bool) -> bool {
        match self.regions.write().get_mut(region) {
            Some(r) => {
                r.reachable = reachable;
                true
            }
            None => false,
        }
    }

    pub fn region_reachable(&self, region: &str) -> bool {
        self.regions.read().get(region).is_some_and(|r| r.reachable)
    }

    pub fn set_extra_latency(&self, resource: &ResourceId, ms: f64) {
        if ms > 0.0 {
            self.extra_latency.write().insert(resource.clone(), ms);
        } else {
            self.extra_latency.write().remove(resource);
        }
    }

    pub fn extra_latency(&self, resource: &ResourceId) -> f64 {
        self.extra_latency.read().get(resource).copied().unwrap_or(0.0)
    }

    /// The next `n` deploys onto `resource` fail after their latency.
    pub fn fail_next_deploys(&self, resource: &ResourceId, n: usize) {
        self.fail_deploys.lock().insert(resource.clone(), n);
    }

    pub fn fail_next_platform_deploys(&self, platform: Platform, n: usize) {
        self.fail_platform_deploys.lock().insert(platform, n);
    }

    fn take_failure(&self, resource: &ResourceRecord) -> bool {
        let take = |n: Option<&mut usize>| match n {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        };
        take(self.fail_deploys.lock().get_mut(&resource.id))
            || take(self.fail_platform_deploys.lock().get_mut(&resource.platform))
    }

    pub fn set_queue_timeout_ms(&self, ms: f64) {
        *self.queue_timeout_ms.write() = ms;
    }

    pub fn check_credentials(&self, platform: Platform, credentials: &str) -> bool {
        if credentials.is_empty() {
            return false;
        }
        self.testbed.credentials.get(&platform).is_none_or(|p| credentials.starts_with(p.as_str()))
    }
}

struct SimHandle {
    record: HandleRecord,
    resource: ResourceRecord,
    artifact: Artifact,
}

/// One simulated provider platform.
pub struct SimDriver {
    profile: ProviderProfile,
    world: Arc<SimWorld>,
    handles: Mutex<HashMap<HandleId, SimHandle>>,
    images: Mutex<HashMap<(ResourceId, String), u32>>,
    pools: Mutex<HashMap<ResourceId, ServerPool>>,
    deploying: AtomicUsize,
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl SimDriver {
    pub fn new(profile: ProviderProfile, world: Arc<SimWorld>) -> Self {
        SimDriver {
            profile,
            world,
            handles: Mutex::new(HashMap::new()),
            images: Mutex::new(HashMap::new()),
            pools: Mutex::new(HashMap::new()),
            deploying: AtomicUsize::new(0),
        }
    }

    pub fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn pulls(&self, resource: &ResourceId, image: &str) -> u32 {
        self.images.lock().get(&(resource.clone(), image.to_string())).copied().unwrap_or(0)
    }

    fn snapshot(&self, h: &SimHandle) -> HandleRecord {
        let mut r = h.record.clone();
        r.pull_count = self.pulls(&h.resource.id, &h.artifact.image_ref);
        r
    }

    fn check_reachable(&self, resource: &ResourceRecord) -> Result<(), ProviderError> {
        if resource.state == ResourceState::Unreachable || !self.world.region_reachable(&resource.region) {
            return Err(ProviderError::Unreachable(resource.id.clone()));
        }
        Ok(())
    }

    fn sample(&self, spec: &LatencySpec, resource: &ResourceId, op: &'static str) -> f64 {
        spec.sample(&mut self.world.rng(resource, op))
    }

    async fn pull_if_missing(&self, resource: &ResourceRecord, artifact: &Artifact) -> bool {
        if self.pulls(&resource.id, &artifact.image_ref) > 0 {
            return false;
        }
        self.world.sleep_model(artifact.behavior.image_pull_ms as f64).await;
        *self.images.lock().entry((resource.id.clone(), artifact.image_ref.clone())).or_insert(0) += 1;
        true
    }

    fn new_pool(&self, resource: &ResourceRecord) -> ServerPool {
        match self.profile.concurrency_limit {
            ConcurrencyLimit::CoresBound => ServerPool::bounded(resource.cpu_cores as usize),
            ConcurrencyLimit::Unbounded => ServerPool::unbounded(),
        }
    }

    fn with_handle<T>(&self, id: &HandleId, f: impl FnOnce(&mut SimHandle) -> T) -> Result<T, ProviderError> {
        let mut handles = self.handles.lock();
        let h = handles.get_mut(id).ok_or_else(|| ProviderError::UnknownHandle(id.clone()))?;
        Ok(f(h))
    }

    async fn toggle(&self, id: &HandleId, running: bool) -> Result<HandleRecord, ProviderError> {
        let (resource, artifact, already) =
            self.with_handle(id, |h| (h.resource.clone(), h.artifact.clone(), h.record.running == running))?;
        if already {
            return self.with_handle(id, |h| self.snapshot(h));
        }
        if running {
            self.check_reachable(&resource)?;
            self.pull_if_missing(&resource, &artifact).await;
        }
        let op = if running { "startup" } else { "shutdown" };
        let latency = self.sample(&self.profile.start_stop_latency_ms, &resource.id, op);
        self.world.sleep_model(latency).await;
        self.with_handle(id, |h| {
            h.record.running = running;
            self.snapshot(h)
        })
    }
}

#[async_trait]
impl ProviderDriver for SimDriver {
    fn platform(&self) -> Platform {
        self.profile.platform
    }

    async fn pre_pull(&self, resource: &ResourceRecord, artifact: &Artifact) -> Result<bool, ProviderError> {
        self.check_reachable(resource)?;
        Ok(self.pull_if_missing(resource, artifact).await)
    }

    async fn deploy(
        &self,
        resource: &ResourceRecord,
        artifact: &Artifact,
        credentials: &str,
    ) -> Result<HandleRecord, ProviderError> {
        if resource.platform != self.profile.platform || !artifact.kind.runs_on(resource.platform) {
            return Err(ProviderError::IncompatibleArtifact {
                artifact: artifact.name.clone(),
                platform: resource.platform,
            });
        }
        if !self.world.check_credentials(resource.platform, credentials) {
            return Err(ProviderError::InvalidCredentials(resource.platform));
        }
        self.check_reachable(resource)?;

        let in_flight = self.deploying.fetch_add(1, Ordering::SeqCst) + 1;
        let _guard = InFlight(&self.deploying);
        let spec = LatencySpec::new(
            self.profile.deploy_latency_ms.mean_ms
                + self.profile.per_deployment_penalty_ms * (in_flight - 1) as f64,
            self.profile.deploy_latency_ms.jitter_fraction,
        );
        let mut rng = self.world.rng(&resource.id, "deploy");
        let latency = spec.sample(&mut rng);
        let fails = self.world.take_failure(resource) || rng.random::<f64>() < self.profile.failure_rate;

        self.pull_if_missing(resource, artifact).await;
        self.world.sleep_model(latency).await;
        if fails {
            return Err(ProviderError::DeployFailed(resource.id.clone()));
        }

        let id = HandleId::new(format!("{}-{}", resource.id, uuid::Uuid::new_v4().simple()));
        let h = SimHandle {
            record: HandleRecord {
                handle_id: id.clone(),
                resource_id: resource.id.clone(),
                artifact: artifact.name.clone(),
                pull_count: 0,
                running: true,
            },
            resource: resource.clone(),
            artifact: artifact.clone(),
        };
        let out = self.snapshot(&h);
        self.handles.lock().insert(id, h);
        self.pools.lock().entry(resource.id.clone()).or_insert_with(|| self.new_pool(resource));
        Ok(out)
    }

    async fn terminate(&self, handle: &HandleId) -> Result<(), ProviderError> {
        let h = self.handles.lock().remove(handle).ok_or_else(|| ProviderError::UnknownHandle(handle.clone()))?;
        let latency = self.sample(&self.profile.terminate_latency_ms, &h.resource.id, "terminate");
        self.world.sleep_model(latency).await;
        Ok(())
    }

    async fn invoke(&self, handle: &HandleId, payload: Value) -> Result<Invocation, ProviderError> {
        let (resource, artifact, running) =
            self.with_handle(handle, |h| (h.resource.clone(), h.artifact.clone(), h.record.running))?;
        if !running {
            return Err(ProviderError::NotRunning(handle.clone()));
        }
        self.check_reachable(&resource)?;
        let network = self.sample(&self.profile.invoke_network_ms, &resource.id, "invoke");
        let execution = artifact.behavior.sleep_ms as f64;
        let max_wait = *self.world.queue_timeout_ms.read();
        let admission = {
            let mut pools = self.pools.lock();
            let pool = pools.entry(resource.id.clone()).or_insert_with(|| self.new_pool(&resource));
            let arrival = self.world.virtual_now_ms();
            pool.admit(arrival, execution, max_wait).map(|a| a.wait_ms(arrival))
        };
        let queue = admission.ok_or_else(|| ProviderError::QueueTimeout(handle.clone()))?;
        let rtt = network + queue + execution + self.world.extra_latency(&resource.id);
        self.world.sleep_model(rtt).await;
        Ok(Invocation {
            response: json!({ "artifact": artifact.name, "echo": payload, "sleptMs": artifact.behavior.sleep_ms }),
            rtt_ms: rtt,
            network_ms: network,
            queue_ms: queue,
            execution_ms: execution,
        })
    }

    async fn startup(&self, handle: &HandleId) -> Result<HandleRecord, ProviderError> {
        self.toggle(handle, true).await
    }

    async fn shutdown(&self, handle: &HandleId) -> Result<HandleRecord, ProviderError> {
        self.toggle(handle, false).await
    }

    fn handle(&self, handle: &HandleId) -> Option<HandleRecord> {
        self.handles.lock().get(handle).map(|h| self.snapshot(h))
    }

    fn restore(&self, handle: &HandleRecord, resource: &ResourceRecord, artifact: &Artifact) {
        {
            let mut images = self.images.lock();
            let e = images.entry((resource.id.clone(), artifact.image_ref.clone())).or_insert(0);
            *e = (*e).max(handle.pull_count);
        }
        self.pools.lock().entry(resource.id.clone()).or_insert_with(|| self.new_pool(resource));
        self.handles.lock().insert(
            handle.handle_id.clone(),
            SimHandle { record: handle.clone(), resource: resource.clone(), artifact: artifact.clone() },
        );
    }

    fn probe_latency(&self, handle: &HandleId) -> Result<f64, ProviderError> {
        let (resource, artifact, running) =
            self.with_handle(handle, |h| (h.resource.clone(), h.artifact.clone(), h.record.running))?;
        if !running {
            return Err(ProviderError::NotRunning(handle.clone()));
        }
        self.check_reachable(&resource)?;
        let network = self.sample(&self.profile.invoke_network_ms, &resource.id, "probe");
        let wait = self
            .pools
            .lock()
            .get(&resource.id)
            .map_or(0.0, |p| p.expected_wait(self.world.virtual_now_ms()));
        Ok(network + wait + artifact.behavior.sleep_ms as f64 + self.world.extra_latency(&resource.id))
    }

    fn scrape(&self, resource: &ResourceRecord) -> Result<String, ProviderError> {
        self.check_reachable(resource)?;
        let now = self.world.virtual_now_ms();
        let busy = self.pools.lock().get(&resource.id).map_or(0, |p| p.busy(now));
        let running = self
            .handles
            .lock()
            .values()
            .filter(|h| h.resource.id == resource.id && h.record.running)
            .count();
        let cpu = (busy as f64 / resource.cpu_cores as f64).min(1.0);
        let mem = (resource.memory_gb * (0.1 + 0.15 * running as f64)).min(resource.memory_gb);
        Ok(format!(
            "node.cpu.utilization{{resource=\"{id}\"}} {cpu}\nnode.memory.usedGb{{resource=\"{id}\"}} {mem}\n",
            id = resource.id
        ))
    }
}
