use super::{parse_exposition, Tsdb};
use crate::clock::now_ms;
use crate::domain::{Deployment, DeploymentId, DeploymentStatus, MetricSample, ResourceRecord};
use crate::sim::Providers;
use crate::store::Store;
use std::sync::Arc;
use std::time::Duration;
use tokio::task::JoinHandle;

/// Periodic collector feeding the TSDB from regions, resources and running
/// deployments.
pub struct Monitor {
    tsdb: Arc<Tsdb>,
    store: Arc<Store>,
    providers: Providers,
}

impl Monitor {
    pub fn new(tsdb: Arc<Tsdb>, store: Arc<Store>, providers: Providers) -> Self {
        Monitor { tsdb, store, providers }
    }

    pub fn tsdb(&self) -> &Arc<Tsdb> {
        &self.tsdb
    }

    /// One collection round. Returns the number of samples stored.
    pub fn collect_tick(&self) -> usize {
        let now = now_ms();
        let mut samples = Vec::new();
        for region in self.providers.world().regions() {
            let (latency, reachable) = self.providers.probe(&region.name).unwrap_or((f64::INFINITY, false));
            if reachable {
                samples.push(MetricSample::new("region.latency", now, latency).tag("region", &region.name));
            }
            samples.push(
                MetricSample::new("region.reachable", now, if reachable { 1.0 } else { 0.0 })
                    .tag("region", &region.name),
            );
        }
        let resources = self.store.list_resources();
        for r in &resources {
            samples.push(MetricSample::new("resource.cost.perHour", now, r.cost_per_hour).tag("resource", r.id.as_str()));
        }
        let mut stored = self.tsdb.push_samples(samples).accepted;
        stored += self.scrape(&resources, now);
        let running: Vec<DeploymentId> = self.store.read(|t| {
            t.deployments.values().filter(|d| d.status == DeploymentStatus::Ready).map(|d| d.id.clone()).collect()
        });
        for id in running {
            if let Ok(d) = self.store.get_deployment(&id) {
                stored += usize::from(self.probe_deployment(&d).is_some());
            }
        }
        stored
    }

    /// Polls the node endpoint of every registered resource.
    pub fn scrape_all(&self) -> usize {
        self.scrape(&self.store.list_resources(), now_ms())
    }

    fn scrape(&self, resources: &[ResourceRecord], now: i64) -> usize {
        let mut stored = 0;
        for r in resources {
            let Ok(driver) = self.providers.driver(r.platform) else { continue };
            let Ok(text) = driver.scrape(r) else { continue };
            match parse_exposition(&text, now) {
                Ok(samples) => stored += self.tsdb.push_samples(samples).accepted,
                Err(e) => tracing::warn!(resource = %r.id, error = %e, "bad scrape payload"),
            }
        }
        stored
    }

    /// Probes every handle of `d` and stores the slowest as the deployment's
    /// `latency`. Returns `None` when any handle cannot be probed.
    pub fn probe_deployment(&self, d: &Deployment) -> Option<MetricSample> {
        let mut worst: Option<f64> = None;
        for a in &d.assignments {
            let handle = a.handle.as_ref()?;
            let platform = self.store.read(|t| t.resources.get(&a.resource_id).map(|r| r.platform))?;
            let latency = self.providers.driver(platform).ok()?.probe_latency(&handle.handle_id).ok()?;
            worst = Some(worst.map_or(latency, |w| w.max(latency)));
        }
        let sample = MetricSample::new("latency", now_ms(), worst?).tag("deployment", d.id.as_str());
        self.tsdb.insert(sample.clone()).ok()?;
        Some(sample)
    }

    pub fn spawn(self: Arc<Self>, period: Duration) -> JoinHandle<()> {
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period.max(Duration::from_millis(1)));
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            loop {
                tick.tick().await;
                let me = self.clone();
                if let Err(e) = tokio::task::spawn_blocking(move || me.collect_tick()).await {
                    tracing::error!(error = %e, "collector round panicked");
                }
            }
        })
    }
}
