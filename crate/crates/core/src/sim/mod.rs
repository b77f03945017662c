//! Simulated provider platforms.

mod driver;
mod profile;
mod queue;
mod testbed;

pub use driver::{Invocation, ProviderDriver, SimDriver, SimWorld, DEFAULT_QUEUE_TIMEOUT_MS};
pub use profile::{ConcurrencyLimit, LatencySpec, ProfileOverride, ProviderProfile};
pub use queue::{Admission, ServerPool};
pub use testbed::{RegionSpec, Testbed, TestbedError};

use crate::domain::{HandleId, Platform, ResourceId};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("credentials rejected by {0}")]
    InvalidCredentials(Platform),
    #[error("artifact {artifact} cannot run on {platform}")]
    IncompatibleArtifact { artifact: String, platform: Platform },
    #[error("resource {0} unreachable")]
    Unreachable(ResourceId),
    #[error("unknown handle {0}")]
    UnknownHandle(HandleId),
    #[error("handle {0} is not running")]
    NotRunning(HandleId),
    #[error("invocation on {0} timed out in queue")]
    QueueTimeout(HandleId),
    #[error("deploy onto {0} failed")]
    DeployFailed(ResourceId),
    #[error("no driver for {0}")]
    NoDriver(Platform),
}

/// Driver registry, one per platform.
#[derive(Clone)]
pub struct Providers {
    world: Arc<SimWorld>,
    drivers: BTreeMap<Platform, Arc<dyn ProviderDriver>>,
}

impl Providers {
    pub fn simulated(testbed: Testbed, time_scale: f64) -> Self {
        let world = SimWorld::new(testbed, time_scale);
        let drivers = Platform::ALL
            .into_iter()
            .map(|p| {
                let d: Arc<dyn ProviderDriver> =
                    Arc::new(SimDriver::new(world.testbed().profile(p), world.clone()));
                (p, d)
            })
            .collect();
        Providers { world, drivers }
    }

    pub fn with_driver(mut self, driver: Arc<dyn ProviderDriver>) -> Self {
        self.drivers.insert(driver.platform(), driver);
        self
    }

    pub fn world(&self) -> &Arc<SimWorld> {
        &self.world
    }

    pub fn driver(&self, platform: Platform) -> Result<Arc<dyn ProviderDriver>, ProviderError> {
        self.drivers.get(&platform).cloned().ok_or(ProviderError::NoDriver(platform))
    }

    /// Searches every driver for a handle.
    pub fn find_handle(&self, handle: &HandleId) -> Option<Arc<dyn ProviderDriver>> {
        self.drivers.values().find(|d| d.handle(handle).is_some()).cloned()
    }

    /// Base latency and reachability of a region; `None` if unknown.
    pub fn probe(&self, region: &str) -> Option<(f64, bool)> {
        self.world.probe(region)
    }
}
