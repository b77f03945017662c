use crate::domain::Platform;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LatencySpec {
    pub mean_ms: f64,
    #[serde(default = "default_jitter")]
    pub jitter_fraction: f64,
}

fn default_jitter() -> f64 {
    0.05
}

impl LatencySpec {
    pub const fn new(mean_ms: f64, jitter_fraction: f64) -> Self {
        LatencySpec { mean_ms, jitter_fraction }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mean_ms >= 0.0) || !self.mean_ms.is_finite() {
            return Err(format!("mean {} must be >= 0", self.mean_ms));
        }
        if !(0.0..=0.5).contains(&self.jitter_fraction) {
            return Err(format!("jitterFraction {} outside [0, 0.5]", self.jitter_fraction));
        }
        Ok(())
    }

    /// Normal(mean, jitter*mean) truncated to +-2 sigma and clipped at zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let sd = self.jitter_fraction * self.mean_ms;
        if sd <= 0.0 {
            return self.mean_ms.max(0.0);
        }
        let normal = Normal::new(self.mean_ms, sd).expect("finite sd");
        loop {
            let x = normal.sample(rng);
            if (x - self.mean_ms).abs() <= 2.0 * sd {
                return x.max(0.0);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConcurrencyLimit {
    /// At most `cpuCores` invocations execute in parallel, the rest queue FIFO.
    CoresBound,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProviderProfile {
    pub platform: Platform,
    pub deploy_latency_ms: LatencySpec,
    pub terminate_latency_ms: LatencySpec,
    pub invoke_network_ms: LatencySpec,
    /// Start or stop of an already provisioned deployment.
    pub start_stop_latency_ms: LatencySpec,
    pub concurrency_limit: ConcurrencyLimit,
    /// Added to the deploy mean per extra deployment in flight on this driver.
    pub per_deployment_penalty_ms: f64,
    /// Probability that a deploy fails after its latency elapses.
    #[serde(default)]
    pub failure_rate: f64,
}

impl ProviderProfile {
    /// Means before time scaling. Only the VM figures are measured values;
    /// the rest keep the edge < container < serverless < VM ordering.
    pub fn default_for(platform: Platform) -> Self {
        let (deploy, terminate, network, limit) = match platform {
            Platform::FaasEdge => (4_000.0, 1_000.0, 8.0, ConcurrencyLimit::CoresBound),
            Platform::Container => (8_000.0, 2_000.0, 8.0, ConcurrencyLimit::CoresBound),
            Platform::Serverless => (35_000.0, 12_000.0, 45.0, ConcurrencyLimit::Unbounded),
            Platform::Vm => (200_000.0, 65_000.0, 45.0, ConcurrencyLimit::CoresBound),
        };
        ProviderProfile {
            platform,
            deploy_latency_ms: LatencySpec::new(deploy, 0.05),
            terminate_latency_ms: LatencySpec::new(terminate, 0.05),
            invoke_network_ms: LatencySpec::new(network, 0.1),
            start_stop_latency_ms: LatencySpec::new(deploy * 0.05, 0.05),
            concurrency_limit: limit,
            per_deployment_penalty_ms: deploy * 0.1,
            failure_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, spec) in [
            ("deployLatencyMs", &self.deploy_latency_ms),
            ("terminateLatencyMs", &self.terminate_latency_ms),
            ("invokeNetworkMs", &self.invoke_network_ms),
            ("startStopLatencyMs", &self.start_stop_latency_ms),
        ] {
            spec.validate().map_err(|e| format!("{}.{name}: {e}", self.platform))?;
        }
        if !(self.per_deployment_penalty_ms >= 0.0) {
            return Err(format!("{}.perDeploymentPenaltyMs must be >= 0", self.platform));
        }
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(format!("{}.failureRate must be in [0, 1]", self.platform));
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &ProfileOverride) {
        if let Some(v) = o.deploy_latency_ms {
            self.deploy_latency_ms = v;
        }
        if let Some(v) = o.terminate_latency_ms {
            self.terminate_latency_ms = v;
        }
        if let Some(v) = o.invoke_network_ms {
            self.invoke_network_ms = v;
        }
        if let Some(v) = o.start_stop_latency_ms {
            self.start_stop_latency_ms = v;
        }
        if let Some(v) = o.concurrency_limit {
            self.concurrency_limit = v;
        }
        if let Some(v) = o.per_deployment_penalty_ms {
            self.per_deployment_penalty_ms = v;
        }
        if let Some(v) = o.failure_rate {
            self.failure_rate = v;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProfileOverride {
    pub deploy_latency_ms: Option<LatencySpec>,
    pub terminate_latency_ms: Option<LatencySpec>,
    pub invoke_network_ms: Option<LatencySpec>,
    pub start_stop_latency_ms: Option<LatencySpec>,
    pub concurrency_limit: Option<ConcurrencyLimit>,
    pub per_deployment_penalty_ms: Option<f64>,
    pub failure_rate: Option<f64>,
}
