//! Invocation round trips under load, through the manager and directly.

use crate::report::ScenarioReport;
use crate::{BenchError, Harness, Result};
use futures::future::{join_all, try_join_all};
use rm_client::ClientError;
use rm_core::domain::{DeploymentId, DeploymentStatus as S, ResourceId};
use rm_core::engine::{AssignmentRequest, DeploymentRequest};
use serde_json::json;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub name: &'static str,
    pub resource: &'static str,
    pub artifact: &'static str,
}

pub fn targets() -> Vec<Target> {
    vec![
        Target { name: "lambda", resource: "r12", artifact: "function1" },
        Target { name: "ec2", resource: "r11", artifact: "function1" },
        Target { name: "openfaas1", resource: "r01", artifact: "function1" },
        Target { name: "openfaas2", resource: "r02", artifact: "function1" },
    ]
}

#[derive(Debug, Clone)]
pub struct Options {
    pub targets: Vec<Target>,
    pub levels: Vec<usize>,
}

impl Default for Options {
    fn default() -> Self {
        Options { targets: targets(), levels: vec![1, 4, 12, 48, 96, 192, 384] }
    }
}

pub const MANAGER: &str = "rttManager";
pub const DIRECT: &str = "rttDirect";

/// Simulated round trip plus whatever wall time the HTTP path added on top of it.
pub fn observed_ms(rtt_model_ms: f64, wall_ms: f64, time_scale: f64) -> f64 {
    rtt_model_ms + (wall_ms - rtt_model_ms * time_scale).max(0.0)
}

enum Outcome {
    Rtt(f64),
    QueueTimeout,
}

fn classify(r: std::result::Result<f64, ClientError>, wall_ms: f64, scale: f64) -> Result<Outcome> {
    match r {
        Ok(rtt) => Ok(Outcome::Rtt(observed_ms(rtt, wall_ms, scale))),
        Err(ClientError::Api { status: 504, .. }) => Ok(Outcome::QueueTimeout),
        Err(e) => Err(e.into()),
    }
}

async fn batch(h: &Harness, id: &DeploymentId, handle: &str, level: usize, direct: bool) -> Result<Vec<Outcome>> {
    let client = &h.client;
    try_join_all((0..level).map(|_| client.health())).await?;
    let results = join_all((0..level).map(|i| async move {
        let payload = json!({ "i": i });
        let t = Instant::now();
        let r = if direct {
            client.direct_invoke(handle, payload).await.map(|d| d.rtt_ms)
        } else {
            client.invoke(id, None, payload).await.map(|o| o.rtt_ms)
        };
        (r, t.elapsed().as_secs_f64() * 1000.0)
    }))
    .await;
    results.into_iter().map(|(r, wall)| classify(r, wall, h.time_scale)).collect()
}

pub async fn run(h: &Harness, opts: &Options) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new("scenario3", h.seed, h.time_scale);
    let client = &h.client;
    let budget = Duration::from_secs_f64((h.real_ms(1_000_000.0) / 1000.0).max(30.0));
    for t in &opts.targets {
        let req = DeploymentRequest {
            assignments: vec![AssignmentRequest { resource_id: ResourceId::new(t.resource), artifact: t.artifact.into() }],
            ..Default::default()
        };
        let id = client.create_deployment(&req).await?.id;
        let view = client.wait_for(&id, &[S::Ready, S::Error], budget).await?;
        let handle = view
            .deployment
            .assignments
            .first()
            .and_then(|a| a.handle.as_ref())
            .map(|h| h.handle_id.to_string())
            .ok_or_else(|| BenchError::Scenario(format!("{} has no handle", t.name)))?;
        for &level in &opts.levels {
            for (direct, metric) in [(false, MANAGER), (true, DIRECT)] {
                let mut timeouts = 0;
                for o in batch(h, &id, &handle, level, direct).await? {
                    match o {
                        Outcome::Rtt(ms) => report.push(t.name, level, metric, ms),
                        Outcome::QueueTimeout => timeouts += 1,
                    }
                }
                if timeouts > 0 {
                    report.push(t.name, level, &format!("{metric}QueueTimeouts"), timeouts as f64);
                }
            }
        }
        client.terminate(&id).await?;
        client.wait_for(&id, &[S::Terminated, S::Error], budget).await?;
    }
    Ok(report)
}
