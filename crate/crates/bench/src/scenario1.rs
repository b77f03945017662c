//! Deployment, termination and restart times per composition and concurrency.

use crate::report::ScenarioReport;
use crate::usage::Sampler;
use crate::{slot_id, BenchError, Harness, Result};
use futures::future::{join_all, try_join_all};
use rm_client::{Client, ClientError, DeploymentView};
use rm_core::domain::{DeploymentId, DeploymentStatus as S, ResourceId};
use rm_core::engine::{AssignmentRequest, DeploymentRequest};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    pub name: &'static str,
    /// (testbed node, artifact)
    pub parts: Vec<(&'static str, &'static str)>,
}

impl Composition {
    pub fn request(&self, slot: usize) -> DeploymentRequest {
        DeploymentRequest {
            assignments: self
                .parts
                .iter()
                .map(|(node, artifact)| AssignmentRequest {
                    resource_id: ResourceId::new(slot_id(node, slot)),
                    artifact: artifact.to_string(),
                })
                .collect(),
            ..Default::default()
        }
    }
}

pub fn compositions() -> Vec<Composition> {
    vec![
        Composition { name: "faasEdge", parts: vec![("r01", "function1")] },
        Composition { name: "serverless", parts: vec![("r12", "function1")] },
        Composition { name: "container", parts: vec![("r04", "service1")] },
        Composition { name: "vm", parts: vec![("r11", "function1")] },
        Composition {
            name: "all",
            parts: vec![
                ("r01", "function1"),
                ("r02", "function1"),
                ("r03", "function1"),
                ("r04", "service1"),
                ("r10", "service1"),
                ("r11", "function1"),
                ("r12", "function1"),
            ],
        },
    ]
}

#[derive(Debug, Clone)]
pub struct Options {
    pub compositions: Vec<Composition>,
    pub concurrency: Vec<usize>,
    pub repetitions: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options { compositions: compositions(), concurrency: vec![1, 2, 4], repetitions: 5 }
    }
}

fn wait_budget(h: &Harness) -> Duration {
    // Slowest profile plus generous jitter and queueing headroom.
    Duration::from_secs_f64((h.real_ms(1_000_000.0) / 1000.0).max(30.0))
}

async fn warm(client: &Client, n: usize) -> Result<()> {
    try_join_all((0..n).map(|_| client.health())).await?;
    Ok(())
}

async fn settle(client: &Client, ids: &[DeploymentId], want: S, budget: Duration) -> Result<Vec<DeploymentView>> {
    let want = [want, S::Error];
    let views = try_join_all(ids.iter().map(|id| client.wait_for(id, &want, budget))).await?;
    if let Some(v) = views.iter().find(|v| v.deployment.status == S::Error) {
        return Err(BenchError::Scenario(format!(
            "{} failed: {}",
            v.deployment.id,
            v.deployment.error.clone().unwrap_or_default()
        )));
    }
    Ok(views)
}

/// One repetition of `c` concurrent deployments of `comp`.
async fn repetition(h: &Harness, comp: &Composition, c: usize, report: &mut ScenarioReport) -> Result<()> {
    let client = &h.client;
    let budget = wait_budget(h);
    warm(client, c).await?;
    let sampler = Sampler::start(Duration::from_millis(100));

    let created = join_all((0..c).map(|slot| async move {
        let req = comp.request(slot);
        let t = Instant::now();
        let r = client.create_deployment(&req).await;
        (r, t.elapsed().as_secs_f64() * 1000.0)
    }))
    .await;
    let mut ids = Vec::new();
    for (r, ms) in created {
        ids.push(r?.id);
        report.push(comp.name, c, "responseTime", ms);
    }

    for v in settle(client, &ids, S::Ready, budget).await? {
        let ms = v.deployment_time_ms.ok_or_else(|| BenchError::Scenario("missing deployment time".into()))?;
        report.push(comp.name, c, "deploymentTime", ms as f64);
    }

    try_join_all(ids.iter().map(|id| client.shutdown(id))).await?;
    settle(client, &ids, S::Stopped, budget).await?;
    try_join_all(ids.iter().map(|id| client.startup(id))).await?;
    for v in settle(client, &ids, S::Ready, budget).await? {
        let d = &v.deployment;
        if let (Some(down), Some(up)) = (d.last_shutdown_ms, d.last_startup_ms) {
            report.push(comp.name, c, "shutdownTime", down);
            report.push(comp.name, c, "startupTime", up);
        }
        let pulls = d.assignments.iter().filter_map(|a| a.handle.as_ref()).map(|h| h.pull_count).max().unwrap_or(0);
        report.push(comp.name, c, "pullCount", pulls as f64);
    }

    try_join_all(ids.iter().map(|id| client.terminate(id))).await?;
    for v in settle(client, &ids, S::Terminated, budget).await? {
        let ms = v.termination_time_ms.ok_or_else(|| BenchError::Scenario("missing termination time".into()))?;
        report.push(comp.name, c, "terminationTime", ms as f64);
    }

    let usage = sampler.stop();
    report.push(comp.name, c, "cpuUtilization", usage.cpu);
    report.push(comp.name, c, "memoryMb", usage.memory_mb);
    Ok(())
}

pub async fn run(h: &Harness, opts: &Options) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new("scenario1", h.seed, h.time_scale);
    for comp in &opts.compositions {
        let mut rejected = 0;
        'levels: for &c in &opts.concurrency {
            for _ in 0..opts.repetitions {
                match repetition(h, comp, c, &mut report).await {
                    Ok(()) => {}
                    Err(BenchError::Client(ClientError::Api { status: 400, message, .. })) => {
                        rejected += 1;
                        report.note(format!("{} at concurrency {c} rejected: {message}", comp.name));
                        if rejected >= 2 {
                            report.note(format!("{} skipped", comp.name));
                            break 'levels;
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(report)
}
