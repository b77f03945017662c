//! Reaction time from a latency fault to the webhook alert.

use crate::receiver::Receiver;
use crate::report::ScenarioReport;
use crate::{slot_id, BenchError, Harness, Result};
use futures::future::try_join_all;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rm_core::domain::{AlertingSettings, DeploymentId, DeploymentStatus as S, ResourceId};
use rm_core::engine::{AssignmentRequest, DeploymentRequest, SloSpec};
use std::collections::BTreeSet;
use std::time::{Duration, Instant};

pub const SLO: &str = "latency < 10s";

#[derive(Debug, Clone)]
pub struct Options {
    pub deployment_counts: Vec<usize>,
    pub injections: usize,
    /// Evaluation periods between consecutive injections.
    pub spacing_periods: u32,
    /// Added latency in model ms; enough to break the objective.
    pub extra_latency_ms: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options { deployment_counts: vec![1, 2, 3, 4], injections: 50, spacing_periods: 4, extra_latency_ms: 12_000.0 }
    }
}

fn request(slot: usize, webhook: &str) -> DeploymentRequest {
    DeploymentRequest {
        assignments: vec![AssignmentRequest {
            resource_id: ResourceId::new(slot_id("r01", slot)),
            artifact: "function2".into(),
        }],
        slos: vec![SloSpec::Text(SLO.into())],
        alerting: AlertingSettings { enabled: true, webhook_url: webhook.into() },
        ..Default::default()
    }
}

/// Offsets into one period, one per stratum of `[0, period)`, in seeded random order.
pub fn stratified_offsets(n: usize, period: Duration, rng: &mut ChaCha8Rng) -> Vec<Duration> {
    let mut out: Vec<Duration> = (0..n).map(|k| period.mul_f64((k as f64 + rng.random::<f64>()) / n as f64)).collect();
    out.shuffle(rng);
    out
}

/// Offsets for injections `0..total`, where injection `k` targets deployment
/// `k % deployments`; each deployment's own injections are stratified.
pub fn assign_offsets(total: usize, deployments: usize, period: Duration, rng: &mut ChaCha8Rng) -> Vec<Duration> {
    let mut out = vec![Duration::ZERO; total];
    for j in 0..deployments {
        let slots: Vec<usize> = (j..total).step_by(deployments).collect();
        for (k, off) in slots.iter().zip(stratified_offsets(slots.len(), period, rng)) {
            out[*k] = off;
        }
    }
    out
}

pub async fn run(h: &Harness, opts: &Options) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new("scenario2", h.seed, h.time_scale);
    let receiver = Receiver::start().await?;
    for &n in &opts.deployment_counts {
        run_level(h, opts, n, &receiver, &mut report).await?;
    }
    Ok(report)
}

async fn run_level(h: &Harness, opts: &Options, n: usize, receiver: &Receiver, report: &mut ScenarioReport) -> Result<()> {
    let client = &h.client;
    let period = Duration::from_secs_f64(h.real_ms(h.evaluation_interval_ms as f64) / 1000.0);
    let budget = Duration::from_secs_f64((h.real_ms(100_000.0) / 1000.0).max(10.0));
    let composition = format!("N={n}");

    let requests: Vec<DeploymentRequest> = (0..n).map(|slot| request(slot, receiver.url())).collect();
    let created = try_join_all(requests.iter().map(|r| client.create_deployment(r))).await?;
    let ids: Vec<DeploymentId> = created.into_iter().map(|c| c.id).collect();
    for v in try_join_all(ids.iter().map(|id| client.wait_for(id, &[S::Ready, S::Error], budget))).await? {
        if v.deployment.status != S::Ready {
            return Err(BenchError::Scenario(format!("{} did not become READY", v.deployment.id)));
        }
    }
    // Let every objective settle into its evaluation cadence.
    tokio::time::sleep(period * 2).await;

    let mut rng = ChaCha8Rng::seed_from_u64(h.seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let offsets = assign_offsets(opts.injections, n, period, &mut rng);
    let t0 = tokio::time::Instant::now() + period;
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut episodes = Vec::new();
    for (k, u) in offsets.iter().enumerate() {
        tokio::time::sleep_until(t0 + period * (k as u32 * opts.spacing_periods) + *u).await;
        let id = &ids[k % n];
        let mark = receiver.count();
        let before = Instant::now();
        client.inject(id, opts.extra_latency_ms).await?;
        let got = receiver
            .wait_for(mark, period * 3, |r| {
                r.alert.as_ref().is_some_and(|a| &a.deployment_id == id && !seen.contains(&a.episode_id))
            })
            .await;
        client.clear(id).await?;
        let Some(got) = got else {
            return Err(BenchError::Scenario(format!("no alert for {id} within three evaluation periods (injection {k})")));
        };
        let episode = got.alert.expect("matched on alert").episode_id;
        let model_ms = got.at.duration_since(before).as_secs_f64() * 1000.0 / h.time_scale;
        report.push(&composition, n, "reactionTime", model_ms);
        seen.insert(episode.clone());
        episodes.push(episode);
    }

    let server_view = client.episodes().await?;
    for ep in &episodes {
        if let Some(r) = server_view.iter().find(|e| &e.episode.episode_id == ep).and_then(|e| e.reaction_time_ms) {
            report.push(&composition, n, "serverReactionTime", r);
        }
    }

    try_join_all(ids.iter().map(|id| client.terminate(id))).await?;
    try_join_all(ids.iter().map(|id| client.wait_for(id, &[S::Terminated, S::Error], budget))).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_cover_every_stratum_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let period = Duration::from_millis(50);
        let offs = stratified_offsets(10, period, &mut rng);
        let mut strata: Vec<usize> = offs.iter().map(|o| (o.as_secs_f64() / 0.005) as usize).collect();
        strata.sort();
        assert_eq!(strata, (0..10).collect::<Vec<_>>());
        let again = stratified_offsets(10, period, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(offs, again);
    }

    #[test]
    fn each_deployment_gets_its_own_strata() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let period = Duration::from_millis(40);
        let offs = assign_offsets(12, 3, period, &mut rng);
        for j in 0..3 {
            let mut strata: Vec<usize> =
                (j..12).step_by(3).map(|k| (offs[k].as_secs_f64() / 0.010) as usize).collect();
            strata.sort();
            assert_eq!(strata, vec![0, 1, 2, 3]);
        }
    }
}
