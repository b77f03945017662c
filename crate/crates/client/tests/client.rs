use rm_client::{Client, ClientError};
use rm_core::domain::{DeploymentStatus as S, Platform, ResourceId};
use rm_core::engine::{AssignmentRequest, DeploymentRequest};
use rm_core::tsdb::{Aggregator, Query};
use rm_server::{GlobalConfig, Running, UserConfig};
use serde_json::json;
use std::collections::BTreeMap;
use std::time::Duration;

async fn server() -> (Running, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config = GlobalConfig {
        listen_address: "127.0.0.1:0".into(),
        store_path: dir.path().to_path_buf(),
        time_scale: 0.001,
        auth_secret: "client-tests".into(),
        testbed_slots: 2,
        users: vec![UserConfig {
            name: "carol".into(),
            password: "pw".into(),
            credentials: BTreeMap::from([
                (Platform::FaasEdge, "ofs-carol".into()),
                (Platform::Container, "k8s-carol".into()),
                (Platform::Serverless, "aws-carol".into()),
                (Platform::Vm, "aws-carol".into()),
            ]),
        }],
        ..Default::default()
    };
    (rm_server::boot(config).await.unwrap(), dir)
}

fn single(resource: &str, artifact: &str) -> DeploymentRequest {
    DeploymentRequest {
        assignments: vec![AssignmentRequest { resource_id: ResourceId::from(resource), artifact: artifact.into() }],
        ..Default::default()
    }
}

#[tokio::test]
async fn login_and_errors() {
    let (srv, _dir) = server().await;
    let mut c = Client::new(&srv.url()).unwrap();
    assert_eq!(c.health().await.unwrap()["status"], "up");
    let err = c.resources().await.unwrap_err();
    assert_eq!(err.status(), Some(401));
    let err = c.login("carol", "nope").await.unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 401, .. }), "{err}");
    c.login("carol", "pw").await.unwrap();
    assert!(c.token().is_some());
    assert_eq!(c.resources().await.unwrap().len(), 26);
    let err = c.resource("r99").await.unwrap_err();
    assert_eq!(err.status(), Some(404));
    let err = c.create_deployment(&single("r01", "nope")).await.unwrap_err();
    match err {
        ClientError::Api { status: 400, code, details, .. } => {
            assert_eq!(code, "badRequest");
            assert!(details.to_string().contains("nope"), "{details}");
        }
        other => panic!("{other}"),
    }
    let dead = Client::new("http://127.0.0.1:9").unwrap();
    assert!(matches!(dead.health().await, Err(ClientError::Transport(_))));
}

#[tokio::test]
async fn deployment_lifecycle_over_http() {
    let (srv, _dir) = server().await;
    let mut c = Client::new(&srv.url()).unwrap();
    c.login("carol", "pw").await.unwrap();
    let created = c.create_deployment(&single("r01", "function1")).await.unwrap();
    assert!(matches!(created.status, S::Validating | S::Deploying));
    let conflict = c.create_deployment(&single("r01", "function1")).await.unwrap_err();
    assert_eq!(conflict.status(), Some(409));
    let ready = c.wait_for(&created.id, &[S::Ready], Duration::from_secs(10)).await.unwrap();
    assert!(ready.deployment_time_ms.is_some());
    assert_eq!(c.deployments().await.unwrap().len(), 1);

    let out = c.invoke(&created.id, None, json!({"x": 1})).await.unwrap();
    assert!(out.rtt_ms >= 1000.0);
    let handle = out.handle_id.to_string();
    let direct = c.direct_invoke(&handle, json!({})).await.unwrap();
    assert!(direct.rtt_ms >= 1000.0);

    c.shutdown(&created.id).await.unwrap();
    c.wait_for(&created.id, &[S::Stopped], Duration::from_secs(10)).await.unwrap();
    c.startup(&created.id).await.unwrap();
    c.wait_for(&created.id, &[S::Ready], Duration::from_secs(10)).await.unwrap();
    c.terminate(&created.id).await.unwrap();
    let done = c.wait_for(&created.id, &[S::Terminated], Duration::from_secs(10)).await.unwrap();
    assert!(done.termination_time_ms.is_some());

    let timeout = c.wait_for(&created.id, &[S::Ready], Duration::from_millis(20)).await.unwrap_err();
    assert!(matches!(timeout, ClientError::Timeout(_)));
}

#[tokio::test]
async fn metrics_round_trip() {
    let (srv, _dir) = server().await;
    let mut c = Client::new(&srv.url()).unwrap();
    c.login("carol", "pw").await.unwrap();
    let out = c
        .push_metrics("put cpu 1700000000 0.5 host=a\nput cpu 1700000001 1.5 host=a\nput cpu 1700000000 9 host=b\nbad line\n")
        .await
        .unwrap();
    assert_eq!(out.accepted, 3);
    assert_eq!(out.rejected.len(), 1);
    let q = Query::new("cpu").tag("host", "a");
    let series = c.query_metrics(&q).await.unwrap();
    assert_eq!(series.len(), 1);
    assert_eq!(series[0].points, vec![(1_700_000_000_000, 0.5), (1_700_000_001_000, 1.5)]);
    let avg = c.query_metrics(&Query::new("cpu").tag("host", "a").agg(Aggregator::Avg)).await.unwrap();
    assert_eq!(avg[0].value(), Some(1.0));
    let ranged = c.query_metrics(&Query::new("cpu").range(1_700_000_001_000, 1_700_000_002_000)).await.unwrap();
    assert_eq!(ranged.iter().map(|s| s.points.len()).sum::<usize>(), 1);
    assert!(c.alerts(0).await.unwrap().is_empty());
    assert!(c.episodes().await.unwrap().is_empty());
}
