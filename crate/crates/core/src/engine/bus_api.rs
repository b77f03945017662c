use super::{DeploymentRequest, Engine, EngineError};
use crate::bus::{Consumer, EventBus, Fault, FaultCode};
use crate::domain::{DeploymentId, ResourceId, ResourceRecord};
use crate::sim::ProviderError;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use std::future::Future;
use std::sync::Arc;

pub struct Addresses;

impl Addresses {
    pub const CREATE: &'static str = "deployment.create";
    pub const TERMINATE: &'static str = "deployment.terminate";
    pub const STARTUP: &'static str = "deployment.startup";
    pub const SHUTDOWN: &'static str = "deployment.shutdown";
    pub const STATUS: &'static str = "deployment.status";
    pub const GET: &'static str = "deployment.get";
    pub const LIST: &'static str = "deployment.list";
    pub const INVOKE: &'static str = "deployment.invoke";
    pub const REALLOCATE: &'static str = "deployment.reallocate";
    pub const RESOURCE_LIST: &'static str = "resource.list";
    pub const RESOURCE_GET: &'static str = "resource.get";
    pub const RESOURCE_REGISTER: &'static str = "resource.register";
}

pub fn fault_for(e: &EngineError) -> Fault {
    let msg = e.to_string();
    match e {
        EngineError::ValidationFailed(reasons) => {
            Fault::new(FaultCode::BadRequest, msg).with_details(json!({ "reasons": reasons }))
        }
        EngineError::ResourceConflict(ids) => {
            Fault::new(FaultCode::Conflict, msg).with_details(json!({ "resources": ids }))
        }
        EngineError::NotFound(_) => Fault::new(FaultCode::NotFound, msg),
        EngineError::IllegalTransition(t) => Fault::new(FaultCode::Conflict, msg)
            .with_details(json!({ "current": t.current, "event": t.event })),
        EngineError::NotReady(_) | EngineError::NoCandidate | EngineError::ReallocationDisabled => {
            Fault::new(FaultCode::Conflict, msg)
        }
        EngineError::Provider(p) => match p {
            ProviderError::UnknownHandle(_) => Fault::new(FaultCode::NotFound, msg),
            ProviderError::QueueTimeout(_) => Fault::new(FaultCode::Timeout, msg),
            ProviderError::NotRunning(_) => Fault::new(FaultCode::Conflict, msg),
            _ => Fault::internal(msg),
        },
        EngineError::Store(_) => Fault::internal("storage failure"),
    }
}

fn decode<T: DeserializeOwned>(body: Value) -> Result<T, Fault> {
    serde_json::from_value(body).map_err(|e| Fault::bad_request(format!("malformed body: {e}")))
}

fn encode<T: Serialize>(v: Result<T, EngineError>) -> Result<Value, Fault> {
    v.map_err(|e| fault_for(&e))
        .and_then(|v| serde_json::to_value(v).map_err(|e| Fault::internal(e.to_string())))
}

#[derive(serde::Deserialize)]
struct IdBody {
    id: String,
}

#[derive(serde::Deserialize)]
struct CreateBody {
    owner: String,
    request: DeploymentRequest,
}

#[derive(serde::Deserialize)]
struct InvokeBody {
    id: String,
    #[serde(default)]
    artifact: Option<String>,
    #[serde(default)]
    payload: Value,
}

/// Actor per address; each delivery is handled in its own task so slow
/// driver work never blocks the mailbox.
fn serve<F, Fut>(bus: &EventBus, address: &str, engine: &Arc<Engine>, f: F) -> Consumer
where
    F: Fn(Arc<Engine>, Value) -> Fut + Send + Sync + 'static,
    Fut: Future<Output = Result<Value, Fault>> + Send + 'static,
{
    let engine = engine.clone();
    let f = Arc::new(f);
    bus.consumer(address, move |d| {
        let fut = f(engine.clone(), d.body().clone());
        tokio::spawn(async move { d.reply(fut.await) });
        async {}
    })
}

/// Wires the engine's request/reply addresses. Keep the consumers alive for
/// as long as the engine should serve.
pub fn register(bus: &EventBus, engine: &Arc<Engine>) -> Vec<Consumer> {
    vec![
        serve(bus, Addresses::CREATE, engine, |e, body| async move {
            let b: CreateBody = decode(body)?;
            encode(e.create(&b.owner, &b.request))
        }),
        serve(bus, Addresses::TERMINATE, engine, |e, body| async move {
            let b: IdBody = decode(body)?;
            encode(e.terminate(&DeploymentId::new(b.id)))
        }),
        serve(bus, Addresses::STARTUP, engine, |e, body| async move {
            let b: IdBody = decode(body)?;
            encode(e.startup(&DeploymentId::new(b.id)).await)
        }),
        serve(bus, Addresses::SHUTDOWN, engine, |e, body| async move {
            let b: IdBody = decode(body)?;
            encode(e.shutdown(&DeploymentId::new(b.id)).await)
        }),
        serve(bus, Addresses::GET, engine, |e, body| async move {
            let b: IdBody = decode(body)?;
            encode(e.get(&DeploymentId::new(b.id)))
        }),
        serve(bus, Addresses::LIST, engine, |e, _| async move { encode(Ok(e.store().list_deployments())) }),
        serve(bus, Addresses::INVOKE, engine, |e, body| async move {
            let b: InvokeBody = decode(body)?;
            encode(e.invoke(&DeploymentId::new(b.id), b.artifact.as_deref(), b.payload).await)
        }),
        serve(bus, Addresses::REALLOCATE, engine, |e, body| async move {
            let b: IdBody = decode(body)?;
            encode(e.reallocate(&DeploymentId::new(b.id)).await)
        }),
        serve(bus, Addresses::RESOURCE_LIST, engine, |e, _| async move { encode(Ok(e.store().list_resources())) }),
        serve(bus, Addresses::RESOURCE_GET, engine, |e, body| async move {
            let b: IdBody = decode(body)?;
            encode(e.store().get_resource(&ResourceId::new(b.id)).map_err(EngineError::from))
        }),
        serve(bus, Addresses::RESOURCE_REGISTER, engine, |e, body| async move {
            let r: ResourceRecord = decode(body)?;
            encode(e.register_resource(r))
        }),
    ]
}
