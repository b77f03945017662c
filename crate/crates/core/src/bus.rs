//! In-process event bus with publish/subscribe, point-to-point and
//! request/reply messaging.
//!
//! Each subscription owns a bounded FIFO mailbox. Consumers registered with
//! [`EventBus::consumer`] process their mailbox one message at a time; a
//! handler that needs to do long work can move the [`Delivery`] into a task
//! and reply from there.

use crate::clock::now_ms;
use futures::FutureExt;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{HashMap, VecDeque};
use std::future::Future;
use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::{mpsc, oneshot};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BusMessage {
    pub address: String,
    pub body: Value,
    pub correlation_id: Option<u64>,
    pub sent_at_ms: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum FaultCode {
    BadRequest,
    Unauthorized,
    NotFound,
    Conflict,
    Timeout,
    Internal,
}

/// Error reply carried back over the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct Fault {
    pub code: FaultCode,
    pub message: String,
    #[serde(default)]
    pub details: Value,
}

impl Fault {
    pub fn new(code: FaultCode, message: impl Into<String>) -> Self {
        Fault { code, message: message.into(), details: Value::Null }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(FaultCode::Internal, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(FaultCode::BadRequest, message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BusError {
    #[error("request timed out after {0} ms")]
    Timeout(u64),
    #[error("no handler registered for {0}")]
    NoHandler(String),
    #[error("queue full for {0}")]
    QueueFull(String),
    #[error("invalid address")]
    InvalidAddress,
    #[error("timeout must be positive")]
    InvalidTimeout,
    #[error(transparent)]
    Handler(#[from] Fault),
}

type ReplySender = oneshot::Sender<Result<Value, Fault>>;

/// A message as seen by a subscriber. Requests carry a reply channel; if the
/// delivery is dropped without a reply the requester receives an internal fault.
#[derive(Debug)]
pub struct Delivery {
    pub message: BusMessage,
    reply: Option<ReplySender>,
}

impl Delivery {
    pub fn body(&self) -> &Value {
        &self.message.body
    }

    pub fn is_request(&self) -> bool {
        self.reply.is_some()
    }

    pub fn reply(mut self, result: Result<Value, Fault>) {
        if let Some(tx) = self.reply.take() {
            let _ = tx.send(result);
        }
    }
}

struct Subscriber {
    id: u64,
    tx: mpsc::Sender<Delivery>,
}

#[derive(Default)]
struct AddressState {
    subscribers: Vec<Subscriber>,
    next: usize,
    pending: VecDeque<Delivery>,
}

impl AddressState {
    /// Round-robin over live subscribers. Gives the delivery back if every
    /// mailbox is full.
    fn dispatch_one(&mut self, mut d: Delivery) -> Result<(), Delivery> {
        let n = self.subscribers.len();
        for i in 0..n {
            let idx = (self.next + i) % n;
            match self.subscribers[idx].tx.try_send(d) {
                Ok(()) => {
                    self.next = (idx + 1) % n;
                    return Ok(());
                }
                Err(mpsc::error::TrySendError::Full(back))
                | Err(mpsc::error::TrySendError::Closed(back)) => d = back,
            }
        }
        Err(d)
    }
}

struct Inner {
    addresses: Mutex<HashMap<String, AddressState>>,
    ids: AtomicU64,
    capacity: usize,
}

#[derive(Clone)]
pub struct EventBus {
    inner: Arc<Inner>,
}

impl Default for EventBus {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for EventBus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventBus").field("capacity", &self.inner.capacity).finish()
    }
}

impl EventBus {
    pub fn new() -> Self {
        Self::with_capacity(DEFAULT_QUEUE_CAPACITY)
    }

    /// `capacity` bounds both each mailbox and each address's pending queue.
    pub fn with_capacity(capacity: usize) -> Self {
        EventBus {
            inner: Arc::new(Inner {
                addresses: Mutex::new(HashMap::new()),
                ids: AtomicU64::new(1),
                capacity: capacity.max(1),
            }),
        }
    }

    fn message(&self, address: &str, body: Value, correlation_id: Option<u64>) -> BusMessage {
        BusMessage { address: address.to_string(), body, correlation_id, sent_at_ms: now_ms() }
    }

    /// Registers a raw subscription. Messages queued by `send` while the
    /// address had no subscriber are handed over immediately.
    pub fn subscribe(&self, address: &str) -> Subscription {
        let id = self.inner.ids.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::channel(self.inner.capacity);
        let mut map = self.inner.addresses.lock();
        let state = map.entry(address.to_string()).or_default();
        while let Some(d) = state.pending.pop_front() {
            match tx.try_send(d) {
                Ok(()) => {}
                Err(mpsc::error::TrySendError::Full(d)) | Err(mpsc::error::TrySendError::Closed(d)) => {
                    state.pending.push_front(d);
                    break;
                }
            }
        }
        state.subscribers.push(Subscriber { id, tx });
        Subscription { rx, _guard: SubscriptionGuard { bus: self.clone(), address: address.to_string(), id } }
    }

    fn unsubscribe(&self, address: &str, id: u64) {
        let mut map = self.inner.addresses.lock();
        if let Some(state) = map.get_mut(address) {
            state.subscribers.retain(|s| s.id != id);
            if state.subscribers.is_empty() && state.pending.is_empty() {
                map.remove(address);
            }
        }
    }

    /// Spawns an actor that handles deliveries for `address` one at a time.
    /// A panicking handler is logged and its pending reply becomes a fault.
    pub fn consumer<F, Fut>(&self, address: &str, handler: F) -> Consumer
    where
        F: Fn(Delivery) -> Fut + Send + Sync + 'static,
        Fut: Future<Output = ()> + Send + 'static,
    {
        let Subscription { mut rx, _guard } = self.subscribe(address);
        let addr = address.to_string();
        let task = tokio::spawn(async move {
            while let Some(d) = rx.recv().await {
                if AssertUnwindSafe(handler(d)).catch_unwind().await.is_err() {
                    tracing::error!(address = %addr, "bus handler panicked");
                }
            }
        });
        Consumer { _guard, task }
    }

    /// Consumer whose async function result is sent back as the reply.
    pub fn consumer_fn<F, Fut>(&self, address: &str, f: F) -> Consumer
    where
        F: Fn(Value) -> Fut + Send + Sync + 'static,
        Fut: Future<Output = Result<Value, Fault>> + Send + 'static,
    {
        let f = Arc::new(f);
        self.consumer(address, move |d: Delivery| {
            let f = f.clone();
            async move {
                let body = d.message.body.clone();
                let out = f(body).await;
                if let Err(e) = &out {
                    if !d.is_request() {
                        tracing::warn!(address = %d.message.address, error = %e, "handler failed");
                    }
                }
                d.reply(out);
            }
        })
    }

    /// Delivers `body` to every current subscriber; returns how many got it.
    pub fn publish(&self, address: &str, body: Value) -> usize {
        let msg = self.message(address, body, None);
        let map = self.inner.addresses.lock();
        let Some(state) = map.get(address) else { return 0 };
        let mut delivered = 0;
        for s in &state.subscribers {
            match s.tx.try_send(Delivery { message: msg.clone(), reply: None }) {
                Ok(()) => delivered += 1,
                Err(mpsc::error::TrySendError::Full(_)) => {
                    tracing::warn!(address, subscriber = s.id, "mailbox full, publish dropped")
                }
                Err(mpsc::error::TrySendError::Closed(_)) => {}
            }
        }
        delivered
    }

    /// Point-to-point: exactly one subscriber receives the message, round robin.
    /// Without subscribers the message waits in a bounded per-address queue.
    pub fn send(&self, address: &str, body: Value) -> Result<(), BusError> {
        if address.is_empty() {
            return Err(BusError::InvalidAddress);
        }
        let d = Delivery { message: self.message(address, body, None), reply: None };
        let mut map = self.inner.addresses.lock();
        let state = map.entry(address.to_string()).or_default();
        let Err(d) = state.dispatch_one(d) else { return Ok(()) };
        if state.pending.len() >= self.inner.capacity {
            return Err(BusError::QueueFull(address.to_string()));
        }
        state.pending.push_back(d);
        Ok(())
    }

    /// Sends a request to one subscriber and waits for its correlated reply.
    pub async fn request(&self, address: &str, body: Value, timeout_ms: u64) -> Result<Value, BusError> {
        if timeout_ms == 0 {
            return Err(BusError::InvalidTimeout);
        }
        let correlation = self.inner.ids.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = oneshot::channel();
        let d = Delivery { message: self.message(address, body, Some(correlation)), reply: Some(tx) };
        {
            let mut map = self.inner.addresses.lock();
            let Some(state) = map.get_mut(address).filter(|s| !s.subscribers.is_empty()) else {
                return Err(BusError::NoHandler(address.to_string()));
            };
            if state.dispatch_one(d).is_err() {
                return Err(BusError::QueueFull(address.to_string()));
            }
        }
        match tokio::time::timeout(Duration::from_millis(timeout_ms), rx).await {
            Err(_) => Err(BusError::Timeout(timeout_ms)),
            Ok(Err(_)) => Err(BusError::Handler(Fault::internal(format!("handler for {address} failed")))),
            Ok(Ok(reply)) => reply.map_err(BusError::Handler),
        }
    }

    pub fn subscriber_count(&self, address: &str) -> usize {
        self.inner.addresses.lock().get(address).map_or(0, |s| s.subscribers.len())
    }
}

struct SubscriptionGuard {
    bus: EventBus,
    address: String,
    id: u64,
}

impl Drop for SubscriptionGuard {
    fn drop(&mut self) {
        self.bus.unsubscribe(&self.address, self.id);
    }
}

/// Raw mailbox receiver. Dropping it unsubscribes.
pub struct Subscription {
    rx: mpsc::Receiver<Delivery>,
    _guard: SubscriptionGuard,
}

impl Subscription {
    pub async fn recv(&mut self) -> Option<Delivery> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<Delivery> {
        self.rx.try_recv().ok()
    }
}

/// Running consumer actor. Dropping it unsubscribes and stops the actor.
pub struct Consumer {
    _guard: SubscriptionGuard,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for Consumer {
    fn drop(&mut self) {
        self.task.abort();
    }
}
