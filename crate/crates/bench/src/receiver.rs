//! Webhook endpoint that records every delivery with its arrival instant.

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::Router;
use parking_lot::Mutex;
use rm_core::domain::AlertNotification;
use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::sync::Notify;
use tokio::task::JoinHandle;

#[derive(Debug, Clone)]
pub struct Received {
    pub at: Instant,
    pub raw: Vec<u8>,
    pub alert: Option<AlertNotification>,
    pub status: u16,
}

#[derive(Default)]
struct Inner {
    got: Mutex<Vec<Received>>,
    script: Mutex<VecDeque<u16>>,
    notify: Notify,
}

pub struct Receiver {
    inner: Arc<Inner>,
    url: String,
    task: JoinHandle<()>,
}

async fn hook(State(inner): State<Arc<Inner>>, body: Bytes) -> StatusCode {
    let at = Instant::now();
    let status = inner.script.lock().pop_front().unwrap_or(200);
    let alert = serde_json::from_slice(&body).ok();
    inner.got.lock().push(Received { at, raw: body.to_vec(), alert, status });
    inner.notify.notify_waiters();
    StatusCode::from_u16(status).unwrap_or(StatusCode::OK)
}

impl Receiver {
    pub async fn start() -> std::io::Result<Self> {
        let inner = Arc::new(Inner::default());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let url = format!("http://{}/hook", listener.local_addr()?);
        let app = Router::new().route("/hook", post(hook)).with_state(inner.clone());
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Receiver { inner, url, task })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Status codes for the next deliveries; 200 once the script runs out.
    pub fn script(&self, codes: &[u16]) {
        *self.inner.script.lock() = codes.iter().copied().collect();
    }

    pub fn received(&self) -> Vec<Received> {
        self.inner.got.lock().clone()
    }

    pub fn count(&self) -> usize {
        self.inner.got.lock().len()
    }

    /// First delivery at index `from` or later that satisfies `pred`.
    pub async fn wait_for(&self, from: usize, timeout: Duration, pred: impl Fn(&Received) -> bool) -> Option<Received> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let notified = self.inner.notify.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            if let Some(r) = self.inner.got.lock().iter().skip(from).find(|r| pred(r)) {
                return Some(r.clone());
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                return self.inner.got.lock().iter().skip(from).find(|r| pred(r)).cloned();
            }
        }
    }
}

impl Drop for Receiver {
    fn drop(&mut self) {
        self.task.abort();
    }
}
