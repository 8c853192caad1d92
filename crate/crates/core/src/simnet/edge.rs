//! Fault injection and observation at a simulated node's network edge.
//! Wraps the real router so the node itself stays unmodified.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::extract::{Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use futures::StreamExt;
use serde::{Deserialize, Serialize};

const MAX_RECORDED_AGENTS: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    /// Added before every response.
    #[serde(default)]
    pub latency_ms: u64,
    /// Flip the first byte of every download body.
    #[serde(default)]
    pub tamper: bool,
    /// Cap download bodies at this many bytes per second.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throttle_bps: Option<u64>,
}

/// Live fault switches; may be changed while the network runs.
#[derive(Debug, Default)]
pub struct Faults {
    pub latency_ms: AtomicU64,
    pub tamper: AtomicBool,
    /// 0 = unthrottled.
    pub throttle_bps: AtomicU64,
    pub down: AtomicBool,
}

impl Faults {
    pub fn from_spec(spec: &FaultSpec) -> Self {
        Self {
            latency_ms: AtomicU64::new(spec.latency_ms),
            tamper: AtomicBool::new(spec.tamper),
            throttle_bps: AtomicU64::new(spec.throttle_bps.unwrap_or(0)),
            down: AtomicBool::new(false),
        }
    }
}

/// What the edge saw.
#[derive(Debug, Default)]
pub struct EdgeStats {
    active_streams: AtomicUsize,
    max_streams: AtomicUsize,
    streams: AtomicU64,
    requests: AtomicU64,
    user_agents: Mutex<Vec<String>>,
}

impl EdgeStats {
    pub fn active_streams(&self) -> usize {
        self.active_streams.load(Ordering::SeqCst)
    }

    /// Most download bodies ever in flight at once.
    pub fn max_concurrent_streams(&self) -> usize {
        self.max_streams.load(Ordering::SeqCst)
    }

    pub fn streams_started(&self) -> u64 {
        self.streams.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// User-Agent values of inbound requests, kept in memory for inspection
    /// and never written to the log.
    pub fn user_agents(&self) -> Vec<String> {
        self.user_agents.lock().unwrap().clone()
    }
}

#[derive(Debug, Default)]
pub struct Edge {
    pub faults: Faults,
    pub stats: EdgeStats,
}

struct StreamGuard(Arc<Edge>);

impl StreamGuard {
    fn open(edge: Arc<Edge>) -> Self {
        let now = edge.stats.active_streams.fetch_add(1, Ordering::SeqCst) + 1;
        edge.stats.max_streams.fetch_max(now, Ordering::SeqCst);
        edge.stats.streams.fetch_add(1, Ordering::SeqCst);
        Self(edge)
    }
}

impl Drop for StreamGuard {
    fn drop(&mut self) {
        self.0.stats.active_streams.fetch_sub(1, Ordering::SeqCst);
    }
}

pub(crate) async fn edge_layer(
    State(edge): State<Arc<Edge>>,
    req: Request,
    next: Next,
) -> Response {
    if edge.faults.down.load(Ordering::SeqCst) {
        return (StatusCode::SERVICE_UNAVAILABLE, "down").into_response();
    }
    edge.stats.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(ua) = req.headers().get(header::USER_AGENT) {
        let mut agents = edge.stats.user_agents.lock().unwrap();
        if agents.len() < MAX_RECORDED_AGENTS {
            agents.push(String::from_utf8_lossy(ua.as_bytes()).into_owned());
        }
    }
    let latency = edge.faults.latency_ms.load(Ordering::SeqCst);
    if latency > 0 {
        tokio::time::sleep(Duration::from_millis(latency)).await;
    }
    let is_download = req.uri().path().starts_with("/dl/");
    let resp = next.run(req).await;
    if !is_download || !resp.status().is_success() {
        return resp;
    }

    let tamper = edge.faults.tamper.load(Ordering::SeqCst);
    let bps = edge.faults.throttle_bps.load(Ordering::SeqCst);
    let (parts, body) = resp.into_parts();
    // guard sits first so the stream is uncounted before the server's slot
    // is released by dropping the inner body
    let state = (StreamGuard::open(edge), body.into_data_stream(), tamper);
    let stream = futures::stream::unfold(
        state,
        move |(guard, mut inner, mut pending_flip)| async move {
            let chunk = match inner.next().await {
                Some(Ok(c)) => c,
                Some(Err(e)) => return Some((Err(e), (guard, inner, pending_flip))),
                None => {
                    drop(guard);
                    drop(inner);
                    return None;
                }
            };
            let chunk = if pending_flip && !chunk.is_empty() {
                pending_flip = false;
                let mut v = chunk.to_vec();
                v[0] ^= 0xff;
                bytes::Bytes::from(v)
            } else {
                chunk
            };
            if bps > 0 {
                tokio::time::sleep(Duration::from_secs_f64(chunk.len() as f64 / bps as f64)).await;
            }
            Some((Ok(chunk), (guard, inner, pending_flip)))
        },
    );
    Response::from_parts(parts, Body::from_stream(stream))
}
