//! HTTP surface of the indexer.
//!
//! Handlers never read the peer address or the User-Agent header, and log
//! lines carry neither.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;

use super::{Indexer, IndexerError};
use crate::hash::ContentHash;
use crate::http::{ApiError, WireJson};
use crate::wire::{
    self, IndexerInfo, PeerList, RegisterRequest, SearchRequest, SyncAck, SyncBatch, WireError,
    WireMessage, HEADER_HOPS, HEADER_VISITED, PROTOCOL_VERSION,
};

/// Hop budget assumed when a search carries no hops header.
pub const DEFAULT_HOPS: u32 = 2;

pub fn router(indexer: Arc<Indexer>) -> Router {
    Router::new()
        .route("/api/v1/register", post(register))
        .route("/api/v1/search", get(search))
        .route("/api/v1/sync", post(sync))
        .route("/api/v1/peers", get(peers))
        .route("/api/v1/info", get(info))
        .with_state(indexer)
}

impl IntoResponse for IndexerError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            IndexerError::Unreachable { .. } => (StatusCode::BAD_GATEWAY, "unreachable"),
            IndexerError::MalformedListing { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "malformed_listing")
            }
            IndexerError::OversizedBatch(_) => (StatusCode::PAYLOAD_TOO_LARGE, "schema"),
            IndexerError::Invalid(_) => (StatusCode::BAD_REQUEST, "validation"),
            IndexerError::NotRegistered(_) => (StatusCode::NOT_FOUND, "not_found"),
            IndexerError::Store(_) | IndexerError::Client(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, self.to_string()).into_response()
    }
}

async fn register(State(ix): State<Arc<Indexer>>, body: String) -> Response {
    let req: RegisterRequest = match wire::decode(&body) {
        Ok(r) => r,
        Err(e) => return ApiError::bad_request(&e).into_response(),
    };
    match ix.register_server(&req.url).await {
        Ok(result) => WireJson(result).into_response(),
        Err(e) => e.into_response(),
    }
}

fn search_request(
    params: &HashMap<String, String>,
    headers: &HeaderMap,
) -> Result<SearchRequest, WireError> {
    let hop_budget = match headers.get(HEADER_HOPS) {
        None => DEFAULT_HOPS,
        Some(v) => v
            .to_str()
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| WireError::Validation(format!("{HEADER_HOPS} must be an integer")))?,
    };
    let visited = headers
        .get(HEADER_VISITED)
        .and_then(|v| v.to_str().ok())
        .map(|s| {
            s.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default();
    let hash = params
        .get("hash")
        .map(|h| {
            h.parse::<ContentHash>()
                .map_err(|e| WireError::Validation(format!("hash: {e}")))
        })
        .transpose()?;
    let request = SearchRequest {
        query: params.get("q").cloned(),
        hash,
        hop_budget,
        visited,
    };
    request
        .check()
        .map_err(|rule| WireError::Validation(format!("SearchRequest: {rule}")))?;
    Ok(request)
}

async fn search(
    State(ix): State<Arc<Indexer>>,
    Query(params): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    match search_request(&params, &headers) {
        Ok(req) => WireJson(ix.search_federated(&req).await).into_response(),
        Err(e) => ApiError::bad_request(&e).into_response(),
    }
}

async fn sync(State(ix): State<Arc<Indexer>>, body: String) -> Response {
    let batch: SyncBatch = match serde_json::from_str(&body) {
        Ok(b) => b,
        Err(_) => {
            // re-run through the wire decoder for a classified error
            let e = wire::decode::<SyncBatch>(&body)
                .err()
                .unwrap_or(WireError::Parse("unreadable sync batch".into()));
            return ApiError::bad_request(&e).into_response();
        }
    };
    match ix.sync_push(&batch) {
        Ok(accepted) => WireJson(SyncAck { accepted }).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn peers(State(ix): State<Arc<Indexer>>) -> Response {
    WireJson(PeerList {
        peers: ix.peers().to_vec(),
    })
    .into_response()
}

async fn info(State(ix): State<Arc<Indexer>>) -> Response {
    WireJson(IndexerInfo {
        name: ix.config().name.clone(),
        version: PROTOCOL_VERSION.into(),
        entries: ix.entry_count(),
    })
    .into_response()
}
