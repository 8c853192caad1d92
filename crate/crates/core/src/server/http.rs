//! HTTP surface of the file server. No handler reads the peer address or
//! the User-Agent header.

use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures::StreamExt;
use tokio_util::io::ReaderStream;

use super::gate::GateError;
use super::{FileServer, ServerError};
use crate::hash::ContentHash;
use crate::http::{normalize_url, ApiError, WireJson};
use crate::wire::{
    self, FileList, ServerInfo, TokenGrant, TokenRequest, WireError, HEADER_HASH, HEADER_NAME,
    PROTOCOL_VERSION,
};

pub fn router(server: Arc<FileServer>) -> Router {
    Router::new()
        .route("/api/v1/info", get(info))
        .route("/api/v1/list", get(list))
        .route("/api/v1/meta/{hash}", get(meta))
        .route("/api/v1/token", post(token))
        .route("/dl/{token}", get(download))
        .with_state(server)
}

impl IntoResponse for ServerError {
    fn into_response(self) -> Response {
        match &self {
            ServerError::NotFound(_) | ServerError::Gate(GateError::NotFound) => {
                ApiError::not_found(self.to_string()).into_response()
            }
            ServerError::Gate(GateError::Gone) => {
                ApiError::new(StatusCode::GONE, "gone", self.to_string()).into_response()
            }
            ServerError::Gate(GateError::RetryLater { queue_len }) => {
                let mut e = ApiError::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "retry_later",
                    self.to_string(),
                );
                e.retry_after_s = Some((*queue_len as u64).clamp(1, 60));
                e.into_response()
            }
            ServerError::Open { .. } => ApiError::not_found(self.to_string()).into_response(),
            _ => ApiError::new(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                self.to_string(),
            )
            .into_response(),
        }
    }
}

async fn info(State(server): State<Arc<FileServer>>) -> Response {
    WireJson(ServerInfo {
        name: server.config().name.clone(),
        version: PROTOCOL_VERSION.into(),
        files: server.catalog().len() as u64,
    })
    .into_response()
}

async fn list(State(server): State<Arc<FileServer>>) -> Response {
    WireJson(FileList(server.list_files())).into_response()
}

async fn meta(State(server): State<Arc<FileServer>>, Path(hash): Path<String>) -> Response {
    let hash: ContentHash = match hash.parse() {
        Ok(h) => h,
        Err(e) => {
            return ApiError::bad_request(&WireError::Validation(format!("hash: {e}")))
                .into_response()
        }
    };
    match server.get_metadata(&hash) {
        Ok(record) => WireJson(record).into_response(),
        Err(e) => e.into_response(),
    }
}

fn base_url(server: &FileServer, headers: &HeaderMap) -> String {
    if let Some(url) = &server.config().public_url {
        return normalize_url(url);
    }
    let host = headers
        .get(header::HOST)
        .and_then(|h| h.to_str().ok())
        .unwrap_or("localhost");
    format!("http://{host}")
}

async fn token(
    State(server): State<Arc<FileServer>>,
    headers: HeaderMap,
    body: String,
) -> Response {
    let req: TokenRequest = match wire::decode(&body) {
        Ok(r) => r,
        Err(e) => return ApiError::bad_request(&e).into_response(),
    };
    match server.request_token(&req.hash).await {
        Ok(issued) => {
            let grant = TokenGrant {
                download_url: format!("{}/dl/{}", base_url(&server, &headers), issued.token),
                token: issued.token,
                expires_unix_s: issued.expires_unix_s,
            };
            WireJson(grant).into_response()
        }
        Err(e) => e.into_response(),
    }
}

async fn download(State(server): State<Arc<FileServer>>, Path(token): Path<String>) -> Response {
    let dl = match server.open_download(&token).await {
        Ok(dl) => dl,
        Err(e) => return e.into_response(),
    };
    let slot = dl.slot;
    // the slot lives exactly as long as the body: released on completion or
    // when the connection drops
    let stream = ReaderStream::with_capacity(dl.file, 64 * 1024).map(move |chunk| {
        let _held = &slot;
        chunk
    });
    let mut resp = Response::new(Body::from_stream(stream));
    let h = resp.headers_mut();
    h.insert(header::CONTENT_LENGTH, HeaderValue::from(dl.len));
    h.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/octet-stream"),
    );
    if let Ok(v) = HeaderValue::from_str(&dl.record.hash.to_hex()) {
        h.insert(HEADER_HASH, v);
    }
    if let Ok(v) = HeaderValue::from_str(&dl.record.name) {
        h.insert(HEADER_NAME, v);
    }
    resp
}
