//! HTTP plumbing shared by the indexer, server and client.

use std::net::IpAddr;
use std::time::Duration;

use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};

use crate::wire::{self, ErrorBody, WireMessage, USER_AGENT};

/// A wire message rendered as canonical JSON.
pub struct WireJson<T>(pub T);

impl<T: WireMessage> IntoResponse for WireJson<T> {
    fn into_response(self) -> Response {
        match wire::encode(&self.0) {
            Ok(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
            Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
                .into_response(),
        }
    }
}

/// A non-2xx response carrying an [`ErrorBody`].
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
    pub retry_after_s: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody::new(code, detail),
            retry_after_s: None,
        }
    }

    pub fn bad_request(err: &wire::WireError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, err.code(), err.to_string())
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = wire::encode(&self.body)
            .unwrap_or_else(|_| r#"{"detail":"","error":"internal"}"#.to_string());
        let mut resp = (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response();
        if let Some(secs) = self.retry_after_s {
            if let Ok(v) = HeaderValue::from_str(&secs.to_string()) {
                resp.headers_mut().insert(header::RETRY_AFTER, v);
            }
        }
        resp
    }
}

/// Build the outbound HTTP client used by every role.
///
/// The only identifying header sent is `User-Agent: DistriFS/1.0`; no
/// proxies are read from the environment and no compression is negotiated.
pub fn http_client(
    timeout: Option<Duration>,
    local_address: Option<IpAddr>,
) -> reqwest::Result<reqwest::Client> {
    http_client_with_agent(USER_AGENT, timeout, local_address)
}

/// As [`http_client`] with a different User-Agent.
pub fn http_client_with_agent(
    user_agent: &str,
    timeout: Option<Duration>,
    local_address: Option<IpAddr>,
) -> reqwest::Result<reqwest::Client> {
    let mut builder = reqwest::Client::builder()
        .user_agent(user_agent)
        .no_proxy()
        .referer(false)
        .connect_timeout(Duration::from_secs(5));
    if let Some(t) = timeout {
        builder = builder.timeout(t);
    }
    if let Some(addr) = local_address {
        builder = builder.local_address(addr);
    }
    builder.build()
}

/// Strip trailing slashes so URLs compare by identity.
pub fn normalize_url(url: &str) -> String {
    url.trim().trim_end_matches('/').to_string()
}

/// Read an error body from a failed response, tolerating non-JSON bodies.
pub async fn error_body(resp: reqwest::Response) -> ErrorBody {
    let status = resp.status();
    let text = resp.text().await.unwrap_or_default();
    wire::decode::<ErrorBody>(&text).unwrap_or_else(|_| {
        ErrorBody::new(
            status.as_str(),
            status.canonical_reason().unwrap_or("error").to_string(),
        )
    })
}
