mod common;

use std::sync::Arc;
use std::time::Duration;

use distrifs::hash::ContentHash;
use distrifs::http::http_client;
use distrifs::server::{FileServer, ServeConfig};
use distrifs::wire::{self, ErrorBody, FileList, ServerInfo, TokenGrant};
use reqwest::StatusCode;

struct Fixture {
    url: String,
    http: reqwest::Client,
    server: Arc<FileServer>,
    _dir: tempfile::TempDir,
}

async fn start(max_concurrent: usize, queue_timeout: Duration, token_ttl: Duration) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("sub")).unwrap();
    std::fs::write(dir.path().join("a.txt"), b"alpha").unwrap();
    std::fs::write(dir.path().join("sub/copy.txt"), b"alpha").unwrap();
    std::fs::write(dir.path().join("b.bin"), vec![3u8; 200_000]).unwrap();
    let mut cfg = ServeConfig::new(dir.path());
    cfg.max_concurrent = max_concurrent;
    cfg.queue_timeout = queue_timeout;
    cfg.token_ttl = token_ttl;
    let server = FileServer::new(cfg).unwrap();
    let url = common::serve(distrifs::server::http::router(server.clone())).await;
    Fixture {
        url,
        http: http_client(Some(Duration::from_secs(10)), None).unwrap(),
        server,
        _dir: dir,
    }
}

impl Fixture {
    async fn get(&self, path: &str) -> reqwest::Response {
        self.http
            .get(format!("{}{path}", self.url))
            .send()
            .await
            .unwrap()
    }

    async fn token(&self, hash: &ContentHash) -> reqwest::Response {
        self.http
            .post(format!("{}/api/v1/token", self.url))
            .body(format!(r#"{{"hash":"{hash}"}}"#))
            .send()
            .await
            .unwrap()
    }

    async fn grant(&self, hash: &ContentHash) -> TokenGrant {
        let resp = self.token(hash).await;
        assert_eq!(resp.status(), StatusCode::OK);
        wire::decode(&resp.text().await.unwrap()).unwrap()
    }
}

async fn error_of(resp: reqwest::Response) -> ErrorBody {
    wire::decode(&resp.text().await.unwrap()).unwrap()
}

#[tokio::test]
async fn info_and_list_collapse_duplicates() {
    let f = start(0, Duration::from_secs(5), Duration::from_secs(60)).await;
    let info: ServerInfo =
        wire::decode(&f.get("/api/v1/info").await.text().await.unwrap()).unwrap();
    assert_eq!(info.files, 2);
    assert_eq!(info.version, "1.0");
    let list: FileList = wire::decode(&f.get("/api/v1/list").await.text().await.unwrap()).unwrap();
    assert_eq!(list.0.len(), 2);
    let alpha = list
        .0
        .iter()
        .find(|r| r.hash == ContentHash::of(b"alpha"))
        .unwrap();
    assert_eq!(alpha.rel_path, "a.txt");
}

#[tokio::test]
async fn metadata_status_codes() {
    let f = start(0, Duration::from_secs(5), Duration::from_secs(60)).await;
    let h = ContentHash::of(b"alpha");
    let ok = f.get(&format!("/api/v1/meta/{h}")).await;
    assert_eq!(ok.status(), StatusCode::OK);
    let bad = f.get("/api/v1/meta/not-a-hash").await;
    assert_eq!(bad.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_of(bad).await.error, "validation");
    let upper = f
        .get(&format!("/api/v1/meta/{}", h.to_hex().to_uppercase()))
        .await;
    assert_eq!(upper.status(), StatusCode::BAD_REQUEST);
    let missing = f
        .get(&format!("/api/v1/meta/{}", ContentHash::of(b"nope")))
        .await;
    assert_eq!(missing.status(), StatusCode::NOT_FOUND);
    assert_eq!(error_of(missing).await.error, "not_found");
}

#[tokio::test]
async fn download_headers_and_single_use() {
    let f = start(0, Duration::from_secs(5), Duration::from_secs(60)).await;
    let h = ContentHash::of(&vec![3u8; 200_000]);
    let grant = f.grant(&h).await;
    assert!(grant.download_url.starts_with(&f.url));
    let resp = f.http.get(&grant.download_url).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let headers = resp.headers().clone();
    assert_eq!(headers["content-length"], "200000");
    assert_eq!(headers["x-distrifs-hash"], h.to_hex().as_str());
    assert_eq!(headers["x-distrifs-name"], "b.bin");
    let body = resp.bytes().await.unwrap();
    assert_eq!(ContentHash::of(&body), h);

    let again = f.http.get(&grant.download_url).send().await.unwrap();
    assert_eq!(again.status(), StatusCode::GONE);
    assert_eq!(error_of(again).await.error, "gone");
    let unknown = f.get(&format!("/dl/{}", "0".repeat(32))).await;
    assert_eq!(unknown.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn token_for_unknown_hash_is_404_and_bad_body_is_400() {
    let f = start(0, Duration::from_secs(5), Duration::from_secs(60)).await;
    assert_eq!(
        f.token(&ContentHash::of(b"zzz")).await.status(),
        StatusCode::NOT_FOUND
    );
    let resp = f
        .http
        .post(format!("{}/api/v1/token", f.url))
        .body("{}")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(error_of(resp).await.error, "schema");
}

#[tokio::test]
async fn full_queue_answers_retry_later() {
    let f = start(1, Duration::from_millis(200), Duration::from_secs(60)).await;
    let h = ContentHash::of(b"alpha");
    let _held = f.grant(&h).await;
    let resp = f.token(&h).await;
    assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE);
    let retry: u64 = resp.headers()["retry-after"]
        .to_str()
        .unwrap()
        .parse()
        .unwrap();
    assert!((1..=60).contains(&retry));
    assert_eq!(error_of(resp).await.error, "retry_later");
}

#[tokio::test]
async fn expired_token_is_gone_and_frees_its_slot() {
    let f = start(1, Duration::from_secs(5), Duration::from_millis(150)).await;
    let h = ContentHash::of(b"alpha");
    let first = f.grant(&h).await;
    tokio::time::sleep(Duration::from_millis(400)).await;
    assert_eq!(f.server.gate().active(), 0);
    let resp = f.http.get(&first.download_url).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::GONE);
    // the slot came back, so a new grant is immediate
    let second = tokio::time::timeout(Duration::from_secs(1), f.grant(&h)).await;
    assert!(second.is_ok());
}

#[tokio::test]
async fn aborted_stream_releases_slot() {
    let f = start(1, Duration::from_secs(5), Duration::from_secs(60)).await;
    let h = ContentHash::of(&vec![3u8; 200_000]);
    let grant = f.grant(&h).await;
    let resp = f.http.get(&grant.download_url).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    drop(resp);
    let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
    while f.server.gate().active() != 0 {
        assert!(
            tokio::time::Instant::now() < deadline,
            "slot never released"
        );
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}
