//! Serve a directory over HTTP and fetch a file the way clients do:
//! metadata, token, then a single-use download URL.
//!
//!     cargo run --example serve_directory

use std::time::Duration;

use distrifs::hash::ContentHash;
use distrifs::http::http_client;
use distrifs::scan::FileRecord;
use distrifs::server::{FileServer, ServeConfig};
use distrifs::wire::{self, FileList, TokenGrant};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("readme.txt"), b"served by distrifs\n")?;
    std::fs::create_dir(dir.path().join("data"))?;
    std::fs::write(dir.path().join("data/numbers.csv"), b"1,2,3\n")?;

    let mut cfg = ServeConfig::new(dir.path());
    cfg.name = "example".into();
    let server = FileServer::new(cfg)?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    let app = distrifs::server::http::router(server);
    tokio::spawn(async move { axum::serve(listener, app).await });

    let http = http_client(Some(Duration::from_secs(10)), None)?;
    let list: FileList = wire::decode(
        &http
            .get(format!("{base}/api/v1/list"))
            .send()
            .await?
            .text()
            .await?,
    )?;
    for r in &list.0 {
        println!("listed {} {}", r.hash, r.rel_path);
    }

    let hash = ContentHash::of(b"served by distrifs\n");
    let meta: FileRecord = wire::decode(
        &http
            .get(format!("{base}/api/v1/meta/{hash}"))
            .send()
            .await?
            .text()
            .await?,
    )?;
    println!("metadata: {} ({} bytes)", meta.name, meta.size_bytes);

    let grant: TokenGrant = wire::decode(
        &http
            .post(format!("{base}/api/v1/token"))
            .body(format!(r#"{{"hash":"{hash}"}}"#))
            .send()
            .await?
            .text()
            .await?,
    )?;
    let resp = http.get(&grant.download_url).send().await?;
    println!("GET {} -> {}", grant.download_url, resp.status());
    println!("  X-DistriFS-Name: {:?}", resp.headers()["x-distrifs-name"]);
    println!(
        "  body: {:?}",
        String::from_utf8_lossy(&resp.bytes().await?)
    );
    let again = http.get(&grant.download_url).send().await?;
    println!("second GET -> {}", again.status());
    Ok(())
}
