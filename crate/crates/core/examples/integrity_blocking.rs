//! What the client does with bad bytes: a tampering server's copy is
//! quarantined and the next server is tried; a file the scanner flags is
//! quarantined even though its hash matches.
//!
//!     cargo run --example integrity_blocking

use distrifs::client::scanner::{ScannerHook, SignatureScanner, EICAR};
use distrifs::client::{AutoConfirm, Client};
use distrifs::simnet::{FaultSpec, IndexerSpec, ServerSpec, SimNet, Topology};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tamper = FaultSpec {
        tamper: true,
        ..FaultSpec::default()
    };
    let net = SimNet::spawn(Topology {
        seed: 3,
        indexers: vec![IndexerSpec::new("ix")],
        servers: vec![
            ServerSpec::new("evil")
                .file("tool.bin", 10_000)
                .faults(tamper.clone()),
            ServerSpec::new("evil-too")
                .file("tool.bin", 10_000)
                .faults(tamper),
        ],
    })
    .await?;
    let client = Client::new(net.client_options(&[]))?;
    let out = net.work_dir().join("tool.bin");
    let report = client
        .download(&net.hash_of("tool.bin").unwrap(), &out, &AutoConfirm)
        .await?;
    println!("tampered: {:?}", report.verdict);
    for a in &report.attempts {
        println!("  tried {}: {}", a.server, a.outcome);
    }
    println!(
        "  quarantined at {:?}, output exists: {}",
        report.quarantine_path,
        out.exists()
    );
    net.shutdown().await;

    // a real server publishing the antivirus test file
    let dir = tempfile::tempdir()?;
    std::fs::write(dir.path().join("eicar.com"), EICAR)?;
    let server = distrifs::server::FileServer::new(distrifs::server::ServeConfig::new(dir.path()))?;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let url = format!("http://{}", listener.local_addr()?);
    let app = distrifs::server::http::router(server);
    tokio::spawn(async move { axum::serve(listener, app).await });

    let mut opts = distrifs::client::ClientOptions::new(vec![]);
    opts.scanner = ScannerHook::with(SignatureScanner::eicar());
    let client = Client::new(opts)?;
    let out = dir.path().join("downloaded.com");
    let hash = distrifs::hash::ContentHash::of(EICAR);
    let source = distrifs::wire::ServerRef::unmeasured(url);
    let report = client
        .download_from(&hash, &[source], &out, &AutoConfirm)
        .await?;
    println!(
        "scanned: {:?}, scanner said {:?}",
        report.verdict, report.scanner
    );
    Ok(())
}
