//! Search, pick the fastest server and download with verification, against
//! a small simulated network with one slow and one fast server.
//!
//!     cargo run --example client_download

use distrifs::client::{AutoConfirm, Client, SearchTarget};
use distrifs::simnet::{FaultSpec, IndexerSpec, ServerSpec, SimNet, Topology};
use distrifs::wire;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let slow = FaultSpec {
        latency_ms: 120,
        ..FaultSpec::default()
    };
    let net = SimNet::spawn(Topology {
        seed: 2,
        indexers: vec![IndexerSpec::new("ix")],
        servers: vec![
            ServerSpec::new("slow")
                .file("iso/distro.iso", 300_000)
                .faults(slow),
            ServerSpec::new("fast").file("iso/distro.iso", 300_000),
        ],
    })
    .await?;
    let client = Client::new(net.client_options(&[]))?;

    let found = client
        .search(&SearchTarget::Text("distro iso".into()))
        .await?;
    let hit = &found.response.hits[0];
    println!(
        "{} {} bytes, {} sources",
        hit.record.name,
        hit.record.size_bytes,
        hit.sources.len()
    );

    let out = net.work_dir().join("distro.iso");
    let report = client
        .download(&hit.record.hash, &out, &AutoConfirm)
        .await?;
    println!("{}", wire::encode(&report)?);
    net.shutdown().await;
    Ok(())
}
