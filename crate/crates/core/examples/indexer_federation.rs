//! Three indexers in a line, A - B - C, with a file known only to C.
//! A search at A finds it with two hops of budget but not with one.
//!
//!     cargo run --example indexer_federation

use distrifs::simnet::{IndexerSpec, ServerSpec, SimNet, Topology};
use distrifs::wire::SearchRequest;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = SimNet::spawn(Topology {
        seed: 1,
        indexers: vec![
            IndexerSpec::new("A").peers(&["B"]),
            IndexerSpec::new("B").peers(&["A", "C"]),
            IndexerSpec::new("C").peers(&["B"]),
        ],
        servers: vec![ServerSpec::new("s")
            .file("field-recording.wav", 4096)
            .register_with(&["C"])],
    })
    .await?;
    let a = &net.indexer("A").indexer;
    for hops in [0, 1, 2] {
        let resp = a
            .search_federated(&SearchRequest::by_text("recording", hops))
            .await;
        println!("hop budget {hops}: {} hit(s)", resp.hits.len());
        for hit in &resp.hits {
            println!("  {} from {}", hit.record.name, hit.sources[0].url);
        }
    }
    net.shutdown().await;
    Ok(())
}
