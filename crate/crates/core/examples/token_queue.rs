//! The download gate on its own: two slots, six requesters, grants in
//! arrival order.
//!
//!     cargo run --example token_queue

use std::time::Duration;

use distrifs::hash::ContentHash;
use distrifs::server::gate::{Gate, GateConfig};

#[tokio::main]
async fn main() {
    let gate = Gate::new(GateConfig {
        max_concurrent: 2,
        queue_timeout: Duration::from_secs(5),
        token_ttl: Duration::from_secs(60),
    });
    let hash = ContentHash::of(b"file");
    let mut tasks = Vec::new();
    for i in 0..6 {
        let gate = gate.clone();
        tasks.push(tokio::spawn(async move {
            let issued = gate.acquire(hash).await.expect("granted");
            let (_, slot) = gate.consume(&issued.token).expect("first use");
            println!("requester {i} streaming (active {})", gate.active());
            tokio::time::sleep(Duration::from_millis(100)).await;
            drop(slot);
        }));
        // stagger arrivals so the order is well defined
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    for t in tasks {
        t.await.unwrap();
    }
    println!("high water {}", gate.high_water());
    for ev in gate.events() {
        println!("{ev:?}");
    }
}
