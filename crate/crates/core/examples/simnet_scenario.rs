//! Run a scenario file: a topology, a download workload and timed events
//! such as server takedowns.
//!
//!     cargo run --example simnet_scenario [SCENARIO.json]

use distrifs::simnet::{run_scenario, Scenario};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| {
            std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("examples/scenarios/takedown.json")
        });
    let scenario: Scenario = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let result = run_scenario(&scenario).await?;
    println!(
        "{}: {}/{} verified, availability {:.2}, peak streams {}",
        path.display(),
        result.verified,
        result.attempted,
        result.availability,
        result.max_concurrent_streams
    );
    for (name, s) in &result.servers {
        println!(
            "  {name}: {} streams{}",
            s.streams,
            if s.down { ", taken down" } else { "" }
        );
    }
    Ok(())
}
