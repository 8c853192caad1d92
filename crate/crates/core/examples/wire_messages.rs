//! Canonical JSON encoding and the three classes of decode error.
//!
//!     cargo run --example wire_messages

use distrifs::hash::ContentHash;
use distrifs::wire::{self, SearchRequest, SyncAck};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let by_text = SearchRequest::by_text("ubuntu iso", 2);
    let by_hash = SearchRequest::by_hash(ContentHash::of(b"x"), 1);
    println!("{}", wire::encode(&by_text)?);
    println!("{}", wire::encode(&by_hash)?);

    // unknown keys are ignored
    let ack: SyncAck = wire::decode(r#"{"accepted":3,"later":"field"}"#)?;
    println!("{ack:?}");

    for text in [
        r#"{"hop_budget":2"#,
        r#"{"query":"a","hop_budget":"two","visited":[]}"#,
        r#"{"query":"a","hop_budget":9,"visited":[]}"#,
        r#"{"hop_budget":1,"visited":[]}"#,
    ] {
        let err = wire::decode::<SearchRequest>(text).unwrap_err();
        println!("{text}\n  -> {} ({err})", err.code());
    }
    Ok(())
}
