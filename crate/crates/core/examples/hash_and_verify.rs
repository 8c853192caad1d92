//! Hash a file and check it against an expected digest.
//!
//!     cargo run --example hash_and_verify [FILE]

use distrifs::hash::{hash_file, verify_file, ContentHash, VerificationOutcome};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = match std::env::args_os().nth(1) {
        Some(p) => p.into(),
        None => {
            let p = dir.path().join("hello.txt");
            std::fs::write(&p, b"hello, world\n")?;
            p
        }
    };
    let (hash, size) = hash_file(&path)?;
    println!("{hash}  {} ({size} bytes)", path.display());

    assert_eq!(verify_file(&path, &hash)?, VerificationOutcome::Match);
    let other = ContentHash::of(b"something else");
    if let VerificationOutcome::Mismatch { actual } = verify_file(&path, &other)? {
        println!("expected {other}\nactual   {actual}");
    }
    Ok(())
}
