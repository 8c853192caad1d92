//! Catalog a directory: every regular file with its hash, sorted by path.
//!
//!     cargo run --example scan_directory [DIR]

use distrifs::scan::scan_directory;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args_os()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src"));
    let report = scan_directory(&root)?;
    for f in &report.files {
        println!(
            "{}  {:>8}  {}",
            f.record.hash, f.record.size_bytes, f.record.rel_path
        );
    }
    for w in &report.warnings {
        eprintln!("skipped: {w}");
    }
    Ok(())
}
