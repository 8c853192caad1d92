//! Pluggable malware scanning run after a download passes hash verification.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum ScanVerdict {
    Clean,
    Flagged(String),
    Skipped(String),
}

pub trait Scanner: Send + Sync {
    fn name(&self) -> &str;
    /// Inspect the file. Failures to run the scan must come back as
    /// `Flagged` so an unscannable file is never passed as clean.
    fn scan(&self, path: &Path) -> ScanVerdict;
}

/// Runs `<program> [args..] <path>`: exit 0 = clean, 1 = flagged.
#[derive(Debug, Clone)]
pub struct CommandScanner {
    program: String,
    args: Vec<String>,
}

impl CommandScanner {
    /// Split a command line on whitespace, e.g. `"clamscan --no-summary"`.
    pub fn parse(command_line: &str) -> Option<Self> {
        let mut parts = command_line.split_whitespace().map(str::to_string);
        let program = parts.next()?;
        Some(Self {
            program,
            args: parts.collect(),
        })
    }
}

impl Scanner for CommandScanner {
    fn name(&self) -> &str {
        &self.program
    }

    fn scan(&self, path: &Path) -> ScanVerdict {
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(path)
            .output();
        match output {
            Ok(out) => match out.status.code() {
                Some(0) => ScanVerdict::Clean,
                Some(1) => {
                    let detail = String::from_utf8_lossy(&out.stdout).trim().to_string();
                    ScanVerdict::Flagged(if detail.is_empty() {
                        format!("flagged by {}", self.program)
                    } else {
                        detail
                    })
                }
                code => ScanVerdict::Flagged(format!(
                    "scanner {} failed (exit {:?})",
                    self.program, code
                )),
            },
            Err(e) => ScanVerdict::Flagged(format!("scanner {} could not run: {e}", self.program)),
        }
    }
}

/// In-process stand-in adapter: flags files containing any of a set of byte
/// signatures.
#[derive(Debug, Clone)]
pub struct SignatureScanner {
    signatures: Vec<(String, Vec<u8>)>,
}

/// The standard antivirus test string.
pub const EICAR: &[u8] = br"X5O!P%@AP[4\PZX54(P^)7CC)7}$EICAR-STANDARD-ANTIVIRUS-TEST-FILE!$H+H*";

impl SignatureScanner {
    pub fn new(signatures: Vec<(String, Vec<u8>)>) -> Self {
        Self {
            signatures: signatures
                .into_iter()
                .filter(|(_, s)| !s.is_empty())
                .collect(),
        }
    }

    pub fn eicar() -> Self {
        Self::new(vec![("EICAR-Test-File".into(), EICAR.to_vec())])
    }
}

impl Scanner for SignatureScanner {
    fn name(&self) -> &str {
        "signature"
    }

    fn scan(&self, path: &Path) -> ScanVerdict {
        let mut file = match File::open(path) {
            Ok(f) => f,
            Err(e) => return ScanVerdict::Flagged(format!("unreadable: {e}")),
        };
        let overlap = self
            .signatures
            .iter()
            .map(|(_, s)| s.len())
            .max()
            .unwrap_or(1)
            - 1;
        let mut window: Vec<u8> = Vec::new();
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            let n = match file.read(&mut buf) {
                Ok(0) => return ScanVerdict::Clean,
                Ok(n) => n,
                Err(e) => return ScanVerdict::Flagged(format!("unreadable: {e}")),
            };
            window.extend_from_slice(&buf[..n]);
            for (name, sig) in &self.signatures {
                if window.windows(sig.len()).any(|w| w == sig.as_slice()) {
                    return ScanVerdict::Flagged(name.clone());
                }
            }
            let keep = window.len().min(overlap);
            window.drain(..window.len() - keep);
        }
    }
}

/// The client's scanning policy.
#[derive(Default, Clone)]
pub struct ScannerHook {
    pub enabled: bool,
    pub adapter: Option<Arc<dyn Scanner>>,
}

impl ScannerHook {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            adapter: None,
        }
    }

    pub fn with(adapter: impl Scanner + 'static) -> Self {
        Self {
            enabled: true,
            adapter: Some(Arc::new(adapter)),
        }
    }

    pub fn from_settings(settings: &super::config::ScannerSettings) -> Self {
        Self {
            enabled: settings.enabled,
            adapter: settings
                .command
                .as_deref()
                .and_then(CommandScanner::parse)
                .map(|c| Arc::new(c) as Arc<dyn Scanner>),
        }
    }

    pub fn run(&self, path: &Path) -> ScanVerdict {
        if !self.enabled {
            return ScanVerdict::Skipped("scanning disabled".into());
        }
        match &self.adapter {
            Some(s) => s.scan(path),
            None => {
                tracing::warn!("virus scanning is enabled but no scanner is configured");
                ScanVerdict::Skipped("no scanner configured".into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signature_found_across_chunk_boundary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        let mut data = vec![b'a'; 64 * 1024 - 10];
        data.extend_from_slice(EICAR);
        data.extend_from_slice(&[b'b'; 100]);
        std::fs::write(&path, &data).unwrap();
        assert!(matches!(
            SignatureScanner::eicar().scan(&path),
            ScanVerdict::Flagged(_)
        ));
        std::fs::write(&path, b"harmless").unwrap();
        assert_eq!(SignatureScanner::eicar().scan(&path), ScanVerdict::Clean);
    }

    #[cfg(unix)]
    #[test]
    fn command_scanner_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        std::fs::write(&path, b"x").unwrap();
        assert_eq!(
            CommandScanner::parse("true").unwrap().scan(&path),
            ScanVerdict::Clean
        );
        assert!(matches!(
            CommandScanner::parse("false").unwrap().scan(&path),
            ScanVerdict::Flagged(_)
        ));
        assert!(matches!(
            CommandScanner::parse("/nonexistent/scanner")
                .unwrap()
                .scan(&path),
            ScanVerdict::Flagged(_)
        ));
        assert!(CommandScanner::parse("   ").is_none());
    }

    #[test]
    fn hook_policies() {
        let p = Path::new("/nonexistent");
        assert!(matches!(
            ScannerHook::disabled().run(p),
            ScanVerdict::Skipped(_)
        ));
        let unconfigured = ScannerHook {
            enabled: true,
            adapter: None,
        };
        assert!(matches!(unconfigured.run(p), ScanVerdict::Skipped(_)));
    }
}
