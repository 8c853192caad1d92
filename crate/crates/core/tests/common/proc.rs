//! Running the `distrifs` binary from tests.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_distrifs")
}

/// A command with its config directory pointed at `config_dir` and this
/// crate's logs at full detail.
pub fn command(config_dir: &Path) -> Command {
    let mut cmd = Command::new(bin());
    cmd.env("DISTRIFS_CONFIG_DIR", config_dir)
        .env("RUST_LOG", "distrifs=trace,info")
        .stdin(Stdio::null());
    cmd
}

pub fn run(config_dir: &Path, args: &[&str]) -> Output {
    command(config_dir).args(args).output().unwrap()
}

/// A long-running `serve` or `index` process, killed on drop.
pub struct Daemon {
    pub child: Child,
    pub url: String,
    pub log: PathBuf,
}

impl Daemon {
    /// Start the process and wait for its "listening on" line. Stderr goes
    /// to `log`.
    pub fn start(config_dir: &Path, args: &[&str], log: PathBuf) -> Daemon {
        let stderr = std::fs::File::create(&log).unwrap();
        let mut child = command(config_dir)
            .args(args)
            .stdout(Stdio::piped())
            .stderr(stderr)
            .spawn()
            .unwrap();
        let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
        let first = lines
            .next()
            .expect("daemon exited before listening")
            .unwrap();
        let url = first
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {first:?}"))
            .to_string();
        // keep draining stdout so the child never blocks on a full pipe
        std::thread::spawn(move || for _ in lines {});
        Daemon { child, url, log }
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    pub fn log_text(&self) -> String {
        std::fs::read_to_string(&self.log).unwrap_or_default()
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        self.kill();
    }
}
