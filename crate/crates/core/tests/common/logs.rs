//! Captures everything the process logs through `tracing`.

use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Default)]
pub struct Captured(Arc<Mutex<Vec<u8>>>);

impl Captured {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.0.lock().unwrap()).into_owned()
    }
}

impl Write for Captured {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

static CAPTURE: OnceLock<Captured> = OnceLock::new();

/// Install a global subscriber recording this crate's logs at every level.
pub fn capture() -> Captured {
    CAPTURE
        .get_or_init(|| {
            let sink = Captured::default();
            let writer = sink.clone();
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::new("distrifs=trace,info"))
                .with_ansi(false)
                .with_writer(move || writer.clone())
                .init();
            sink
        })
        .clone()
}
