//! Picking one server among the sources of a search hit.

use rand::Rng;

/// Servers whose latency is within this fraction of the best are tied.
pub const LATENCY_TIE_FRACTION: f64 = 0.20;

/// A reachable candidate with the latency the client just measured.
#[derive(Debug, Clone, PartialEq)]
pub struct Measured {
    pub url: String,
    pub latency_ms: f64,
    /// As reported by the indexer; unknown sorts below any known value.
    pub throughput_bps: Option<f64>,
}

/// Index of the chosen candidate: lowest latency, where anything within 20%
/// of the best counts as tied; ties go to the higher throughput, then to a
/// uniform random draw.
pub fn pick<R: Rng + ?Sized>(candidates: &[Measured], rng: &mut R) -> Option<usize> {
    let best = candidates
        .iter()
        .map(|c| c.latency_ms)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    let limit = best * (1.0 + LATENCY_TIE_FRACTION);
    let window: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].latency_ms <= limit)
        .collect();
    let top = window
        .iter()
        .map(|&i| candidates[i].throughput_bps.unwrap_or(-1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let finalists: Vec<usize> = window
        .into_iter()
        .filter(|&i| candidates[i].throughput_bps.unwrap_or(-1.0) == top)
        .collect();
    Some(finalists[rng.random_range(0..finalists.len())])
}
