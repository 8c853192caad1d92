//! Scripted workloads over a simulated network.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fixture_hash, SimError, SimNet, Topology};
use crate::client::{AutoConfirm, Client};
use crate::wire::WireMessage;

const MAX_REPORTED_ERRORS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    #[serde(default = "default_downloads")]
    pub downloads: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Fixture paths to fetch, drawn uniformly per download; every fixture
    /// path when empty.
    #[serde(default)]
    pub files: Vec<String>,
    /// Indexers the client is configured with; all when empty.
    #[serde(default)]
    pub client_indexers: Vec<String>,
}

fn default_downloads() -> usize {
    10
}

fn default_concurrency() -> usize {
    1
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            downloads: default_downloads(),
            concurrency: default_concurrency(),
            files: Vec::new(),
            client_indexers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ScenarioEvent {
    TakeDown {
        server: String,
        after_downloads: usize,
    },
    AdvanceClock {
        secs: i64,
        after_downloads: usize,
    },
    SettleEviction {
        after_downloads: usize,
    },
}

impl ScenarioEvent {
    fn after(&self) -> usize {
        match self {
            Self::TakeDown {
                after_downloads, ..
            }
            | Self::AdvanceClock {
                after_downloads, ..
            }
            | Self::SettleEviction { after_downloads } => *after_downloads,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub topology: Topology,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerObservation {
    pub streams: u64,
    pub max_concurrent_streams: usize,
    pub down: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub attempted: usize,
    pub verified: usize,
    pub blocked: usize,
    pub failed: usize,
    /// verified / attempted; 1.0 when nothing was attempted.
    pub availability: f64,
    /// Highest number of simultaneous download streams seen at any one
    /// server.
    pub max_concurrent_streams: usize,
    pub servers: BTreeMap<String, ServerObservation>,
    pub errors: Vec<String>,
    pub elapsed_ms: u64,
}

impl WireMessage for ScenarioResult {
    const TYPE_NAME: &'static str = "ScenarioResult";

    fn check(&self) -> Result<(), String> {
        if self.verified + self.blocked + self.failed != self.attempted {
            return Err("outcome counts must sum to attempted".into());
        }
        if !(0.0..=1.0).contains(&self.availability) {
            return Err("availability must be within [0, 1]".into());
        }
        Ok(())
    }
}

/// Spawn the scenario's network, run its workload and events, tear it down.
pub async fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult, SimError> {
    let started = Instant::now();
    let mut net = SimNet::spawn(scenario.topology.clone()).await?;
    let outcome = drive(&mut net, scenario).await;
    let servers = net
        .servers
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                ServerObservation {
                    streams: s.edge.stats.streams_started(),
                    max_concurrent_streams: s.edge.stats.max_concurrent_streams(),
                    down: s.edge.faults.down.load(std::sync::atomic::Ordering::SeqCst),
                },
            )
        })
        .collect::<BTreeMap<_, _>>();
    net.shutdown().await;
    let (attempted, verified, blocked, errors) = outcome?;
    let failed = attempted - verified - blocked;
    Ok(ScenarioResult {
        attempted,
        verified,
        blocked,
        failed,
        availability: if attempted == 0 {
            1.0
        } else {
            verified as f64 / attempted as f64
        },
        max_concurrent_streams: servers
            .values()
            .map(|s| s.max_concurrent_streams)
            .max()
            .unwrap_or(0),
        servers,
        errors,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}

async fn drive(
    net: &mut SimNet,
    scenario: &Scenario,
) -> Result<(usize, usize, usize, Vec<String>), SimError> {
    let wl = &scenario.workload;
    let topo = &scenario.topology;
    let mut targets = Vec::new();
    for s in &topo.servers {
        for f in &s.files {
            if (wl.files.is_empty() || wl.files.contains(&f.path))
                && !targets.iter().any(|(p, _)| p == &f.path)
            {
                targets.push((f.path.clone(), fixture_hash(topo.seed, &f.path, f.size)));
            }
        }
    }
    if let Some(missing) = wl
        .files
        .iter()
        .find(|p| !targets.iter().any(|(t, _)| t == *p))
    {
        return Err(SimError::Topology(format!(
            "workload names unknown file {missing}"
        )));
    }
    if targets.is_empty() && wl.downloads > 0 {
        return Err(SimError::Topology("no files to download".into()));
    }

    let names: Vec<&str> = wl.client_indexers.iter().map(String::as_str).collect();
    let mut opts = net.client_options(&names);
    opts.seed = Some(topo.seed);
    let client = Client::new(opts)?;
    let out_dir = net.work_dir().join("downloads");
    std::fs::create_dir_all(&out_dir)?;

    let mut events: Vec<&ScenarioEvent> = scenario.events.iter().collect();
    events.sort_by_key(|e| e.after());
    let mut events = events.into_iter().peekable();
    let mut rng = ChaCha8Rng::seed_from_u64(topo.seed);
    let (mut done, mut verified, mut blocked) = (0usize, 0usize, 0usize);
    let mut errors = Vec::new();
    let batch = wl.concurrency.max(1);

    while done < wl.downloads || events.peek().is_some() {
        while let Some(ev) = events.next_if(|e| e.after() <= done) {
            match ev {
                ScenarioEvent::TakeDown { server, .. } => net.take_down(server).await,
                ScenarioEvent::AdvanceClock { secs, .. } => net.advance_clock(*secs),
                ScenarioEvent::SettleEviction { .. } => {
                    net.settle_eviction().await?;
                }
            }
        }
        if done >= wl.downloads {
            // events scheduled past the end of the workload
            for ev in events.by_ref() {
                tracing::warn!(after = ev.after(), "event never reached");
            }
            break;
        }
        let n = batch.min(wl.downloads - done);
        let jobs = (0..n).map(|k| {
            let (path, hash) = &targets[rng.random_range(0..targets.len())];
            let file_name = path.rsplit('/').next().unwrap_or(path);
            let out = out_dir.join(format!("{}-{file_name}", done + k));
            let client = &client;
            async move { client.download(hash, &out, &AutoConfirm).await }
        });
        for r in futures::future::join_all(jobs).await {
            match r {
                Ok(report) if report.is_verified() => verified += 1,
                Ok(_) => blocked += 1,
                Err(e) => {
                    if errors.len() < MAX_REPORTED_ERRORS {
                        errors.push(e.to_string());
                    }
                }
            }
        }
        done += n;
    }
    Ok((done, verified, blocked, errors))
}
