//! Random indexer graphs and a brute-force model of federated search.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use distrifs::hash::ContentHash;
use distrifs::indexer::{Indexer, IndexerConfig};
use distrifs::scan::FileRecord;
use distrifs::wire::{SearchRequest, SyncBatch, SyncRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpListener;

pub const POOL: usize = 6;

pub fn file_name(k: usize) -> String {
    format!("file-{k}.dat")
}

pub fn file_record(k: usize) -> FileRecord {
    FileRecord {
        hash: ContentHash::of(file_name(k).as_bytes()),
        name: file_name(k),
        size_bytes: 10,
        modified_unix_s: 1_700_000_000,
        rel_path: file_name(k),
    }
}

/// Server URL that indexer `i` attributes its files to.
pub fn server_of(i: usize) -> String {
    format!("http://srv{i}.example")
}

#[derive(Debug, Clone)]
pub struct FedCase {
    pub n: usize,
    /// Undirected links.
    pub edges: Vec<(usize, usize)>,
    /// File ids each indexer knows about.
    pub holdings: Vec<Vec<usize>>,
    pub origin: usize,
    pub hops: u32,
    pub wanted: usize,
}

impl FedCase {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=6);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.4) {
                    edges.push((a, b));
                }
            }
        }
        let holdings = (0..n)
            .map(|_| (0..POOL).filter(|_| rng.random_bool(0.25)).collect())
            .collect();
        Self {
            n,
            edges,
            holdings,
            origin: rng.random_range(0..n),
            hops: rng.random_range(0..=3),
            wanted: rng.random_range(0..POOL),
        }
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    fn local(&self, node: usize) -> BTreeMap<ContentHash, BTreeSet<String>> {
        let mut out = BTreeMap::new();
        if self.holdings[node].contains(&self.wanted) {
            out.entry(file_record(self.wanted).hash)
                .or_insert_with(BTreeSet::new)
                .insert(server_of(node));
        }
        out
    }

    /// Union of local answers over every loop-free forwarding path: a node
    /// answers from its own index when it can, and only otherwise forwards
    /// to neighbours not yet on the path, one hop of budget per step.
    pub fn oracle(&self) -> BTreeMap<ContentHash, BTreeSet<String>> {
        let adj = self.adjacency();
        let mut acc = BTreeMap::new();
        let mut path = vec![self.origin];
        self.walk(&adj, &mut path, self.hops, &mut acc);
        acc
    }

    fn walk(
        &self,
        adj: &[Vec<usize>],
        path: &mut Vec<usize>,
        budget: u32,
        acc: &mut BTreeMap<ContentHash, BTreeSet<String>>,
    ) {
        let node = *path.last().unwrap();
        let local = self.local(node);
        if !local.is_empty() || budget == 0 {
            for (h, s) in local {
                acc.entry(h).or_default().extend(s);
            }
            return;
        }
        for &next in &adj[node] {
            if !path.contains(&next) {
                path.push(next);
                self.walk(adj, path, budget - 1, acc);
                path.pop();
            }
        }
    }
}

pub struct FedNet {
    pub urls: Vec<String>,
    pub indexers: Vec<Arc<Indexer>>,
    tasks: Vec<tokio::task::JoinHandle<()>>,
    _dir: tempfile::TempDir,
}

impl Drop for FedNet {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

/// Start the case's indexers on loopback and load their holdings.
pub async fn spawn(case: &FedCase) -> FedNet {
    let dir = tempfile::tempdir().unwrap();
    let mut listeners = Vec::new();
    let mut urls = Vec::new();
    for _ in 0..case.n {
        let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
        urls.push(format!("http://{}", l.local_addr().unwrap()));
        listeners.push(l);
    }
    let adj = case.adjacency();
    let mut indexers = Vec::new();
    let mut tasks = Vec::new();
    for (i, listener) in listeners.into_iter().enumerate() {
        let mut cfg = IndexerConfig::new(&urls[i], dir.path().join(format!("ix{i}")));
        cfg.peers = adj[i].iter().map(|&j| urls[j].clone()).collect();
        cfg.peer_timeout = Duration::from_secs(5);
        let ix = Indexer::open(cfg).unwrap();
        let records = case.holdings[i]
            .iter()
            .map(|&k| SyncRecord {
                record: file_record(k),
                server_url: server_of(i),
            })
            .collect();
        ix.sync_push(&SyncBatch {
            origin: "http://seed.example".into(),
            records,
        })
        .unwrap();
        let router = distrifs::indexer::http::router(ix.clone());
        tasks.push(tokio::spawn(async move {
            axum::serve(listener, router).await.unwrap();
        }));
        indexers.push(ix);
    }
    FedNet {
        urls,
        indexers,
        tasks,
        _dir: dir,
    }
}

/// Run the case's search from its origin and flatten the answer.
pub async fn observe(net: &FedNet, case: &FedCase) -> BTreeMap<ContentHash, BTreeSet<String>> {
    let req = SearchRequest::by_text(file_name(case.wanted), case.hops);
    let resp = net.indexers[case.origin].search_federated(&req).await;
    let mut out = BTreeMap::new();
    for hit in resp.hits {
        out.entry(hit.record.hash)
            .or_insert_with(BTreeSet::new)
            .extend(hit.sources.into_iter().map(|s| s.url));
    }
    out
}
