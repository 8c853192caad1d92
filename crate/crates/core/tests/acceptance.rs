//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::future::Future;
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;
use std::pin::Pin;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::federation::{self, FedCase};
use common::proc::Daemon;
use distrifs::client::{AutoConfirm, Client, ClientOptions, SearchTarget};
use distrifs::hash::{compute_hash, ContentHash};
use distrifs::http::http_client;
use distrifs::server::gate::GateEvent;
use distrifs::server::{FileServer, ServeConfig};
use distrifs::simnet::{fixture_bytes, FaultSpec, IndexerSpec, ServerSpec, SimNet, Topology};
use distrifs::wire::{self, CrawlResult, IndexerInfo, SearchRequest, SearchResponse, USER_AGENT};
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn e<E: Display>(err: E) -> String {
    err.to_string()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn faults(latency_ms: u64, tamper: bool, throttle_bps: Option<u64>) -> FaultSpec {
    FaultSpec {
        latency_ms,
        tamper,
        throttle_bps,
    }
}

fn one_indexer(seed: u64, servers: Vec<ServerSpec>) -> Topology {
    Topology {
        seed,
        indexers: vec![IndexerSpec::new("ix")],
        servers,
    }
}

async fn integrity() -> Outcome {
    const SIZE: u64 = 256 * 1024;
    let started = Instant::now();
    let net = SimNet::spawn(one_indexer(
        1,
        vec![
            ServerSpec::new("tamper")
                .file("payload.bin", SIZE)
                .faults(faults(0, true, None)),
            ServerSpec::new("honest").file("payload.bin", SIZE),
        ],
    ))
    .await
    .map_err(e)?;
    let hash = net.hash_of("payload.bin").unwrap();
    let fixture = fixture_bytes(1, "payload.bin", SIZE);
    let tamper_url = net.server("tamper").url.clone();
    let dir = tempfile::tempdir().map_err(e)?;
    let (mut verified, mut corrupted, mut met_tamper) = (0, 0, 0);
    for i in 0..100 {
        let mut opts = net.client_options(&[]);
        opts.seed = Some(i);
        let client = Client::new(opts).map_err(e)?;
        let out = dir.path().join(format!("out-{i}"));
        let report = client
            .download(&hash, &out, &AutoConfirm)
            .await
            .map_err(e)?;
        if report.is_verified() {
            verified += 1;
        }
        if out.exists() && std::fs::read(&out).map_err(e)? != fixture {
            corrupted += 1;
        }
        if report.attempts.iter().any(|a| a.server == tamper_url) {
            met_tamper += 1;
        }
    }
    net.shutdown().await;
    let secs = started.elapsed().as_secs_f64();
    check(
        verified == 100 && corrupted == 0 && met_tamper > 0 && secs < 60.0,
        format!(
            "{verified}/100 verified, {corrupted} corrupted outputs, {met_tamper} runs hit the tampering server, {secs:.1}s"
        ),
    )
}

async fn single_use_tokens() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let content = vec![7u8; 32 * 1024];
    std::fs::write(dir.path().join("f.bin"), &content).map_err(e)?;
    let server = FileServer::new(ServeConfig::new(dir.path())).map_err(e)?;
    let url = common::serve(distrifs::server::http::router(server)).await;
    let http = http_client(Some(Duration::from_secs(30)), None).map_err(e)?;
    let hash = ContentHash::of(&content);
    let mut bad_rounds = Vec::new();
    for round in 0..50 {
        let grant: wire::TokenGrant = wire::decode(
            &http
                .post(format!("{url}/api/v1/token"))
                .body(format!(r#"{{"hash":"{hash}"}}"#))
                .send()
                .await
                .map_err(e)?
                .text()
                .await
                .map_err(e)?,
        )
        .map_err(e)?;
        let fetches = (0..64).map(|_| {
            let http = http.clone();
            let u = grant.download_url.clone();
            tokio::spawn(async move {
                let resp = http.get(&u).send().await.map_err(e)?;
                let status = resp.status().as_u16();
                let body = resp.bytes().await.map_err(e)?;
                Ok::<_, String>((status, ContentHash::of(&body) == hash))
            })
        });
        let (mut ok, mut gone, mut other) = (0, 0, 0);
        for r in futures::future::join_all(fetches).await {
            match r.map_err(e)?? {
                (200, true) => ok += 1,
                (410, _) => gone += 1,
                _ => other += 1,
            }
        }
        if (ok, gone, other) != (1, 63, 0) {
            bad_rounds.push(format!(
                "round {round}: {ok} ok, {gone} gone, {other} other"
            ));
        }
    }
    check(
        bad_rounds.is_empty(),
        if bad_rounds.is_empty() {
            "50/50 rounds gave 1 success and 63 gone".into()
        } else {
            bad_rounds.join("; ")
        },
    )
}

async fn queue_bound() -> Outcome {
    let net = SimNet::spawn(one_indexer(
        3,
        vec![ServerSpec {
            max_concurrent: 2,
            ..ServerSpec::new("s")
                .file("big.iso", 128 * 1024)
                .faults(faults(0, false, Some(512 * 1024)))
        }],
    ))
    .await
    .map_err(e)?;
    let hash = net.hash_of("big.iso").unwrap();
    let server = net.server("s");
    let gate = server.server.gate().clone();
    let edge = server.edge.clone();
    let stop = Arc::new(AtomicBool::new(false));
    let sampled_max = Arc::new(AtomicUsize::new(0));
    let sampler = {
        let (stop, sampled_max, gate, edge) = (
            stop.clone(),
            sampled_max.clone(),
            gate.clone(),
            edge.clone(),
        );
        tokio::spawn(async move {
            let mut samples = 0u64;
            while !stop.load(Ordering::SeqCst) {
                let now = gate.active().max(edge.stats.active_streams());
                sampled_max.fetch_max(now, Ordering::SeqCst);
                samples += 1;
                tokio::time::sleep(Duration::from_millis(1)).await;
            }
            samples
        })
    };
    let dir = tempfile::tempdir().map_err(e)?;
    let downloads = (0..20).map(|i| {
        let mut opts = net.client_options(&[]);
        opts.seed = Some(i);
        let out = dir.path().join(format!("c{i}"));
        tokio::spawn(async move {
            let client = Client::new(opts).map_err(e)?;
            client.download(&hash, &out, &AutoConfirm).await.map_err(e)
        })
    });
    let results = futures::future::join_all(downloads).await;
    stop.store(true, Ordering::SeqCst);
    let samples = sampler.await.map_err(e)?;
    let mut verified = 0;
    for r in results {
        if r.map_err(e)??.is_verified() {
            verified += 1;
        }
    }
    let events = gate.events();
    let arrived: Vec<u64> = events
        .iter()
        .filter_map(|ev| match ev {
            GateEvent::Arrived(t) => Some(*t),
            _ => None,
        })
        .collect();
    let granted: Vec<u64> = events
        .iter()
        .filter_map(|ev| match ev {
            GateEvent::Granted(t) => Some(*t),
            _ => None,
        })
        .collect();
    let timed_out = events
        .iter()
        .filter(|ev| matches!(ev, GateEvent::TimedOut(_)))
        .count();
    let sampled = sampled_max.load(Ordering::SeqCst);
    let fifo = arrived == granted && granted.len() == 20;
    let max_seen = sampled
        .max(edge.stats.max_concurrent_streams())
        .max(gate.high_water());
    net.shutdown().await;
    check(
        max_seen <= 2 && verified == 20 && fifo && timed_out == 0,
        format!(
            "peak active {max_seen} ({samples} samples), {verified}/20 verified, grants in arrival order: {fifo}, {timed_out} timeouts"
        ),
    )
}

async fn federation_search(
    ix: &distrifs::indexer::Indexer,
    name: &str,
    hops: u32,
) -> SearchResponse {
    ix.search_federated(&SearchRequest::by_text(name.to_string(), hops))
        .await
}

async fn federation() -> Outcome {
    let line = SimNet::spawn(Topology {
        seed: 4,
        indexers: vec![
            IndexerSpec::new("A").peers(&["B"]),
            IndexerSpec::new("B").peers(&["A", "C"]),
            IndexerSpec::new("C").peers(&["B"]),
        ],
        servers: vec![ServerSpec::new("s")
            .file("rare-album.flac", 1000)
            .register_with(&["C"])],
    })
    .await
    .map_err(e)?;
    let a = &line.indexer("A").indexer;
    let hop2 = federation_search(a, "rare-album", 2).await.hits.len();
    let hop1 = federation_search(a, "rare-album", 1).await.hits.len();
    line.shutdown().await;

    let pair = FedCase {
        n: 2,
        edges: vec![(0, 1)],
        holdings: vec![vec![], vec![]],
        origin: 0,
        hops: 8,
        wanted: 0,
    };
    let net = federation::spawn(&pair).await;
    let cycle =
        tokio::time::timeout(Duration::from_secs(15), federation::observe(&net, &pair)).await;
    drop(net);
    let cycle_ok = matches!(&cycle, Ok(r) if r.is_empty());

    let (mut matched, mut non_empty) = (0, 0);
    let mut mismatches = Vec::new();
    for seed in 0..100 {
        let case = FedCase::random(1000 + seed);
        let net = federation::spawn(&case).await;
        let got = federation::observe(&net, &case).await;
        let want = case.oracle();
        if !want.is_empty() {
            non_empty += 1;
        }
        if got == want {
            matched += 1;
        } else {
            mismatches.push(seed);
        }
    }
    check(
        hop2 == 1 && hop1 == 0 && cycle_ok && matched == 100,
        format!(
            "line: hop 2 found {hop2}, hop 1 found {hop1}; A<->B cycle terminated empty: {cycle_ok}; random topologies {matched}/100 match the model ({non_empty} with results){}",
            if mismatches.is_empty() { String::new() } else { format!(", mismatched seeds {mismatches:?}") }
        ),
    )
}

async fn cutoff() -> Outcome {
    let files = (0..55).fold(ServerSpec::new("s"), |s, i| {
        s.file(format!("f{i:02}.txt"), 64)
    });
    let net = SimNet::spawn(Topology {
        seed: 5,
        indexers: vec![IndexerSpec {
            cutoff: Some(50),
            ..IndexerSpec::new("ix")
        }],
        servers: vec![files],
    })
    .await
    .map_err(e)?;
    let ix = &net.indexer("ix").indexer;
    let crawl = ix.register_server(&net.server("s").url).await.map_err(e)?;
    let entries = ix.entry_count();
    net.shutdown().await;
    check(
        crawl
            == CrawlResult {
                files_indexed: 50,
                truncated: true,
            }
            && entries == 50,
        format!("crawl {crawl:?}, {entries} entries stored"),
    )
}

fn dir_size(path: &Path) -> u64 {
    walkdir::WalkDir::new(path)
        .into_iter()
        .filter_map(Result::ok)
        .filter_map(|d| d.metadata().ok())
        .filter(|m| m.is_file())
        .map(|m| m.len())
        .sum()
}

async fn start_daemon(
    config: &Path,
    args: Vec<String>,
    log: std::path::PathBuf,
) -> Result<Daemon, String> {
    let config = config.to_path_buf();
    tokio::task::spawn_blocking(move || {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        Daemon::start(&config, &args, log)
    })
    .await
    .map_err(e)
}

async fn persistence() -> Outcome {
    const FILES: usize = 1000;
    const SIZE: u64 = 110_000;
    let work = tempfile::tempdir().map_err(e)?;
    let root = work.path().join("files");
    std::fs::create_dir(&root).map_err(e)?;
    let mut hashes = Vec::new();
    for i in 0..FILES {
        let name = format!("track-{i:04}.bin");
        let bytes = fixture_bytes(6, &name, SIZE);
        hashes.push(ContentHash::of(&bytes));
        std::fs::write(root.join(&name), bytes).map_err(e)?;
    }
    let fixture_total = dir_size(&root);
    let server = FileServer::new(ServeConfig::new(&root)).map_err(e)?;
    let server_url = common::serve(distrifs::server::http::router(server)).await;

    let db = work.path().join("db");
    let args = vec![
        "index".to_string(),
        "--bind".into(),
        "127.0.0.1:0".into(),
        "--db".into(),
        db.to_str().unwrap().into(),
    ];
    let mut first = start_daemon(work.path(), args.clone(), work.path().join("ix1.log")).await?;
    let http = http_client(Some(Duration::from_secs(120)), None).map_err(e)?;
    let resp = http
        .post(format!("{}/api/v1/register", first.url))
        .body(format!(r#"{{"url":"{server_url}"}}"#))
        .send()
        .await
        .map_err(e)?;
    let crawl: CrawlResult = wire::decode(&resp.text().await.map_err(e)?).map_err(e)?;
    first.kill();

    let second = start_daemon(work.path(), args, work.path().join("ix2.log")).await?;
    let info: IndexerInfo = wire::decode(
        &http
            .get(format!("{}/api/v1/info", second.url))
            .send()
            .await
            .map_err(e)?
            .text()
            .await
            .map_err(e)?,
    )
    .map_err(e)?;
    let mut searchable = 0;
    for h in &hashes {
        let resp: SearchResponse = wire::decode(
            &http
                .get(format!("{}/api/v1/search?hash={h}", second.url))
                .send()
                .await
                .map_err(e)?
                .text()
                .await
                .map_err(e)?,
        )
        .map_err(e)?;
        if resp.hits.len() == 1 && resp.hits[0].sources.iter().any(|s| s.url == server_url) {
            searchable += 1;
        }
    }
    let store = dir_size(&db);
    drop(second);
    const MIB: u64 = 1024 * 1024;
    check(
        crawl.files_indexed == FILES as u64
            && info.entries == FILES as u64
            && searchable == FILES
            && store < 5 * MIB
            && fixture_total > 100 * MIB,
        format!(
            "indexed {}, after kill -9 and restart {} entries and {searchable}/{FILES} searchable; store {:.2} MiB for {:.1} MiB of files",
            crawl.files_indexed,
            info.entries,
            store as f64 / MIB as f64,
            fixture_total as f64 / MIB as f64
        ),
    )
}

const CLIENT_IP: IpAddr = IpAddr::V4(Ipv4Addr::new(127, 0, 0, 2));

async fn privacy(logs: &common::logs::Captured) -> Outcome {
    // requests really leave from the client address
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(e)?;
    let probe_url = format!("http://{}", listener.local_addr().map_err(e)?);
    let probe = http_client(Some(Duration::from_secs(2)), Some(CLIENT_IP)).map_err(e)?;
    let pending = tokio::spawn(async move { probe.get(probe_url).send().await });
    let (_, peer) = listener.accept().await.map_err(e)?;
    pending.abort();
    let source_ok = peer.ip() == CLIENT_IP;

    let net = SimNet::spawn(one_indexer(
        7,
        vec![ServerSpec::new("s").file("diary.txt", 5000)],
    ))
    .await
    .map_err(e)?;
    let mut opts = net.client_options(&[]);
    opts.local_address = Some(CLIENT_IP);
    let client = Client::new(opts).map_err(e)?;
    let dir = tempfile::tempdir().map_err(e)?;
    let hash = net.hash_of("diary.txt").unwrap();
    client
        .search(&SearchTarget::Text("diary".into()))
        .await
        .map_err(e)?;
    let report = client
        .download(&hash, &dir.path().join("d"), &AutoConfirm)
        .await
        .map_err(e)?;
    let mut agents = net.server("s").edge.stats.user_agents();
    agents.extend(net.indexer("ix").edge.stats.user_agents());
    let requests = net.server("s").edge.stats.requests() + net.indexer("ix").edge.stats.requests();
    let agents_ok = agents.len() as u64 == requests && agents.iter().all(|a| a == USER_AGENT);
    net.shutdown().await;

    // the same flow against separate serve and index processes
    let work = tempfile::tempdir().map_err(e)?;
    let files = work.path().join("files");
    std::fs::create_dir(&files).map_err(e)?;
    std::fs::write(files.join("notes.md"), b"private notes").map_err(e)?;
    let index = start_daemon(
        work.path(),
        vec![
            "index".into(),
            "--bind".into(),
            "127.0.0.1:0".into(),
            "--db".into(),
            work.path().join("db").to_str().unwrap().into(),
        ],
        work.path().join("index.log"),
    )
    .await?;
    let serve = start_daemon(
        work.path(),
        vec![
            "serve".into(),
            files.to_str().unwrap().into(),
            "--bind".into(),
            "127.0.0.1:0".into(),
            "--register".into(),
            index.url.clone(),
        ],
        work.path().join("serve.log"),
    )
    .await?;
    let mut opts = ClientOptions::new(vec![index.url.clone()]);
    opts.scanner = distrifs::client::scanner::ScannerHook::disabled();
    opts.local_address = Some(CLIENT_IP);
    let client = Client::new(opts).map_err(e)?;
    let hash = ContentHash::of(b"private notes");
    let deadline = Instant::now() + Duration::from_secs(10);
    let daemon_report = loop {
        match client
            .download(&hash, &work.path().join("notes.md"), &AutoConfirm)
            .await
        {
            Ok(r) => break r,
            Err(err) if Instant::now() > deadline => return Err(format!("daemon download: {err}")),
            Err(_) => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    };
    let daemon_logs = format!("{}{}", index.log_text(), serve.log_text());
    drop((index, serve));

    let mut leaks = Vec::new();
    for (source, text) in [("in-process", logs.text()), ("daemon", daemon_logs.clone())] {
        for needle in ["127.0.0.2", USER_AGENT] {
            if text.contains(needle) {
                leaks.push(format!("{source} log contains {needle}"));
            }
        }
    }
    let scraped = logs.text().lines().count() + daemon_logs.lines().count();
    check(
        source_ok && agents_ok && report.is_verified() && daemon_report.is_verified() && leaks.is_empty() && scraped > 0,
        format!(
            "source address {}; {} requests all with User-Agent {USER_AGENT:?}: {agents_ok}; {scraped} log lines scraped, leaks: {}",
            peer.ip(),
            agents.len(),
            if leaks.is_empty() { "none".into() } else { leaks.join(", ") }
        ),
    )
}

async fn selection() -> Outcome {
    let net = SimNet::spawn(one_indexer(
        8,
        vec![
            ServerSpec::new("fast")
                .file("f.bin", 1000)
                .faults(faults(30, false, None)),
            ServerSpec::new("mid")
                .file("f.bin", 1000)
                .faults(faults(90, false, None)),
            ServerSpec::new("slow")
                .file("f.bin", 1000)
                .faults(faults(200, false, None)),
            ServerSpec::new("tie-a")
                .file("g.bin", 1000)
                .faults(faults(50, false, None)),
            ServerSpec::new("tie-b")
                .file("g.bin", 1000)
                .faults(faults(55, false, None)),
        ],
    ))
    .await
    .map_err(e)?;
    let mut opts = net.client_options(&[]);
    opts.seed = Some(8);
    let client = Client::new(opts).map_err(e)?;
    let sources = |path: &str| {
        let client = &client;
        let hash = net.hash_of(path).unwrap();
        async move {
            let found = client.search(&SearchTarget::Hash(hash)).await.map_err(e)?;
            Ok::<_, String>((hash, found.response.hits[0].sources.clone()))
        }
    };
    let mut picks: BTreeMap<String, usize> = BTreeMap::new();
    for (path, _) in [("f.bin", ()), ("g.bin", ())] {
        let (hash, srcs) = sources(path).await?;
        for _ in 0..10 {
            let batch = (0..10).map(|_| client.select_server(&hash, &srcs));
            for chosen in futures::future::join_all(batch).await {
                let url = chosen.map_err(e)?.url;
                let name = net
                    .servers
                    .iter()
                    .find(|s| s.url == url)
                    .unwrap()
                    .name
                    .clone();
                *picks.entry(name).or_default() += 1;
            }
        }
    }
    net.shutdown().await;
    let count = |n: &str| picks.get(n).copied().unwrap_or(0);
    check(
        count("fast") >= 95 && count("tie-a") >= 1 && count("tie-b") >= 1,
        format!(
            "30/90/200 ms: fast {} mid {} slow {}; tied 50/55 ms: {} and {}",
            count("fast"),
            count("mid"),
            count("slow"),
            count("tie-a"),
            count("tie-b")
        ),
    )
}

async fn takedown() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for keep in ["s1", "s2", "s3"] {
        let mut net = SimNet::spawn(one_indexer(
            9,
            ["s1", "s2", "s3"]
                .iter()
                .map(|n| ServerSpec::new(*n).file("h.bin", 20_000))
                .collect(),
        ))
        .await
        .map_err(e)?;
        for name in ["s1", "s2", "s3"].into_iter().filter(|n| *n != keep) {
            net.take_down(name).await;
        }
        let removed = net.settle_eviction().await.map_err(e)?;
        let hash = net.hash_of("h.bin").unwrap();
        let dir = tempfile::tempdir().map_err(e)?;
        let mut verified = 0;
        for i in 0..20 {
            let mut opts = net.client_options(&[]);
            opts.seed = Some(i);
            let client = Client::new(opts).map_err(e)?;
            if let Ok(r) = client
                .download(&hash, &dir.path().join(format!("o{i}")), &AutoConfirm)
                .await
            {
                if r.is_verified() && r.server_used == net.server(keep).url {
                    verified += 1;
                }
            }
        }
        net.shutdown().await;
        ok &= verified == 20 && removed == 2;
        details.push(format!("only {keep} up: {verified}/20 ({removed} evicted)"));
    }
    check(ok, details.join("; "))
}

async fn hash_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mismatches = 0;
    let mut total = 0u64;
    for i in 0..1000 {
        let len = match i {
            0 => 0,
            1 => 1 << 20,
            _ => rng.random_range(0..=1usize << 20),
        };
        let mut bytes = vec![0u8; len];
        rng.fill_bytes(&mut bytes);
        total += len as u64;
        let oracle = hex::encode(ring::digest::digest(&ring::digest::SHA256, &bytes));
        let whole = ContentHash::of(&bytes).to_hex();
        let streamed = compute_hash(&bytes[..]).map_err(e)?.to_hex();
        if whole != oracle || streamed != oracle {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!(
            "1000 strings ({:.0} MiB), {mismatches} mismatches",
            total as f64 / (1 << 20) as f64
        ),
    )
}

fn wire_golden() -> Outcome {
    let golden = common::wire_gen::check_golden_files(&common::golden_dir());
    let bad: Vec<String> = golden
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|m| format!("{name}: {m}")))
        .collect();
    let covered: std::collections::BTreeSet<&str> = golden
        .iter()
        .map(|(n, _)| n.split('.').next().unwrap())
        .collect();
    let missing: Vec<&&str> = wire::WIRE_TYPES
        .iter()
        .filter(|t| !covered.contains(**t))
        .collect();

    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let round_trips = runner.run(&common::wire_gen::any_message(), |m| {
        common::wire_gen::round_trip(&m).map_err(TestCaseError::fail)
    });
    check(
        bad.is_empty() && missing.is_empty() && round_trips.is_ok(),
        format!(
            "{} golden files, failures {bad:?}, types without golden {missing:?}; 10000 round trips: {}",
            golden.len(),
            match &round_trips {
                Ok(()) => "ok".to_string(),
                Err(err) => err.to_string(),
            }
        ),
    )
}

type Criterion<'a> = (u32, &'a str, Pin<Box<dyn Future<Output = Outcome> + 'a>>);

#[tokio::main(flavor = "multi_thread")]
async fn main() {
    let logs = common::logs::capture();
    let criteria: Vec<Criterion> = vec![
        (1, "integrity under tampering", Box::pin(integrity())),
        (2, "single-use tokens", Box::pin(single_use_tokens())),
        (3, "queue bound and FIFO grants", Box::pin(queue_bound())),
        (4, "federated search", Box::pin(federation())),
        (5, "crawl cutoff", Box::pin(cutoff())),
        (6, "index persistence", Box::pin(persistence())),
        (7, "privacy headers and logs", Box::pin(privacy(&logs))),
        (8, "server selection", Box::pin(selection())),
        (9, "availability under takedown", Box::pin(takedown())),
        (10, "hash conformance", Box::pin(hash_oracle())),
        (
            11,
            "wire golden files and round trip",
            Box::pin(async { wire_golden() }),
        ),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        let started = Instant::now();
        let outcome = run.await;
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
