//! The `distrifs` command line.
//!
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::client::config::{self, IndexerCommand, SecurityMode};
use crate::client::{AutoConfirm, Client, ClientOptions, Confirm, SearchTarget};
use crate::hash::{hash_file, ContentHash, VerificationOutcome};
use crate::http::{error_body, http_client, normalize_url};
use crate::indexer::{Indexer, IndexerConfig};
use crate::scan::FileRecord;
use crate::server::{FileServer, ServeConfig};
use crate::simnet::{run_scenario, Scenario};
use crate::wire::{self, canonical_json, RegisterRequest, ServerRef, WireMessage, API_PREFIX};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "distrifs",
    version,
    about = "Decentralized HTTP file distribution"
)]
pub struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the content hash of a file.
    Hash { path: PathBuf },
    /// Check a file against an expected hash.
    Verify { path: PathBuf, hash: String },
    /// Search the configured indexers by name or hash.
    Search(SearchArgs),
    /// Download a file by hash and verify it.
    Get(GetArgs),
    /// Serve a directory.
    Serve(ServeArgs),
    /// Run an indexer.
    Index(IndexArgs),
    /// Manage the configured indexers.
    #[command(subcommand)]
    Indexers(IndexersCommand),
    /// Run a simulated network scenario.
    Simnet {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Words to match against file names.
    #[arg(required_unless_present = "hash", conflicts_with = "hash")]
    pub query: Option<String>,
    #[arg(long)]
    pub hash: Option<String>,
    #[arg(long, default_value_t = crate::client::DEFAULT_HOP_BUDGET)]
    pub hops: u32,
    /// Ask these indexers instead of the configured ones.
    #[arg(long = "indexer")]
    pub indexers: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GetArgs {
    pub hash: String,
    /// Output path; defaults to the file's name in the current directory.
    #[arg(short, long, visible_alias = "out")]
    pub output: Option<PathBuf>,
    /// Ask these indexers instead of the configured ones.
    #[arg(long = "indexer")]
    pub indexers: Vec<String>,
    /// Skip the metadata confirmation.
    #[arg(short, long)]
    pub yes: bool,
    /// Fetch from these servers instead of asking indexers.
    #[arg(long = "server")]
    pub servers: Vec<String>,
    /// Replace an existing output file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    pub dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7800")]
    pub bind: SocketAddr,
    #[arg(long)]
    pub name: Option<String>,
    /// Simultaneous downloads; 0 = unlimited.
    #[arg(long, default_value_t = 0)]
    pub max_concurrent: usize,
    #[arg(long, default_value_t = 120)]
    pub queue_timeout_secs: u64,
    #[arg(long, default_value_t = 60)]
    pub token_ttl_secs: u64,
    /// Base URL clients use to reach this server.
    #[arg(long)]
    pub public_url: Option<String>,
    /// Ask these indexers to crawl this server once it is listening.
    #[arg(long = "register")]
    pub register: Vec<String>,
    /// Rescan the directory this often; 0 = never.
    #[arg(long, default_value_t = 0)]
    pub rescan_secs: u64,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// TOML file with indexer settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<SocketAddr>,
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub public_url: Option<String>,
    #[arg(long = "peer")]
    pub peers: Vec<String>,
    #[arg(long = "upstream")]
    pub upstreams: Vec<String>,
    #[arg(long)]
    pub cutoff: Option<usize>,
    #[arg(long)]
    pub crawl_interval_secs: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum IndexersCommand {
    Add { url: String },
    Remove { url: String },
    List,
}

/// Indexer settings file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexFileConfig {
    pub name: Option<String>,
    pub bind: Option<SocketAddr>,
    pub public_url: Option<String>,
    pub db: Option<PathBuf>,
    #[serde(default)]
    pub peers: Vec<String>,
    #[serde(default)]
    pub upstreams: Vec<String>,
    pub cutoff: Option<usize>,
    pub crawl_interval_secs: Option<u64>,
    pub stale_after_missed: Option<u32>,
    pub peer_timeout_secs: Option<u64>,
}

pub const DEFAULT_INDEX_BIND: &str = "127.0.0.1:7700";

#[derive(Debug)]
enum Failure {
    Usage(String),
    Op(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Op(e.to_string())
    }
}

type CmdResult = Result<i32, Failure>;

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(matches!(cli.command, Command::Serve(_) | Command::Index(_)));
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return EXIT_FAILURE;
        }
    };
    match rt.block_on(dispatch(cli)) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Op(m)) => {
            eprintln!("error: {m}");
            EXIT_FAILURE
        }
    }
}

fn init_logging(daemon: bool) {
    let default = if daemon { "info" } else { "warn" };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_target(false)
        .with_writer(std::io::stderr)
        .try_init();
}

async fn dispatch(cli: Cli) -> CmdResult {
    let json = cli.json;
    match cli.command {
        Command::Hash { path } => cmd_hash(&path, json),
        Command::Verify { path, hash } => cmd_verify(&path, &hash, json),
        Command::Search(args) => cmd_search(args, json).await,
        Command::Get(args) => cmd_get(args, json).await,
        Command::Serve(args) => cmd_serve(args).await,
        Command::Index(args) => cmd_index(args).await,
        Command::Indexers(cmd) => cmd_indexers(cmd, json),
        Command::Simnet { scenario } => cmd_simnet(&scenario, json).await,
    }
}

fn parse_hash(s: &str) -> Result<ContentHash, Failure> {
    ContentHash::parse_lenient(s).map_err(|e| Failure::Usage(format!("invalid hash {s:?}: {e}")))
}

fn print_json<T: Serialize>(value: &T) {
    let v = serde_json::to_value(value).expect("serializable");
    println!("{}", canonical_json(&v));
}

fn print_wire<T: WireMessage>(msg: &T) -> Result<(), Failure> {
    println!("{}", wire::encode(msg)?);
    Ok(())
}

fn cmd_hash(path: &Path, json: bool) -> CmdResult {
    let (hash, size) = hash_file(path)?;
    if json {
        print_json(&serde_json::json!({
            "hash": hash,
            "path": path.display().to_string(),
            "size_bytes": size,
        }));
    } else {
        println!("{hash}  {}", path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_verify(path: &Path, expected: &str, json: bool) -> CmdResult {
    let expected = parse_hash(expected)?;
    let outcome = crate::client::verify(path, &expected)?;
    let (ok, actual) = match outcome {
        VerificationOutcome::Match => (true, expected),
        VerificationOutcome::Mismatch { actual } => (false, actual),
    };
    if json {
        print_json(&serde_json::json!({
            "actual": actual,
            "expected": expected,
            "match": ok,
            "path": path.display().to_string(),
        }));
    } else if ok {
        println!("OK  {}", path.display());
    } else {
        println!(
            "MISMATCH  {}  expected {expected}  actual {actual}",
            path.display()
        );
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn load_client(json: bool, indexers: &[String]) -> Result<ClientOptions, Failure> {
    let dir = config::default_config_dir();
    let boot = config::bootstrap(&dir)?;
    for w in &boot.warnings {
        eprintln!("warning: {w}");
    }
    let mut opts = ClientOptions::from_config(&boot.config);
    if !indexers.is_empty() {
        opts.indexers = indexers.iter().map(|u| normalize_url(u)).collect();
    }
    if opts.scanner.enabled && opts.scanner.adapter.is_none() && !json {
        eprintln!("warning: virus scanning is enabled but no scanner is configured");
    }
    Ok(opts)
}

async fn cmd_search(args: SearchArgs, json: bool) -> CmdResult {
    let target = match (&args.query, &args.hash) {
        (_, Some(h)) => SearchTarget::Hash(parse_hash(h)?),
        (Some(q), None) => SearchTarget::Text(q.clone()),
        (None, None) => return Err(Failure::Usage("give a query or --hash".into())),
    };
    if args.hops > wire::MAX_HOP_BUDGET {
        return Err(Failure::Usage(format!(
            "--hops must be <= {}",
            wire::MAX_HOP_BUDGET
        )));
    }
    let mut opts = load_client(json, &args.indexers)?;
    opts.hop_budget = args.hops;
    let client = Client::new(opts)?;
    let found = client.search(&target).await.map_err(|e| match e {
        crate::client::ClientError::InvalidSearch(m) => Failure::Usage(m),
        e => Failure::Op(e.to_string()),
    })?;
    for w in &found.warnings {
        eprintln!("warning: {w}");
    }
    for u in &found.unreachable {
        eprintln!("warning: indexer unreachable: {u}");
    }
    if json {
        print_wire(&found.response)?;
        return Ok(EXIT_OK);
    }
    if found.response.hits.is_empty() {
        println!("no results");
    }
    for hit in &found.response.hits {
        println!(
            "{}  {:>12}  {}  ({} source{})",
            hit.record.hash,
            hit.record.size_bytes,
            hit.record.name,
            hit.sources.len(),
            if hit.sources.len() == 1 { "" } else { "s" }
        );
    }
    if found.response.truncated {
        println!("(results truncated)");
    }
    Ok(EXIT_OK)
}

struct PromptConfirm;

impl Confirm for PromptConfirm {
    fn confirm(&self, record: &FileRecord, server: &str) -> bool {
        eprintln!(
            "{}\n  size {} bytes\n  hash {}\n  from {server}",
            record.name, record.size_bytes, record.hash
        );
        eprint!("Download? [y/N] ");
        let _ = std::io::stderr().flush();
        let mut line = String::new();
        if std::io::stdin().lock().read_line(&mut line).is_err() {
            return false;
        }
        matches!(line.trim(), "y" | "Y" | "yes" | "YES" | "Yes")
    }
}

async fn cmd_get(args: GetArgs, json: bool) -> CmdResult {
    let hash = parse_hash(&args.hash)?;
    let opts = load_client(json, &args.indexers)?;
    let strict = opts.security_mode == SecurityMode::Strict;
    let client = Client::new(opts)?;

    let (sources, name) = if args.servers.is_empty() {
        let found = client.search(&SearchTarget::Hash(hash)).await?;
        match found
            .response
            .hits
            .into_iter()
            .find(|h| h.record.hash == hash)
        {
            Some(hit) => (hit.sources, hit.record.name),
            None => return Err(Failure::Op(format!("no server offers {hash}"))),
        }
    } else {
        let sources: Vec<ServerRef> = args
            .servers
            .iter()
            .map(|s| ServerRef::unmeasured(normalize_url(s)))
            .collect();
        let mut name = None;
        for s in &sources {
            if let Ok(r) = client.metadata(&s.url, &hash).await {
                name = Some(r.name);
                break;
            }
        }
        (sources, name.unwrap_or_else(|| hash.to_hex()))
    };
    let out = args.output.unwrap_or_else(|| PathBuf::from(&name));
    if args.force && out.exists() {
        std::fs::remove_file(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    }
    let confirm: &dyn Confirm = if args.yes || !strict {
        &AutoConfirm
    } else {
        &PromptConfirm
    };
    let report = client.download_from(&hash, &sources, &out, confirm).await?;
    if json {
        print_wire(&report)?;
    } else if report.is_verified() {
        println!("verified  {}  {}", report.actual, report.output_path);
        if let crate::client::scanner::ScanVerdict::Skipped(why) = &report.scanner {
            eprintln!("note: not scanned ({why})");
        }
    } else {
        println!(
            "BLOCKED  {}  quarantined at {}",
            match &report.verdict {
                crate::client::Verdict::Blocked(r) => r.as_str(),
                crate::client::Verdict::Verified => "",
            },
            report.quarantine_path.as_deref().unwrap_or("?")
        );
    }
    Ok(if report.is_verified() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

async fn cmd_serve(args: ServeArgs) -> CmdResult {
    let mut cfg = ServeConfig::new(&args.dir);
    if let Some(n) = args.name {
        cfg.name = n;
    }
    cfg.max_concurrent = args.max_concurrent;
    cfg.queue_timeout = Duration::from_secs(args.queue_timeout_secs);
    cfg.token_ttl = Duration::from_secs(args.token_ttl_secs);
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    let addr = listener.local_addr()?;
    let public = normalize_url(
        &args
            .public_url
            .clone()
            .unwrap_or_else(|| format!("http://{addr}")),
    );
    cfg.public_url = args.public_url.as_deref().map(normalize_url);
    let server = FileServer::new(cfg)?;
    let app = crate::server::http::router(server.clone());
    println!("listening on http://{addr}");
    let _ = std::io::stdout().flush();

    let serve = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await
    });
    if !args.register.is_empty() {
        let http = http_client(Some(Duration::from_secs(60)), None)?;
        for ix in &args.register {
            match register_with(&http, ix, &public).await {
                Ok(n) => tracing::info!(indexer = %ix, files = n, "registered"),
                Err(e) => tracing::warn!(indexer = %ix, "registration failed: {e}"),
            }
        }
    }
    if args.rescan_secs > 0 {
        let server = server.clone();
        let every = Duration::from_secs(args.rescan_secs);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                if let Err(e) = server.refresh_index().await {
                    tracing::warn!("{e}");
                }
            }
        });
    }
    serve.await.map_err(|e| e.to_string())??;
    Ok(EXIT_OK)
}

async fn register_with(http: &reqwest::Client, indexer: &str, url: &str) -> Result<u64, String> {
    let body = wire::encode(&RegisterRequest { url: url.into() }).map_err(|e| e.to_string())?;
    let resp = http
        .post(format!("{}{API_PREFIX}/register", normalize_url(indexer)))
        .header(reqwest::header::CONTENT_TYPE, "application/json")
        .body(body)
        .send()
        .await
        .map_err(|e| e.to_string())?;
    if !resp.status().is_success() {
        let b = error_body(resp).await;
        return Err(format!("{}: {}", b.error, b.detail));
    }
    let text = resp.text().await.map_err(|e| e.to_string())?;
    let result: wire::CrawlResult = wire::decode(&text).map_err(|e| e.to_string())?;
    Ok(result.files_indexed)
}

/// Merge the settings file with command-line flags.
pub fn index_settings(args: &IndexArgs) -> Result<(SocketAddr, IndexerConfig), String> {
    let file = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            toml::from_str::<IndexFileConfig>(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => IndexFileConfig::default(),
    };
    let bind = args
        .bind
        .or(file.bind)
        .unwrap_or_else(|| DEFAULT_INDEX_BIND.parse().unwrap());
    let db = args
        .db
        .clone()
        .or(file.db)
        .unwrap_or_else(|| config::default_config_dir().join("index"));
    let public = args
        .public_url
        .clone()
        .or(file.public_url)
        .unwrap_or_else(|| format!("http://{bind}"));
    let mut cfg = IndexerConfig::new(public, db);
    if let Some(n) = args.name.clone().or(file.name) {
        cfg.name = n;
    }
    cfg.peers = file.peers;
    cfg.peers.extend(args.peers.iter().cloned());
    cfg.upstreams = file.upstreams;
    cfg.upstreams.extend(args.upstreams.iter().cloned());
    if let Some(c) = args.cutoff.or(file.cutoff) {
        cfg.cutoff = c;
    }
    if let Some(s) = args.crawl_interval_secs.or(file.crawl_interval_secs) {
        if s == 0 {
            return Err("crawl interval must be positive".into());
        }
        cfg.crawl_interval = Duration::from_secs(s);
    }
    if let Some(n) = file.stale_after_missed {
        cfg.stale_after_missed = n;
    }
    if let Some(s) = file.peer_timeout_secs {
        cfg.peer_timeout = Duration::from_secs(s);
    }
    Ok((bind, cfg))
}

async fn cmd_index(args: IndexArgs) -> CmdResult {
    let (bind, mut cfg) = index_settings(&args).map_err(Failure::Usage)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    if args.public_url.is_none() && bind.port() == 0 {
        cfg.public_url = format!("http://{addr}");
    }
    let indexer: Arc<Indexer> = Indexer::open(cfg)?;
    let scheduler = indexer.spawn_scheduler();
    let app = crate::indexer::http::router(indexer.clone());
    println!("listening on http://{addr}");
    let _ = std::io::stdout().flush();
    tracing::info!(entries = indexer.entry_count(), "indexer ready");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    scheduler.abort();
    Ok(EXIT_OK)
}

fn cmd_indexers(cmd: IndexersCommand, json: bool) -> CmdResult {
    let dir = config::default_config_dir();
    let op = match &cmd {
        IndexersCommand::Add { url } => IndexerCommand::Add(url),
        IndexersCommand::Remove { url } => IndexerCommand::Remove(url),
        IndexersCommand::List => IndexerCommand::List,
    };
    let list = config::manage_indexers(&dir, op).map_err(|e| match e {
        config::ConfigError::InvalidUrl(_)
        | config::ConfigError::Duplicate(_)
        | config::ConfigError::Unknown(_)
        | config::ConfigError::LastIndexer(_) => Failure::Usage(e.to_string()),
        e => Failure::Op(e.to_string()),
    })?;
    if json {
        print_json(&list);
    } else {
        for entry in &list {
            println!(
                "{}{}",
                entry.url,
                if entry.is_default { "  (default)" } else { "" }
            );
        }
    }
    Ok(EXIT_OK)
}

async fn cmd_simnet(path: &Path, json: bool) -> CmdResult {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let scenario: Scenario =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let result = run_scenario(&scenario).await?;
    if json {
        print_wire(&result)?;
    } else {
        println!(
            "attempted {}  verified {}  blocked {}  failed {}  availability {:.3}  max streams {}  ({} ms)",
            result.attempted,
            result.verified,
            result.blocked,
            result.failed,
            result.availability,
            result.max_concurrent_streams,
            result.elapsed_ms
        );
        for e in &result.errors {
            println!("  error: {e}");
        }
    }
    Ok(EXIT_OK)
}
