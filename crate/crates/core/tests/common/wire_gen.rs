//! Generators for valid wire messages and a round-trip check.

use std::collections::HashSet;

use distrifs::hash::ContentHash;
use distrifs::scan::FileRecord;
use distrifs::wire::{
    self, CrawlResult, ErrorBody, FileList, IndexerInfo, PeerList, PeerRef, RegisterRequest,
    SearchHit, SearchRequest, SearchResponse, ServerInfo, ServerRef, SyncAck, SyncBatch,
    SyncRecord, TokenGrant, TokenRequest, WireMessage,
};
use proptest::prelude::*;
use serde_json::Value;

pub fn hash() -> impl Strategy<Value = ContentHash> {
    any::<[u8; 32]>().prop_map(ContentHash::from_bytes)
}

fn segment() -> impl Strategy<Value = String> {
    "[a-z0-9][a-zA-Z0-9 _.é-]{0,12}"
}

pub fn url() -> impl Strategy<Value = String> {
    (
        prop_oneof!["http", "https"],
        // no doubled hyphens: "xn--" style labels are reserved for IDNA
        "[a-z]([a-z0-9]|-[a-z0-9]){0,5}(\\.[a-z]{2,4})?",
        proptest::option::of(1u16..),
        proptest::option::of("/[a-z]{1,6}"),
    )
        .prop_map(|(scheme, host, port, path)| {
            let port = port.map(|p| format!(":{p}")).unwrap_or_default();
            format!("{scheme}://{host}{port}{}", path.unwrap_or_default())
        })
}

fn distinct_urls(max: usize) -> impl Strategy<Value = Vec<String>> {
    proptest::collection::hash_set(url(), 0..=max).prop_map(|s| s.into_iter().collect())
}

pub fn record() -> impl Strategy<Value = FileRecord> {
    (
        hash(),
        proptest::collection::vec(segment(), 0..3),
        segment(),
        any::<u64>(),
        any::<i64>(),
    )
        .prop_map(|(hash, dirs, name, size_bytes, modified_unix_s)| {
            let mut parts = dirs;
            parts.push(name.clone());
            FileRecord {
                hash,
                name,
                size_bytes,
                modified_unix_s,
                rel_path: parts.join("/"),
            }
        })
}

fn metric() -> impl Strategy<Value = Option<f64>> {
    proptest::option::of(prop_oneof![
        0.0f64..1e12,
        (0u32..100_000).prop_map(f64::from)
    ])
}

pub fn server_ref() -> impl Strategy<Value = ServerRef> {
    (
        url(),
        metric(),
        metric(),
        proptest::option::of(any::<i64>()),
    )
        .prop_map(
            |(url, latency_ms, throughput_bps, last_probed_unix_s)| ServerRef {
                url,
                latency_ms,
                throughput_bps,
                last_probed_unix_s,
            },
        )
}

pub fn search_request() -> impl Strategy<Value = SearchRequest> {
    let target = prop_oneof![
        "[a-z0-9]{1,8}( [a-zA-Z0-9-]{1,8}){0,2}".prop_map(|q| (Some(q), None)),
        hash().prop_map(|h| (None, Some(h))),
    ];
    (
        target,
        0u32..=wire::MAX_HOP_BUDGET,
        proptest::collection::vec(url(), 0..4),
    )
        .prop_map(|((query, hash), hop_budget, visited)| SearchRequest {
            query,
            hash,
            hop_budget,
            visited,
        })
}

pub fn search_hit() -> impl Strategy<Value = SearchHit> {
    (
        record(),
        proptest::collection::vec(server_ref(), 1..4),
        proptest::collection::vec(segment(), 0..3),
    )
        .prop_map(|(record, sources, alt_names)| {
            let mut seen = HashSet::new();
            let sources = sources
                .into_iter()
                .filter(|s| seen.insert(s.url.clone()))
                .collect();
            SearchHit {
                record,
                sources,
                alt_names,
            }
        })
}

pub fn search_response() -> impl Strategy<Value = SearchResponse> {
    (proptest::collection::vec(search_hit(), 0..4), any::<bool>()).prop_map(|(hits, truncated)| {
        let mut seen = HashSet::new();
        SearchResponse {
            hits: hits
                .into_iter()
                .filter(|h| seen.insert(h.record.hash))
                .collect(),
            truncated,
        }
    })
}

pub fn token_grant() -> impl Strategy<Value = TokenGrant> {
    (any::<[u8; 16]>(), url(), 1i64..).prop_map(|(raw, base, expires_unix_s)| {
        let token = hex::encode(raw);
        TokenGrant {
            download_url: format!("{base}/dl/{token}"),
            token,
            expires_unix_s,
        }
    })
}

pub fn sync_batch() -> impl Strategy<Value = SyncBatch> {
    (url(), proptest::collection::vec((record(), url()), 0..5)).prop_map(|(origin, recs)| {
        SyncBatch {
            origin,
            records: recs
                .into_iter()
                .map(|(record, server_url)| SyncRecord { record, server_url })
                .collect(),
        }
    })
}

/// One of every wire message type.
#[derive(Debug, Clone)]
pub enum AnyMessage {
    SearchRequest(SearchRequest),
    SearchResponse(SearchResponse),
    SearchHit(SearchHit),
    ServerRef(ServerRef),
    TokenGrant(TokenGrant),
    SyncBatch(SyncBatch),
    FileRecord(FileRecord),
    FileList(FileList),
    RegisterRequest(RegisterRequest),
    CrawlResult(CrawlResult),
    SyncAck(SyncAck),
    PeerList(PeerList),
    IndexerInfo(IndexerInfo),
    ServerInfo(ServerInfo),
    TokenRequest(TokenRequest),
    ErrorBody(ErrorBody),
}

pub fn any_message() -> impl Strategy<Value = AnyMessage> {
    use AnyMessage as M;
    prop_oneof![
        search_request().prop_map(M::SearchRequest),
        search_response().prop_map(M::SearchResponse),
        search_hit().prop_map(M::SearchHit),
        server_ref().prop_map(M::ServerRef),
        token_grant().prop_map(M::TokenGrant),
        sync_batch().prop_map(M::SyncBatch),
        record().prop_map(M::FileRecord),
        proptest::collection::vec(record(), 0..5).prop_map(|v| M::FileList(FileList(v))),
        url().prop_map(|url| M::RegisterRequest(RegisterRequest { url })),
        (any::<u64>(), any::<bool>()).prop_map(|(files_indexed, truncated)| M::CrawlResult(
            CrawlResult {
                files_indexed,
                truncated
            }
        )),
        any::<u64>().prop_map(|accepted| M::SyncAck(SyncAck { accepted })),
        (
            distinct_urls(4),
            proptest::collection::vec(any::<bool>(), 4)
        )
            .prop_map(|(urls, up)| {
                M::PeerList(PeerList {
                    peers: urls
                        .into_iter()
                        .zip(up)
                        .map(|(url, is_upstream)| PeerRef { url, is_upstream })
                        .collect(),
                })
            }),
        (".{0,12}", "[0-9]\\.[0-9]", any::<u64>()).prop_map(|(name, version, entries)| {
            M::IndexerInfo(IndexerInfo {
                name,
                version,
                entries,
            })
        }),
        (".{0,12}", "[0-9]\\.[0-9]", any::<u64>()).prop_map(|(name, version, files)| {
            M::ServerInfo(ServerInfo {
                name,
                version,
                files,
            })
        }),
        hash().prop_map(|hash| M::TokenRequest(TokenRequest { hash })),
        ("[a-z_]{1,12}", ".{0,40}").prop_map(|(e, d)| M::ErrorBody(ErrorBody::new(e, d))),
    ]
}

fn check_one<T: WireMessage + PartialEq + std::fmt::Debug>(msg: &T) -> Result<(), String> {
    let text = wire::encode(msg).map_err(|e| format!("encode: {e}"))?;
    let back: T = wire::decode(&text).map_err(|e| format!("decode {text}: {e}"))?;
    if &back != msg {
        return Err(format!(
            "round trip changed the message: {msg:?} -> {back:?}"
        ));
    }
    let again = wire::encode(&back).map_err(|e| format!("re-encode: {e}"))?;
    if again != text {
        return Err(format!("encoding not byte-stable:\n{text}\n{again}"));
    }
    // unknown keys must be ignored
    if let Ok(Value::Object(mut map)) = serde_json::from_str::<Value>(&text) {
        map.insert("zz_extension".into(), Value::from(1));
        let widened = Value::Object(map).to_string();
        let back: T = wire::decode(&widened).map_err(|e| format!("unknown key rejected: {e}"))?;
        if &back != msg {
            return Err("unknown key changed the message".into());
        }
    }
    Ok(())
}

/// encode → decode → equal, re-encoding is byte-identical, and an extra
/// key does not disturb decoding.
pub fn round_trip(msg: &AnyMessage) -> Result<(), String> {
    use AnyMessage as M;
    match msg {
        M::SearchRequest(m) => check_one(m),
        M::SearchResponse(m) => check_one(m),
        M::SearchHit(m) => check_one(m),
        M::ServerRef(m) => check_one(m),
        M::TokenGrant(m) => check_one(m),
        M::SyncBatch(m) => check_one(m),
        M::FileRecord(m) => check_one(m),
        M::FileList(m) => check_one(m),
        M::RegisterRequest(m) => check_one(m),
        M::CrawlResult(m) => check_one(m),
        M::SyncAck(m) => check_one(m),
        M::PeerList(m) => check_one(m),
        M::IndexerInfo(m) => check_one(m),
        M::ServerInfo(m) => check_one(m),
        M::TokenRequest(m) => check_one(m),
        M::ErrorBody(m) => check_one(m),
    }
}

/// Decode and re-encode every golden file; returns (file, outcome) pairs.
pub fn check_golden_files(dir: &std::path::Path) -> Vec<(String, Result<(), String>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|path| {
            let file = path.file_name().unwrap().to_string_lossy().into_owned();
            let type_name = file.split('.').next().unwrap().to_string();
            let text = std::fs::read_to_string(&path).unwrap();
            let text = text.trim_end_matches('\n');
            let normalized = match type_name.as_str() {
                "DownloadReport" => wire::decode::<distrifs::client::DownloadReport>(text)
                    .and_then(|m| wire::encode(&m)),
                "ScenarioResult" => wire::decode::<distrifs::simnet::ScenarioResult>(text)
                    .and_then(|m| wire::encode(&m)),
                t => wire::normalize_named(text, t),
            };
            let outcome = match normalized {
                Ok(out) if out == text => Ok(()),
                Ok(out) => Err(format!(
                    "re-encoded differently:\n  golden {text}\n  actual {out}"
                )),
                Err(e) => Err(e.to_string()),
            };
            (file, outcome)
        })
        .collect()
}
