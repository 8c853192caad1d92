//! Persistent client settings and the user's indexer list.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::http::normalize_url;
use crate::wire::parse_http_url;

pub const CONFIG_FILE: &str = "client.toml";
pub const CONFIG_DIR_ENV: &str = "DISTRIFS_CONFIG_DIR";

/// Indexers written to a fresh configuration. Points at an indexer on the
/// local machine (`distrifs index` listens here by default).
pub const DEFAULT_INDEXERS: &[&str] = &["http://127.0.0.1:7700"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecurityMode {
    /// Metadata must be confirmed before a download starts.
    #[default]
    Strict,
    Permissive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexerEntry {
    pub url: String,
    #[serde(default)]
    pub is_default: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScannerSettings {
    pub enabled: bool,
    /// External command run as `<command> <path>`; exit 0 = clean, 1 = flagged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
}

impl Default for ScannerSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            command: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub indexers: Vec<IndexerEntry>,
    #[serde(default)]
    pub security_mode: SecurityMode,
    #[serde(default)]
    pub scanner: ScannerSettings,
    /// Overrides the `DistriFS/1.0` User-Agent. Discouraged: any other value
    /// makes this client distinguishable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_agent: Option<String>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            indexers: DEFAULT_INDEXERS
                .iter()
                .map(|u| IndexerEntry {
                    url: u.to_string(),
                    is_default: true,
                })
                .collect(),
            security_mode: SecurityMode::Strict,
            scanner: ScannerSettings::default(),
            user_agent: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path} is unreadable or corrupt: {detail}")]
    Corrupt { path: PathBuf, detail: String },
    #[error("cannot write config file {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid indexer URL: {0}")]
    InvalidUrl(String),
    #[error("indexer {0} is already configured")]
    Duplicate(String),
    #[error("indexer {0} is not configured")]
    Unknown(String),
    #[error("refusing to remove {0}: at least one indexer must remain")]
    LastIndexer(String),
}

/// Where the config lives: `$DISTRIFS_CONFIG_DIR`, else the platform
/// config directory.
pub fn default_config_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
        return PathBuf::from(dir);
    }
    dirs::config_dir()
        .unwrap_or_else(|| PathBuf::from("."))
        .join("distrifs")
}

#[derive(Debug, Clone)]
pub struct Bootstrapped {
    pub config: ClientConfig,
    /// True when the configuration could not be persisted.
    pub in_memory: bool,
    pub warnings: Vec<String>,
}

/// Load the configuration from `dir`, writing the defaults on first run.
pub fn bootstrap(dir: &Path) -> Result<Bootstrapped, ConfigError> {
    let path = dir.join(CONFIG_FILE);
    match std::fs::read_to_string(&path) {
        Ok(text) => {
            let config = parse(&path, &text)?;
            Ok(Bootstrapped {
                config,
                in_memory: false,
                warnings: Vec::new(),
            })
        }
        Err(e)
            if matches!(
                e.kind(),
                std::io::ErrorKind::NotFound | std::io::ErrorKind::NotADirectory
            ) =>
        {
            let config = ClientConfig::default();
            match save(dir, &config) {
                Ok(()) => Ok(Bootstrapped {
                    config,
                    in_memory: false,
                    warnings: Vec::new(),
                }),
                Err(e) => Ok(Bootstrapped {
                    config,
                    in_memory: true,
                    warnings: vec![format!("{e}; using built-in defaults for this run")],
                }),
            }
        }
        Err(e) => Err(ConfigError::Corrupt {
            path,
            detail: e.to_string(),
        }),
    }
}

fn parse(path: &Path, text: &str) -> Result<ClientConfig, ConfigError> {
    let config: ClientConfig = toml::from_str(text).map_err(|e| ConfigError::Corrupt {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if config.indexers.is_empty() {
        return Err(ConfigError::Corrupt {
            path: path.to_path_buf(),
            detail: "indexer list is empty".into(),
        });
    }
    Ok(config)
}

/// Write-temp-then-rename so concurrent readers never see a partial file.
pub fn save(dir: &Path, config: &ClientConfig) -> Result<(), ConfigError> {
    let path = dir.join(CONFIG_FILE);
    let write_err = |source| ConfigError::Write {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(write_err)?;
    let text = toml::to_string_pretty(config).expect("config serializes");
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(write_err)?;
    std::io::Write::write_all(&mut tmp, text.as_bytes()).map_err(write_err)?;
    tmp.as_file().sync_all().map_err(write_err)?;
    tmp.persist(&path).map_err(|e| write_err(e.error))?;
    Ok(())
}

impl ClientConfig {
    pub fn indexer_urls(&self) -> Vec<String> {
        self.indexers.iter().map(|i| i.url.clone()).collect()
    }

    pub fn add_indexer(&mut self, url: &str) -> Result<(), ConfigError> {
        let url = normalize_url(url);
        parse_http_url(&url).map_err(ConfigError::InvalidUrl)?;
        if self.indexers.iter().any(|i| i.url == url) {
            return Err(ConfigError::Duplicate(url));
        }
        self.indexers.push(IndexerEntry {
            url,
            is_default: false,
        });
        Ok(())
    }

    pub fn remove_indexer(&mut self, url: &str) -> Result<(), ConfigError> {
        let url = normalize_url(url);
        let pos = self
            .indexers
            .iter()
            .position(|i| i.url == url)
            .ok_or_else(|| ConfigError::Unknown(url.clone()))?;
        if self.indexers.len() == 1 {
            return Err(ConfigError::LastIndexer(url));
        }
        self.indexers.remove(pos);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum IndexerCommand<'a> {
    Add(&'a str),
    Remove(&'a str),
    List,
}

/// Apply an add/remove/list to the persisted indexer list.
pub fn manage_indexers(
    dir: &Path,
    cmd: IndexerCommand<'_>,
) -> Result<Vec<IndexerEntry>, ConfigError> {
    let mut config = bootstrap(dir)?.config;
    match cmd {
        IndexerCommand::Add(url) => config.add_indexer(url)?,
        IndexerCommand::Remove(url) => config.remove_indexer(url)?,
        IndexerCommand::List => return Ok(config.indexers),
    }
    save(dir, &config)?;
    Ok(config.indexers)
}
