use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use pps_core::Dictionary;
use pps_harvest::{HarvestOptions, HttpClientConfig, HttpSearchClient, LocalIndex, ScheduleConfig, SearchClient};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Service configuration, read from a TOML file.
///
/// Relative paths are resolved against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub store_path: PathBuf,
    /// `ppsdict` file installed into an empty ledger. The built-in seed
    /// dictionary is used when unset.
    pub dictionary_path: Option<PathBuf>,
    /// Environment variable holding the token required to resolve
    /// proposals. Resolution is open when unset.
    pub admin_token_env: Option<String>,
    pub rate_limit: RateLimitConfig,
    pub harvest: HarvestConfig,
    pub search: Vec<SearchConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store_path: PathBuf::from("pps-ledger.jsonl"),
            dictionary_path: None,
            admin_token_env: None,
            rate_limit: RateLimitConfig::default(),
            harvest: HarvestConfig::default(),
            search: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimitConfig {
    /// Write requests allowed per client address and minute; 0 disables.
    pub writes_per_minute: u32,
    /// Extra requests a client may make in a burst.
    pub burst: u32,
}

impl Default for RateLimitConfig {
    fn default() -> Self {
        RateLimitConfig {
            writes_per_minute: 60,
            burst: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    pub interval_secs: u64,
    pub parallelism: usize,
    pub max_pages: usize,
    pub failure_threshold: u32,
    /// DOIs or external ids never ingested.
    pub allowlist: Vec<String>,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            interval_secs: 24 * 3600,
            parallelism: 4,
            max_pages: 100,
            failure_threshold: 5,
            allowlist: Vec::new(),
        }
    }
}

impl HarvestConfig {
    pub fn options(&self) -> HarvestOptions {
        HarvestOptions {
            parallelism: self.parallelism.max(1),
            max_pages: self.max_pages.max(1),
            allowlist: self.allowlist.iter().cloned().collect::<HashSet<_>>(),
            record_run: true,
        }
    }

    pub fn schedule(&self) -> ScheduleConfig {
        let mut config = ScheduleConfig::every(Duration::from_secs(self.interval_secs.max(1)));
        config.failure_threshold = self.failure_threshold.max(1);
        config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum SearchConfig {
    /// JSONL corpus searched in-process.
    Local {
        #[serde(default)]
        name: Option<String>,
        path: PathBuf,
        #[serde(default)]
        page_size: Option<usize>,
    },
    Http(HttpClientConfig),
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: display.clone(),
            source,
        })?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: display, message },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.harvest.interval_secs == 0 {
            return Err(ConfigError::Invalid("harvest.interval_secs must be positive".into()));
        }
        for s in &self.search {
            if let SearchConfig::Http(h) = s {
                if h.base_url.trim().is_empty() {
                    return Err(ConfigError::Invalid(format!(
                        "search client {:?} has no base_url",
                        h.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.store_path = resolve(base, &self.store_path);
        if let Some(p) = &self.dictionary_path {
            self.dictionary_path = Some(resolve(base, p));
        }
        for s in &mut self.search {
            if let SearchConfig::Local { path, .. } = s {
                *path = resolve(base, path);
            }
        }
    }

    /// The dictionary to install into an empty ledger.
    pub fn initial_dictionary(&self) -> Result<Dictionary, ConfigError> {
        match &self.dictionary_path {
            None => Ok(Dictionary::seed()),
            Some(p) => {
                let display = p.display().to_string();
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: display.clone(),
                    source,
                })?;
                Dictionary::parse(&text, &display).map_err(|e| ConfigError::Parse {
                    path: display,
                    message: e.to_string(),
                })
            }
        }
    }

    pub fn admin_token(&self) -> Result<Option<String>, ConfigError> {
        match &self.admin_token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| ConfigError::Invalid(format!("environment variable {var} is not set"))),
        }
    }

    pub fn search_clients(&self) -> Result<Vec<Arc<dyn SearchClient>>, ConfigError> {
        if self.search.is_empty() {
            return Err(ConfigError::Invalid("no [[search]] client configured".into()));
        }
        self.search
            .iter()
            .map(|s| -> Result<Arc<dyn SearchClient>, ConfigError> {
                match s {
                    SearchConfig::Local { name, path, page_size } => {
                        let name = name.clone().unwrap_or_else(|| path.display().to_string());
                        let mut index = LocalIndex::load(path)
                            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
                        index = index.renamed(&name);
                        if let Some(n) = page_size {
                            index = index.with_page_size(*n);
                        }
                        Ok(Arc::new(index))
                    }
                    SearchConfig::Http(h) => Ok(Arc::new(
                        HttpSearchClient::new(h.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?,
                    )),
                }
            })
            .collect()
    }
}
