use std::env;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use reqwest::blocking::Client;
use reqwest::{StatusCode, Url};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::client::{SearchClient, SearchError, SearchPage, SearchResult};

const EXCERPT_CHARS: usize = 200;

/// Where each `SearchResult` field lives in the provider's JSON, as JSON
/// pointers (RFC 6901). `results` is relative to the response document; the
/// per-record pointers are relative to one element of that array. An empty
/// pointer disables an optional field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    pub results: String,
    pub next_cursor: String,
    pub external_id: String,
    pub doi: String,
    pub title: String,
    pub year: String,
    pub record_url: String,
    pub snippet: String,
    pub full_text: String,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            results: "/results".into(),
            next_cursor: "/next_cursor".into(),
            external_id: "/id".into(),
            doi: "/doi".into(),
            title: "/title".into(),
            year: "/year".into(),
            record_url: "/url".into(),
            snippet: "/snippet".into(),
            full_text: "/full_text".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpClientConfig {
    pub name: String,
    pub base_url: String,
    /// Name of the environment variable holding the API key; sent as a
    /// bearer token.
    pub api_key_env: Option<String>,
    pub query_param: String,
    pub cursor_param: String,
    pub page_size_param: String,
    pub page_size: usize,
    /// Upper bound on requests per second.
    pub requests_per_second: f64,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub backoff_initial_ms: u64,
    pub backoff_max_ms: u64,
    pub timeout_secs: u64,
    pub mapping: FieldMapping,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        HttpClientConfig {
            name: "http".into(),
            base_url: String::new(),
            api_key_env: None,
            query_param: "q".into(),
            cursor_param: "cursor".into(),
            page_size_param: "limit".into(),
            page_size: 50,
            requests_per_second: 2.0,
            max_attempts: 3,
            backoff_initial_ms: 500,
            backoff_max_ms: 8_000,
            timeout_secs: 30,
            mapping: FieldMapping::default(),
        }
    }
}

/// Spaces requests at least `1 / rate` seconds apart.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        let interval = if requests_per_second > 0.0 && requests_per_second.is_finite() {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Phrase search against a JSON HTTP API.
pub struct HttpSearchClient {
    config: HttpClientConfig,
    base: Url,
    api_key: Option<String>,
    http: Client,
    limiter: RateLimiter,
}

impl std::fmt::Debug for HttpSearchClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpSearchClient")
            .field("name", &self.config.name)
            .field("base", &self.base.as_str())
            .finish_non_exhaustive()
    }
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(EXCERPT_CHARS).collect();
    if body.chars().count() > EXCERPT_CHARS {
        s.push_str("...");
    }
    s
}

fn lookup<'a>(value: &'a Value, pointer: &str) -> Option<&'a Value> {
    if pointer.is_empty() {
        return None;
    }
    value.pointer(pointer).filter(|v| !v.is_null())
}

fn as_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

impl HttpSearchClient {
    pub fn new(config: HttpClientConfig) -> Result<Self, SearchError> {
        let base = Url::parse(&config.base_url)
            .map_err(|e| SearchError::Fatal(format!("invalid base_url {:?}: {e}", config.base_url)))?;
        let api_key = match &config.api_key_env {
            None => None,
            Some(var) => {
                Some(env::var(var).map_err(|_| SearchError::Fatal(format!("environment variable {var} is not set")))?)
            }
        };
        let http = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| SearchError::Fatal(e.to_string()))?;
        Ok(HttpSearchClient {
            limiter: RateLimiter::new(config.requests_per_second),
            config,
            base,
            api_key,
            http,
        })
    }

    pub fn config(&self) -> &HttpClientConfig {
        &self.config
    }

    fn url(&self, phrase: &str, cursor: Option<&str>) -> Url {
        let mut url = self.base.clone();
        {
            let mut q = url.query_pairs_mut();
            q.append_pair(&self.config.query_param, &format!("\"{phrase}\""));
            if !self.config.page_size_param.is_empty() {
                q.append_pair(&self.config.page_size_param, &self.config.page_size.to_string());
            }
            if let Some(c) = cursor {
                q.append_pair(&self.config.cursor_param, c);
            }
        }
        url
    }

    /// One request, classified. Returns the server's retry hint, if any.
    fn attempt(&self, url: &Url) -> Result<String, (SearchError, Option<Duration>)> {
        self.limiter.acquire();
        let mut req = self.http.get(url.clone()).header("accept", "application/json");
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            let err = if e.is_timeout() || e.is_connect() || e.is_request() {
                SearchError::Retryable(e.to_string())
            } else {
                SearchError::Fatal(e.to_string())
            };
            (err, None)
        })?;
        let status = resp.status();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.text().map_err(|e| (SearchError::Retryable(e.to_string()), None))?;
        if status.is_success() {
            return Ok(body);
        }
        let message = format!("HTTP {status}: {}", excerpt(&body));
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT
        {
            Err((SearchError::Retryable(message), retry_after))
        } else {
            Err((SearchError::Fatal(message), None))
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self
            .config
            .backoff_initial_ms
            .saturating_mul(1u64 << (attempt - 1).min(20))
            .min(self.config.backoff_max_ms.max(self.config.backoff_initial_ms));
        Duration::from_millis(ms)
    }

    /// Maps a provider response body to a page.
    pub fn parse_page(&self, body: &str) -> Result<SearchPage, SearchError> {
        let m = &self.config.mapping;
        let mapping_error = |message: String| SearchError::Mapping {
            message,
            excerpt: excerpt(body),
        };
        let doc: Value = serde_json::from_str(body).map_err(|e| mapping_error(format!("invalid JSON: {e}")))?;
        let items = doc
            .pointer(&m.results)
            .and_then(Value::as_array)
            .ok_or_else(|| mapping_error(format!("no result array at {:?}", m.results)))?;
        let mut results = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let external_id = lookup(item, &m.external_id)
                .and_then(as_text)
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| mapping_error(format!("result {i} has no id at {:?}", m.external_id)))?;
            let year = match lookup(item, &m.year) {
                None => None,
                Some(v) => Some(
                    v.as_i64()
                        .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
                        .and_then(|y| i32::try_from(y).ok())
                        .ok_or_else(|| mapping_error(format!("result {i} has a malformed year")))?,
                ),
            };
            results.push(SearchResult {
                external_id,
                doi: lookup(item, &m.doi).and_then(as_text),
                title: lookup(item, &m.title).and_then(as_text).unwrap_or_default(),
                year,
                record_url: lookup(item, &m.record_url).and_then(as_text),
                snippet: lookup(item, &m.snippet).and_then(as_text),
                full_text: lookup(item, &m.full_text).and_then(as_text),
            });
        }
        let next_cursor = lookup(&doc, &m.next_cursor).and_then(as_text).filter(|c| !c.is_empty());
        Ok(SearchPage { results, next_cursor })
    }
}

impl SearchClient for HttpSearchClient {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn search(&self, phrase: &str, cursor: Option<&str>) -> Result<SearchPage, SearchError> {
        if phrase.trim().is_empty() {
            return Err(SearchError::InvalidQuery("phrase must not be empty".into()));
        }
        let url = self.url(phrase, cursor);
        let attempts = self.config.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match self.attempt(&url) {
                Ok(body) => return self.parse_page(&body),
                Err((err, hint)) if err.is_retryable() && attempt < attempts => {
                    let cap = Duration::from_millis(self.config.backoff_max_ms.max(self.config.backoff_initial_ms));
                    let wait = hint.map_or_else(|| self.backoff(attempt), |h| h.min(cap));
                    log::warn!(
                        "{}: attempt {attempt}/{attempts} failed ({err}); retrying in {wait:?}",
                        self.config.name
                    );
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err((err, _)) => return Err(err),
            }
        }
    }
}
