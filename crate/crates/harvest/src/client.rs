use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One record returned by a search index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub external_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_text: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchPage {
    pub results: Vec<SearchResult>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    /// Transient failure; the same request may succeed later.
    #[error("transient search failure: {0}")]
    Retryable(String),
    #[error("search failed: {0}")]
    Fatal(String),
    /// The provider answered, but not in the configured shape.
    #[error("cannot map provider response: {message} (payload: {excerpt})")]
    Mapping { message: String, excerpt: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

impl SearchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SearchError::Retryable(_))
    }
}

/// A scholarly search index queried with exact phrases.
pub trait SearchClient: Send + Sync {
    /// Label used in logs and error records.
    fn name(&self) -> &str;

    /// One page of records containing `phrase`. Pass the returned cursor
    /// back to get the next page; `None` means the listing is complete.
    fn search(&self, phrase: &str, cursor: Option<&str>) -> Result<SearchPage, SearchError>;
}

/// Follows cursors until the listing ends or `max_pages` pages were read.
pub fn search_all(client: &dyn SearchClient, phrase: &str, max_pages: usize) -> Result<Vec<SearchResult>, SearchError> {
    let mut out = Vec::new();
    let mut cursor: Option<String> = None;
    for _ in 0..max_pages.max(1) {
        let page = client.search(phrase, cursor.as_deref())?;
        out.extend(page.results);
        match page.next_cursor {
            Some(next) if Some(&next) != cursor.as_ref() => cursor = Some(next),
            Some(_) => {
                return Err(SearchError::Fatal(format!(
                    "{} returned the same cursor twice",
                    client.name()
                )))
            }
            None => return Ok(out),
        }
    }
    log::warn!(
        "{}: stopped after {} pages for {phrase:?}",
        client.name(),
        max_pages.max(1)
    );
    Ok(out)
}
