use std::fs;
use std::path::Path;

use pps_core::dictionary::fingerprint_id;
use pps_core::{normalize, Category, Fingerprint, FingerprintStatus, MatcherAutomaton, NormalizedText};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{SearchClient, SearchError, SearchPage, SearchResult};

pub const DEFAULT_PAGE_SIZE: usize = 50;

/// One line of a local index file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRecord {
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
    pub full_text: Option<String>,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot read index {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("index line {line}: {message}")]
    Record { line: usize, message: String },
}

struct Entry {
    record: IndexRecord,
    /// Normalized full text, or the title when there is none.
    searchable: NormalizedText,
}

/// Deterministic phrase search over an in-memory JSONL corpus.
///
/// Matching is exact and word-bounded in canonical space, through the same
/// automaton the detectors use. Results come in file order; the cursor is
/// the offset of the next match.
pub struct LocalIndex {
    name: String,
    entries: Vec<Entry>,
    page_size: usize,
}

impl LocalIndex {
    pub fn new(name: &str, records: Vec<IndexRecord>) -> Result<Self, IndexError> {
        let mut entries = Vec::with_capacity(records.len());
        for (i, record) in records.into_iter().enumerate() {
            if record.external_id.trim().is_empty() {
                return Err(IndexError::Record {
                    line: i + 1,
                    message: "external_id must not be empty".into(),
                });
            }
            let searchable = normalize(record.full_text.as_deref().unwrap_or(&record.title));
            entries.push(Entry { record, searchable });
        }
        Ok(LocalIndex {
            name: name.to_string(),
            entries,
            page_size: DEFAULT_PAGE_SIZE,
        })
    }

    pub fn from_jsonl(name: &str, source: &str) -> Result<Self, IndexError> {
        let mut records = Vec::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: IndexRecord = serde_json::from_str(line).map_err(|e| IndexError::Record {
                line: i + 1,
                message: e.to_string(),
            })?;
            if record.external_id.trim().is_empty() {
                return Err(IndexError::Record {
                    line: i + 1,
                    message: "external_id must not be empty".into(),
                });
            }
            records.push(record);
        }
        LocalIndex::new(name, records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|source| IndexError::Io {
            path: path.display().to_string(),
            source,
        })?;
        LocalIndex::from_jsonl(&path.display().to_string(), &source)
    }

    pub fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_page_size(mut self, page_size: usize) -> Self {
        self.page_size = page_size.max(1);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl SearchClient for LocalIndex {
    fn name(&self) -> &str {
        &self.name
    }

    fn search(&self, phrase: &str, cursor: Option<&str>) -> Result<SearchPage, SearchError> {
        let canonical = normalize(phrase).canonical;
        if canonical.is_empty() {
            return Err(SearchError::InvalidQuery("phrase must not be empty".into()));
        }
        let offset = match cursor {
            None => 0,
            Some(c) => c
                .parse::<usize>()
                .map_err(|_| SearchError::Fatal(format!("invalid cursor {c:?}")))?,
        };
        // The category is irrelevant here; the automaton only needs a
        // well-formed entry to match.
        let query = Fingerprint {
            id: fingerprint_id(&canonical),
            pattern: canonical,
            category: Category::Scigen,
            expected_phrase: None,
            status: FingerprintStatus::Active,
            provenance: String::new(),
        };
        let automaton = MatcherAutomaton::new(&[query]).map_err(|e| SearchError::InvalidQuery(e.to_string()))?;

        let mut matched = self
            .entries
            .iter()
            .filter(|e| !automaton.find_canonical(&e.searchable).is_empty());
        let page: Vec<SearchResult> = matched
            .by_ref()
            .skip(offset)
            .take(self.page_size)
            .map(|e| {
                let text = e.record.full_text.as_deref().unwrap_or(&e.record.title);
                SearchResult {
                    external_id: e.record.external_id.clone(),
                    doi: e.record.doi.clone(),
                    title: e.record.title.clone(),
                    year: e.record.year,
                    record_url: e.record.record_url.clone(),
                    snippet: automaton.scan(text).into_iter().next().map(|h| h.snippet),
                    full_text: e.record.full_text.clone(),
                }
            })
            .collect();
        let next_cursor = matched.next().map(|_| (offset + page.len()).to_string());
        Ok(SearchPage {
            results: page,
            next_cursor,
        })
    }
}
