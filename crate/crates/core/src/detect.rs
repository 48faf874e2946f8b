//! Category-aware detectors over a dictionary.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::Dictionary;
use crate::matcher::{CompileError, MatcherAutomaton};
use crate::model::{Category, DetectionHit, Fingerprint};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub paper_id: String,
    pub hits: Vec<DetectionHit>,
    pub categories_triggered: BTreeSet<Category>,
    pub dictionary_version: u64,
}

impl DetectionReport {
    pub fn has_hits(&self) -> bool {
        !self.hits.is_empty()
    }
}

/// A compiled view of the active fingerprints of one dictionary version,
/// optionally restricted to a set of categories.
#[derive(Debug, Clone)]
pub struct Detector {
    automaton: MatcherAutomaton,
    dictionary_version: u64,
}

impl Detector {
    pub fn new(dict: &Dictionary) -> Result<Self, CompileError> {
        Self::build(dict, |_| true)
    }

    pub fn for_categories(dict: &Dictionary, categories: &[Category]) -> Result<Self, CompileError> {
        Self::build(dict, |fp| categories.contains(&fp.category))
    }

    fn build(dict: &Dictionary, keep: impl Fn(&Fingerprint) -> bool) -> Result<Self, CompileError> {
        let active: Vec<Fingerprint> = dict.active().filter(|f| keep(f)).cloned().collect();
        Ok(Detector {
            automaton: MatcherAutomaton::new(&active)?,
            dictionary_version: dict.version,
        })
    }

    pub fn dictionary_version(&self) -> u64 {
        self.dictionary_version
    }

    pub fn pattern_count(&self) -> usize {
        self.automaton.pattern_count()
    }

    pub fn automaton(&self) -> &MatcherAutomaton {
        &self.automaton
    }

    pub fn detect(&self, paper_id: &str, doc: &str) -> DetectionReport {
        let hits = self.automaton.scan(doc);
        let categories_triggered = hits.iter().map(|h| h.category).collect();
        DetectionReport {
            paper_id: paper_id.to_string(),
            hits,
            categories_triggered,
            dictionary_version: self.dictionary_version,
        }
    }
}

/// One-shot detection; compiles the active fingerprints on every call.
pub fn detect(paper_id: &str, doc: &str, dict: &Dictionary) -> Result<DetectionReport, CompileError> {
    Ok(Detector::new(dict)?.detect(paper_id, doc))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub category: Category,
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_phrase: Option<String>,
    pub snippet: String,
}

impl fmt::Display for Explanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {:?}", self.category, self.pattern)?;
        if let Some(expected) = &self.expected_phrase {
            write!(f, " (expected {expected:?})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("hit references unknown fingerprint {0}")]
pub struct DanglingFingerprint(pub String);

/// Resolves a hit against any fingerprint, retired ones included.
pub fn explain_hit(hit: &DetectionHit, dict: &Dictionary) -> Result<Explanation, DanglingFingerprint> {
    let fp = dict
        .get(&hit.fingerprint_id)
        .ok_or_else(|| DanglingFingerprint(hit.fingerprint_id.clone()))?;
    Ok(Explanation {
        category: fp.category,
        pattern: fp.pattern.clone(),
        expected_phrase: fp.expected_phrase.clone(),
        snippet: hit.snippet.clone(),
    })
}
