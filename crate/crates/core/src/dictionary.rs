//! Versioned fingerprint dictionary and its `ppsdict v1` file format.
//!
//! ```text
//! ppsdict v1
//! # category <TAB> pattern <TAB> expected phrase or empty <TAB> provenance
//! tortured <TAB> fake neural organization <TAB> artificial neural network <TAB> seed
//! ```

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Category, Fingerprint, FingerprintError, FingerprintStatus};

pub const DICTIONARY_HEADER: &str = "ppsdict v1";

/// The dictionary shipped with the crate.
pub const SEED_DICTIONARY: &str = include_str!("../data/seed.ppsdict");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dictionary {
    pub fingerprints: Vec<Fingerprint>,
    pub version: u64,
    pub loaded_from: String,
}

/// Stable fingerprint id derived from the pattern text.
pub fn fingerprint_id(pattern: &str) -> String {
    let digest = Sha256::digest(pattern.as_bytes());
    format!("fp-{}", &hex::encode(digest)[..12])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DictionaryIssue {
    MissingHeader {
        found: String,
    },
    Syntax {
        line: usize,
        message: String,
    },
    UnknownCategory {
        line: usize,
        value: String,
    },
    InvalidEntry {
        line: usize,
        source: FingerprintError,
    },
    DuplicatePattern {
        pattern: String,
        first_line: usize,
        first_id: String,
        second_line: usize,
        second_id: String,
    },
}

impl DictionaryIssue {
    pub fn line(&self) -> usize {
        match self {
            DictionaryIssue::MissingHeader { .. } => 1,
            DictionaryIssue::Syntax { line, .. }
            | DictionaryIssue::UnknownCategory { line, .. }
            | DictionaryIssue::InvalidEntry { line, .. } => *line,
            DictionaryIssue::DuplicatePattern { second_line, .. } => *second_line,
        }
    }
}

impl fmt::Display for DictionaryIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DictionaryIssue::MissingHeader { found } => {
                write!(f, "line 1: expected header {DICTIONARY_HEADER:?}, found {found:?}")
            }
            DictionaryIssue::Syntax { line, message } => write!(f, "line {line}: {message}"),
            DictionaryIssue::UnknownCategory { line, value } => {
                write!(f, "line {line}: unknown category {value:?}")
            }
            DictionaryIssue::InvalidEntry { line, source } => write!(f, "line {line}: {source}"),
            DictionaryIssue::DuplicatePattern {
                pattern,
                first_line,
                first_id,
                second_line,
                second_id,
            } => write!(
                f,
                "line {second_line}: duplicate pattern {pattern:?} ({second_id}) already defined on line {first_line} ({first_id})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct DictionaryError {
    pub issues: Vec<DictionaryIssue>,
}

impl fmt::Display for DictionaryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn load_dictionary(source: &str) -> Result<Dictionary, DictionaryError> {
    Dictionary::parse(source, "<memory>")
}

impl Default for Dictionary {
    fn default() -> Self {
        Dictionary::empty()
    }
}

impl Dictionary {
    pub fn empty() -> Self {
        Dictionary {
            fingerprints: Vec::new(),
            version: 0,
            loaded_from: String::new(),
        }
    }

    pub fn seed() -> Self {
        Dictionary::parse(SEED_DICTIONARY, "seed").expect("seed dictionary is valid")
    }

    /// Parses a `ppsdict v1` file. Every entry is loaded as active and the
    /// dictionary gets version 1.
    pub fn parse(source: &str, loaded_from: &str) -> Result<Self, DictionaryError> {
        let mut issues = Vec::new();
        let mut lines = source.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == DICTIONARY_HEADER => {}
            other => {
                issues.push(DictionaryIssue::MissingHeader {
                    found: other.map(|(_, l)| l.to_string()).unwrap_or_default(),
                });
                return Err(DictionaryError { issues });
            }
        }

        let mut fingerprints = Vec::new();
        let mut seen: HashMap<String, (usize, String)> = HashMap::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let text = raw.trim_end_matches('\r');
            if text.trim().is_empty() || text.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = text.split('\t').collect();
            if fields.len() != 4 {
                issues.push(DictionaryIssue::Syntax {
                    line,
                    message: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
                continue;
            }
            let category = match fields[0].trim().parse::<Category>() {
                Ok(c) => c,
                Err(_) => {
                    issues.push(DictionaryIssue::UnknownCategory {
                        line,
                        value: fields[0].to_string(),
                    });
                    continue;
                }
            };
            let pattern = fields[1].to_string();
            let expected = fields[2].trim();
            let fp = Fingerprint {
                id: fingerprint_id(&pattern),
                pattern,
                category,
                expected_phrase: (!expected.is_empty()).then(|| expected.to_string()),
                status: FingerprintStatus::Active,
                provenance: fields[3].trim().to_string(),
            };
            if let Err(source) = fp.validate() {
                issues.push(DictionaryIssue::InvalidEntry { line, source });
                continue;
            }
            if let Some((first_line, first_id)) = seen.get(&fp.pattern) {
                issues.push(DictionaryIssue::DuplicatePattern {
                    pattern: fp.pattern.clone(),
                    first_line: *first_line,
                    first_id: first_id.clone(),
                    second_line: line,
                    second_id: format!("{}@{line}", fp.id),
                });
                continue;
            }
            seen.insert(fp.pattern.clone(), (line, fp.id.clone()));
            fingerprints.push(fp);
        }

        if !issues.is_empty() {
            return Err(DictionaryError { issues });
        }
        Ok(Dictionary {
            fingerprints,
            version: 1,
            loaded_from: loaded_from.to_string(),
        })
    }

    /// Serializes active entries back to the file format.
    pub fn to_ppsdict(&self) -> String {
        let mut out = String::from(DICTIONARY_HEADER);
        out.push('\n');
        for fp in self.fingerprints.iter().filter(|f| f.is_active()) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                fp.category,
                fp.pattern,
                fp.expected_phrase.as_deref().unwrap_or(""),
                fp.provenance.replace(['\t', '\n'], " ")
            ));
        }
        out
    }

    pub fn get(&self, id: &str) -> Option<&Fingerprint> {
        self.fingerprints.iter().find(|f| f.id == id)
    }

    pub fn active(&self) -> impl Iterator<Item = &Fingerprint> {
        self.fingerprints.iter().filter(|f| f.is_active())
    }

    /// The non-retired fingerprint with this pattern, if any.
    pub fn find_live_pattern(&self, pattern: &str) -> Option<&Fingerprint> {
        self.fingerprints
            .iter()
            .find(|f| f.status != FingerprintStatus::Retired && f.pattern == pattern)
    }

    /// Checks every invariant of a dictionary assembled in code.
    pub fn validate(&self) -> Result<(), DictionaryError> {
        let mut issues = Vec::new();
        let mut seen: HashMap<&str, &str> = HashMap::new();
        let mut ids: HashMap<&str, ()> = HashMap::new();
        for (i, fp) in self.fingerprints.iter().enumerate() {
            let line = i + 1;
            if let Err(source) = fp.validate() {
                issues.push(DictionaryIssue::InvalidEntry { line, source });
            }
            if ids.insert(&fp.id, ()).is_some() {
                issues.push(DictionaryIssue::Syntax {
                    line,
                    message: format!("duplicate fingerprint id {}", fp.id),
                });
            }
            if fp.status == FingerprintStatus::Retired {
                continue;
            }
            if let Some(first_id) = seen.insert(&fp.pattern, &fp.id) {
                let first_line = self
                    .fingerprints
                    .iter()
                    .position(|f| f.id == first_id)
                    .map_or(0, |p| p + 1);
                issues.push(DictionaryIssue::DuplicatePattern {
                    pattern: fp.pattern.clone(),
                    first_line,
                    first_id: first_id.to_string(),
                    second_line: line,
                    second_id: fp.id.clone(),
                });
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(DictionaryError { issues })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_dictionary_loads() {
        let d = Dictionary::seed();
        assert!(d.fingerprints.len() >= 2);
        let fno = d.find_live_pattern("fake neural organization").unwrap();
        assert_eq!(fno.category, Category::Tortured);
        assert_eq!(fno.expected_phrase.as_deref(), Some("artificial neural network"));
        let skeptics = d
            .find_live_pattern("though many skeptics said it couldn't be done")
            .unwrap();
        assert_eq!(skeptics.category, Category::Scigen);
        assert_eq!(skeptics.expected_phrase, None);
        assert!(d.validate().is_ok());
    }

    #[test]
    fn header_only_is_empty() {
        let d = load_dictionary("ppsdict v1\n").unwrap();
        assert!(d.fingerprints.is_empty());
        assert_eq!(d.version, 1);
        let d = load_dictionary("ppsdict v1\n\n# nothing yet\n").unwrap();
        assert!(d.fingerprints.is_empty());
    }

    #[test]
    fn missing_header() {
        let err = load_dictionary("scigen\ta b\t\tx\n").unwrap_err();
        assert!(matches!(err.issues[0], DictionaryIssue::MissingHeader { .. }));
        assert!(load_dictionary("").is_err());
    }

    #[test]
    fn duplicate_pattern_reports_both_lines() {
        let src = "ppsdict v1\nscigen\tthe same words\t\ta\n# gap\nmathgen\tthe same words\t\tb\n";
        let err = load_dictionary(src).unwrap_err();
        assert_eq!(err.issues.len(), 1);
        match &err.issues[0] {
            DictionaryIssue::DuplicatePattern {
                first_line,
                second_line,
                first_id,
                second_id,
                ..
            } => {
                assert_eq!((*first_line, *second_line), (2, 4));
                assert_eq!(first_id, &fingerprint_id("the same words"));
                assert!(second_id.starts_with(first_id.as_str()));
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn unnormalized_pattern_rejected_with_line() {
        let src = "ppsdict v1\nscigen\tThe Same Words\t\ta\n";
        let err = load_dictionary(src).unwrap_err();
        assert_eq!(err.issues[0].line(), 2);
        assert!(matches!(err.issues[0], DictionaryIssue::InvalidEntry { .. }));
    }

    #[test]
    fn tortured_requires_expected_phrase() {
        let err = load_dictionary("ppsdict v1\ntortured\tfake neural organization\t\tx\n").unwrap_err();
        assert!(matches!(
            err.issues[0],
            DictionaryIssue::InvalidEntry {
                line: 2,
                source: FingerprintError::MissingExpected
            }
        ));
        let err = load_dictionary("ppsdict v1\nscigen\tfake neural organization\tsomething\tx\n").unwrap_err();
        assert!(matches!(
            err.issues[0],
            DictionaryIssue::InvalidEntry {
                source: FingerprintError::UnexpectedExpected(_),
                ..
            }
        ));
    }

    #[test]
    fn syntax_and_category_errors_are_collected() {
        let src = "ppsdict v1\nscigen only two\nbogus\ta b\t\tx\nsbir\ta b\t\tx\n";
        let err = load_dictionary(src).unwrap_err();
        assert_eq!(err.issues.len(), 2);
        assert_eq!(err.issues[0].line(), 2);
        assert_eq!(err.issues[1].line(), 3);
    }

    #[test]
    fn load_is_deterministic_and_round_trips() {
        let a = load_dictionary(SEED_DICTIONARY).unwrap();
        let b = load_dictionary(SEED_DICTIONARY).unwrap();
        assert_eq!(a, b);
        let again = load_dictionary(&a.to_ppsdict()).unwrap();
        assert_eq!(again.fingerprints, a.fingerprints);
    }
}
