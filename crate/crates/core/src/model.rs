//! Shared domain types and the derived screening status / statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fingerprint family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Scigen,
    Mathgen,
    Sbir,
    Tortured,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Scigen, Category::Mathgen, Category::Sbir, Category::Tortured];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Scigen => "scigen",
            Category::Mathgen => "mathgen",
            Category::Sbir => "sbir",
            Category::Tortured => "tortured",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseEnumError::new("category", s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintStatus {
    Proposed,
    Active,
    Retired,
}

/// A normalized phrase whose presence in a full text flags the paper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub id: String,
    pub pattern: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_phrase: Option<String>,
    pub status: FingerprintStatus,
    #[serde(default)]
    pub provenance: String,
}

impl Fingerprint {
    /// Checks the pattern shape and the tortured/expected-phrase pairing.
    pub fn validate(&self) -> Result<(), FingerprintError> {
        crate::normalize::validate_pattern(&self.pattern)?;
        if !self.pattern.is_ascii() {
            return Err(FingerprintError::NonAscii(self.pattern.clone()));
        }
        match (self.category, &self.expected_phrase) {
            (Category::Tortured, None) => Err(FingerprintError::MissingExpected),
            (Category::Tortured, Some(e)) if e.trim().is_empty() => Err(FingerprintError::MissingExpected),
            (c, Some(_)) if c != Category::Tortured => Err(FingerprintError::UnexpectedExpected(c)),
            _ => Ok(()),
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == FingerprintStatus::Active
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error(transparent)]
    Pattern(#[from] crate::normalize::PatternError),
    #[error("pattern {0:?} is not ASCII")]
    NonAscii(String),
    #[error("tortured fingerprint requires an expected phrase")]
    MissingExpected,
    #[error("{0} fingerprint must not carry an expected phrase")]
    UnexpectedExpected(Category),
}

/// Half-open character interval `[start, end)`.
///
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// One fingerprint occurrence inside one document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectionHit {
    pub fingerprint_id: String,
    pub category: Category,
    pub span: Span,
    pub snippet: String,
    pub matched_surface: String,
}

/// A fingerprint query that surfaced a paper in a search index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trigger {
    pub fingerprint_id: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pubpeer_url: Option<String>,
    pub first_seen: DateTime<Utc>,
    #[serde(default)]
    pub hits: Vec<DetectionHit>,
    /// Fingerprints whose search queries returned this paper. Papers
    /// harvested without full text carry only triggers and no hits.
    #[serde(default)]
    pub triggers: Vec<Trigger>,
}

impl PaperRecord {
    /// Categories flagged by hits or search triggers.
    pub fn categories(&self) -> Vec<Category> {
        let mut cats: Vec<Category> = self
            .hits
            .iter()
            .map(|h| h.category)
            .chain(self.triggers.iter().map(|t| t.category))
            .collect();
        cats.sort();
        cats.dedup();
        cats
    }

    pub fn is_addressable(&self) -> bool {
        self.doi.as_deref().is_some_and(|d| !d.is_empty()) || self.external_id.as_deref().is_some_and(|e| !e.is_empty())
    }
}

/// Canonical DOI key: lowercase, without resolver prefix.
pub fn normalize_doi(doi: &str) -> String {
    let d = doi.trim();
    let lower = d.to_lowercase();
    let stripped = [
        "https://doi.org/",
        "http://doi.org/",
        "https://dx.doi.org/",
        "http://dx.doi.org/",
        "doi:",
    ]
    .iter()
    .find_map(|p| lower.strip_prefix(p))
    .unwrap_or(&lower);
    stripped.trim().to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Problematic,
    NotProblematic,
    Unsure,
}

impl Verdict {
    pub const ALL: [Verdict; 3] = [Verdict::Problematic, Verdict::NotProblematic, Verdict::Unsure];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Problematic => "problematic",
            Verdict::NotProblematic => "not_problematic",
            Verdict::Unsure => "unsure",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ParseEnumError::new("verdict", s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {kind} {value:?}")]
pub struct ParseEnumError {
    pub kind: &'static str,
    pub value: String,
}

impl ParseEnumError {
    fn new(kind: &'static str, value: &str) -> Self {
        ParseEnumError {
            kind,
            value: value.to_string(),
        }
    }
}

/// One human verdict. Assessments are append-only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub paper_id: String,
    pub verdict: Verdict,
    pub assessor: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", content = "label", rename_all = "snake_case")]
pub enum ScreeningStatus {
    Awaiting,
    Assessed(Verdict),
}

impl ScreeningStatus {
    pub fn is_awaiting(&self) -> bool {
        matches!(self, ScreeningStatus::Awaiting)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("assessment for {found:?} passed with paper {expected:?}")]
    MismatchedPaper { expected: String, found: String },
    #[error("assessment references unknown paper {0:?}")]
    DanglingAssessment(String),
}

/// Aggregates verdicts: strict majority wins, anything else is `unsure`.
pub fn aggregate_verdicts<'a, I>(verdicts: I) -> Option<Verdict>
where
    I: IntoIterator<Item = &'a Verdict>,
{
    let mut counts = [0usize; 3];
    let mut total = 0usize;
    for v in verdicts {
        counts[*v as usize] += 1;
        total += 1;
    }
    if total == 0 {
        return None;
    }
    let winner = Verdict::ALL
        .into_iter()
        .find(|v| counts[*v as usize] * 2 > total)
        .unwrap_or(Verdict::Unsure);
    Some(winner)
}

pub fn derive_status(paper: &PaperRecord, assessments: &[Assessment]) -> Result<ScreeningStatus, ContractError> {
    if let Some(bad) = assessments.iter().find(|a| a.paper_id != paper.paper_id) {
        return Err(ContractError::MismatchedPaper {
            expected: paper.paper_id.clone(),
            found: bad.paper_id.clone(),
        });
    }
    Ok(match aggregate_verdicts(assessments.iter().map(|a| &a.verdict)) {
        None => ScreeningStatus::Awaiting,
        Some(v) => ScreeningStatus::Assessed(v),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreeningStats {
    pub total_suspects: usize,
    pub awaiting: usize,
    pub assessed: usize,
    pub assessed_problematic: usize,
    pub assessed_not_problematic: usize,
    pub assessed_unsure: usize,
    pub per_category_counts: BTreeMap<Category, usize>,
}

pub fn summarize(papers: &[PaperRecord], assessments: &[Assessment]) -> Result<ScreeningStats, ContractError> {
    let known: HashSet<&str> = papers.iter().map(|p| p.paper_id.as_str()).collect();
    let mut by_paper: HashMap<&str, Vec<Verdict>> = HashMap::new();
    for a in assessments {
        if !known.contains(a.paper_id.as_str()) {
            return Err(ContractError::DanglingAssessment(a.paper_id.clone()));
        }
        by_paper.entry(a.paper_id.as_str()).or_default().push(a.verdict);
    }

    let mut stats = ScreeningStats {
        per_category_counts: Category::ALL.into_iter().map(|c| (c, 0)).collect(),
        ..Default::default()
    };
    for paper in papers {
        stats.total_suspects += 1;
        let verdicts = by_paper.get(paper.paper_id.as_str());
        match verdicts.and_then(|v| aggregate_verdicts(v.iter())) {
            None => stats.awaiting += 1,
            Some(v) => {
                stats.assessed += 1;
                match v {
                    Verdict::Problematic => stats.assessed_problematic += 1,
                    Verdict::NotProblematic => stats.assessed_not_problematic += 1,
                    Verdict::Unsure => stats.assessed_unsure += 1,
                }
            }
        }
        for c in paper.categories() {
            *stats.per_category_counts.entry(c).or_default() += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper(id: &str) -> PaperRecord {
        PaperRecord {
            paper_id: id.into(),
            doi: Some(format!("10.1/{id}")),
            external_id: None,
            title: "t".into(),
            venue: None,
            year: None,
            record_url: None,
            pubpeer_url: None,
            first_seen: DateTime::UNIX_EPOCH,
            hits: vec![],
            triggers: vec![],
        }
    }

    fn verdict(paper_id: &str, v: Verdict) -> Assessment {
        Assessment {
            paper_id: paper_id.into(),
            verdict: v,
            assessor: "a".into(),
            timestamp: DateTime::UNIX_EPOCH,
            note: None,
        }
    }

    fn hit(cat: Category) -> DetectionHit {
        DetectionHit {
            fingerprint_id: "fp".into(),
            category: cat,
            span: Span::new(0, 3),
            snippet: "abc".into(),
            matched_surface: "abc".into(),
        }
    }

    // Brute-force majority: a verdict wins iff it beats the sum of all others.
    fn brute_majority(vs: &[Verdict]) -> Option<Verdict> {
        if vs.is_empty() {
            return None;
        }
        for cand in Verdict::ALL {
            let mine = vs.iter().filter(|v| **v == cand).count();
            let others = vs.len() - mine;
            if mine > others {
                return Some(cand);
            }
        }
        Some(Verdict::Unsure)
    }

    #[test]
    fn status_examples() {
        let p = paper("P");
        assert_eq!(derive_status(&p, &[]).unwrap(), ScreeningStatus::Awaiting);
        assert_eq!(
            derive_status(&p, &[verdict("P", Verdict::Problematic)]).unwrap(),
            ScreeningStatus::Assessed(Verdict::Problematic)
        );
        assert_eq!(
            derive_status(
                &p,
                &[
                    verdict("P", Verdict::Problematic),
                    verdict("P", Verdict::NotProblematic)
                ]
            )
            .unwrap(),
            ScreeningStatus::Assessed(Verdict::Unsure)
        );
    }

    #[test]
    fn status_matches_brute_force_up_to_three_verdicts() {
        let p = paper("P");
        let mut seqs: Vec<Vec<Verdict>> = vec![vec![]];
        for _ in 0..3 {
            let next: Vec<Vec<Verdict>> = seqs
                .iter()
                .filter(|s| s.len() == seqs.last().unwrap().len())
                .flat_map(|s| {
                    Verdict::ALL.into_iter().map(move |v| {
                        let mut t = s.clone();
                        t.push(v);
                        t
                    })
                })
                .collect();
            seqs.extend(next);
        }
        assert_eq!(seqs.len(), 1 + 3 + 9 + 27);
        for s in seqs {
            let assessments: Vec<_> = s.iter().map(|v| verdict("P", *v)).collect();
            let expected = match brute_majority(&s) {
                None => ScreeningStatus::Awaiting,
                Some(v) => ScreeningStatus::Assessed(v),
            };
            assert_eq!(derive_status(&p, &assessments).unwrap(), expected, "{s:?}");
        }
    }

    #[test]
    fn mismatched_paper_is_rejected() {
        let err = derive_status(&paper("P"), &[verdict("Q", Verdict::Unsure)]).unwrap_err();
        assert!(matches!(err, ContractError::MismatchedPaper { .. }));
    }

    #[test]
    fn summarize_empty() {
        let s = summarize(&[], &[]).unwrap();
        assert_eq!(s.total_suspects, 0);
        assert_eq!(s.awaiting + s.assessed, 0);
        assert!(s.per_category_counts.values().all(|c| *c == 0));
    }

    #[test]
    fn per_category_counts_papers_once() {
        let mut p = paper("P");
        p.hits = vec![hit(Category::Tortured); 3];
        let s = summarize(&[p], &[]).unwrap();
        assert_eq!(s.per_category_counts[&Category::Tortured], 1);
        assert_eq!(s.per_category_counts[&Category::Scigen], 0);
    }

    #[test]
    fn dangling_assessment_is_rejected() {
        let err = summarize(&[paper("P")], &[verdict("X", Verdict::Unsure)]).unwrap_err();
        assert_eq!(err, ContractError::DanglingAssessment("X".into()));
    }

    #[test]
    fn doi_normalization() {
        assert_eq!(normalize_doi("https://doi.org/10.1000/ABC"), "10.1000/abc");
        assert_eq!(normalize_doi("10.1000/abc"), normalize_doi("10.1000/ABC"));
        assert_eq!(normalize_doi(" doi:10.5/X "), "10.5/x");
    }

    #[test]
    fn enums_round_trip_through_strings() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        for v in Verdict::ALL {
            assert_eq!(v.as_str().parse::<Verdict>().unwrap(), v);
        }
        assert!("maybe".parse::<Verdict>().is_err());
        let json = serde_json::to_string(&ScreeningStatus::Assessed(Verdict::NotProblematic)).unwrap();
        assert_eq!(json, r#"{"status":"assessed","label":"not_problematic"}"#);
    }
}
