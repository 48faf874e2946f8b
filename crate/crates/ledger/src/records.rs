use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use pps_core::{Category, DetectionHit, ParseEnumError, ScreeningStatus, Trigger, Verdict};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalState {
    Open,
    Approved,
    Rejected,
}

impl ProposalState {
    pub fn as_str(self) -> &'static str {
        match self {
            ProposalState::Open => "open",
            ProposalState::Approved => "approved",
            ProposalState::Rejected => "rejected",
        }
    }
}

impl FromStr for ProposalState {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [ProposalState::Open, ProposalState::Approved, ProposalState::Rejected]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| ParseEnumError {
                kind: "proposal state",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintProposal {
    pub proposal_id: String,
    /// Canonical form of the proposed phrase.
    pub pattern: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_phrase: Option<String>,
    pub proposer: String,
    pub submitted: DateTime<Utc>,
    pub state: ProposalState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_at: Option<DateTime<Utc>>,
    /// Set on approval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint_id: Option<String>,
}

#[derive(Debug, Clone)]
pub struct NewProposal {
    /// Raw phrase; normalized before storage.
    pub pattern: String,
    pub category: Category,
    pub expected_phrase: Option<String>,
    pub proposer: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestError {
    pub fingerprint_id: String,
    pub error: String,
}

/// Statistics of one harvest pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestRun {
    pub run_id: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub dictionary_version: u64,
    pub queries_issued: usize,
    pub results_seen: usize,
    pub new_suspects: usize,
    /// Existing papers that gained hits or triggers.
    pub updated_suspects: usize,
    #[serde(default)]
    pub errors: Vec<HarvestError>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub raised: DateTime<Utc>,
    pub source: String,
    pub message: String,
}

/// A search result about to be merged into the ledger.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suspect {
    pub doi: Option<String>,
    pub external_id: Option<String>,
    pub title: String,
    pub venue: Option<String>,
    pub year: Option<i32>,
    pub record_url: Option<String>,
    pub hits: Vec<DetectionHit>,
    pub triggers: Vec<Trigger>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestOutcome {
    Inserted(String),
    Merged {
        paper_id: String,
        added_hits: usize,
        added_triggers: usize,
    },
    Unchanged(String),
}

impl IngestOutcome {
    pub fn paper_id(&self) -> &str {
        match self {
            IngestOutcome::Inserted(id) | IngestOutcome::Unchanged(id) => id,
            IngestOutcome::Merged { paper_id, .. } => paper_id,
        }
    }
}

/// Status filter for paper listings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusFilter {
    Awaiting,
    Assessed,
    Problematic,
    NotProblematic,
    Unsure,
}

impl StatusFilter {
    const ALL: [StatusFilter; 5] = [
        StatusFilter::Awaiting,
        StatusFilter::Assessed,
        StatusFilter::Problematic,
        StatusFilter::NotProblematic,
        StatusFilter::Unsure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StatusFilter::Awaiting => "awaiting",
            StatusFilter::Assessed => "assessed",
            StatusFilter::Problematic => "problematic",
            StatusFilter::NotProblematic => "not_problematic",
            StatusFilter::Unsure => "unsure",
        }
    }

    pub fn matches(self, status: ScreeningStatus) -> bool {
        matches!(
            (self, status),
            (StatusFilter::Awaiting, ScreeningStatus::Awaiting)
                | (StatusFilter::Assessed, ScreeningStatus::Assessed(_))
                | (
                    StatusFilter::Problematic,
                    ScreeningStatus::Assessed(Verdict::Problematic)
                )
                | (
                    StatusFilter::NotProblematic,
                    ScreeningStatus::Assessed(Verdict::NotProblematic)
                )
                | (StatusFilter::Unsure, ScreeningStatus::Assessed(Verdict::Unsure))
        )
    }
}

impl fmt::Display for StatusFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatusFilter {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StatusFilter::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| ParseEnumError {
                kind: "status",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PaperFilter {
    pub status: Option<StatusFilter>,
    pub category: Option<Category>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperSummary {
    pub paper_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    pub status: ScreeningStatus,
    pub categories: Vec<Category>,
    pub hit_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pubpeer_url: Option<String>,
    pub first_seen: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    /// 1-based.
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub total_pages: usize,
}
