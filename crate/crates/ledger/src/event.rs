use chrono::{DateTime, Utc};
use pps_core::dictionary::Dictionary;
use pps_core::{Assessment, DetectionHit, Fingerprint, PaperRecord, Trigger};
use serde::{Deserialize, Serialize};

use crate::records::{Alert, FingerprintProposal, HarvestRun, ProposalState};

pub const LOG_FORMAT: &str = "ppsledger";
pub const SCHEMA_VERSION: u32 = 1;

/// First line of every log and export file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub schema: u32,
}

impl LogHeader {
    pub fn current() -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            schema: SCHEMA_VERSION,
        }
    }
}

/// One durable ledger mutation. The log is a header line followed by one
/// JSON event per line; replaying it rebuilds the ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    DictionaryInstalled {
        at: DateTime<Utc>,
        dictionary: Dictionary,
    },
    PaperInserted {
        paper: PaperRecord,
    },
    PaperMerged {
        paper_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        doi: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        external_id: Option<String>,
        #[serde(default)]
        hits: Vec<DetectionHit>,
        #[serde(default)]
        triggers: Vec<Trigger>,
    },
    PubpeerLinked {
        paper_id: String,
        url: String,
    },
    AssessmentAppended {
        assessment: Assessment,
    },
    ProposalSubmitted {
        proposal: FingerprintProposal,
    },
    ProposalResolved {
        proposal_id: String,
        state: ProposalState,
        at: DateTime<Utc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
        /// Present on approval; installed together with the state change.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fingerprint: Option<Fingerprint>,
        dictionary_version: u64,
    },
    /// Restores a proposal in whatever state it was exported in.
    ProposalRestored {
        proposal: FingerprintProposal,
    },
    FingerprintRetired {
        fingerprint_id: String,
        at: DateTime<Utc>,
        dictionary_version: u64,
    },
    HarvestRecorded {
        run: HarvestRun,
    },
    AlertRaised {
        alert: Alert,
    },
}
