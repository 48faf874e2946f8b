//! Durable screening ledger: suspect papers with their hits, append-only
//! assessments, fingerprint proposals and the versioned dictionary.
//!
//! The on-disk form is a single JSONL event log. Its first line is a schema
//! header (`{"format":"ppsledger","schema":1}`), every following line one
//! [`Event`]. Opening a ledger replays the log; each mutation is appended
//! and synced before it becomes visible.

mod event;
mod records;
mod store;

pub use event::{Event, LogHeader, LOG_FORMAT, SCHEMA_VERSION};
pub use records::{
    Alert, Decision, FingerprintProposal, HarvestError, HarvestRun, IngestOutcome, NewProposal, Page, PaperFilter,
    PaperSummary, ProposalState, StatusFilter, Suspect,
};
pub use store::{DictionaryVersion, Ledger, LedgerError, PaperView, Result, MAX_PAGE_SIZE};
