//! Screening core for suspect scholarly publications.
//!
//! Documents are normalized into a canonical matching form
//! ([`normalize`]), then scanned for fingerprint phrases with a word-bounded
//! multi-pattern automaton ([`matcher`]). Fingerprints live in a versioned
//! [`dictionary`] and are applied by category-aware [`detect`]ors. The
//! [`pcfg`] module samples weighted grammars to build decoy corpora and to
//! rank grammar fragments as fingerprint candidates.

pub mod detect;
pub mod dictionary;
pub mod matcher;
pub mod model;
pub mod normalize;
pub mod pcfg;

pub use detect::{detect, explain_hit, DetectionReport, Detector, Explanation};
pub use dictionary::{fingerprint_id, load_dictionary, Dictionary};
pub use matcher::{compile, naive_scan, scan, MatcherAutomaton};
pub use model::{
    aggregate_verdicts, derive_status, normalize_doi, summarize, Assessment, Category, ContractError, DetectionHit,
    Fingerprint, FingerprintError, FingerprintStatus, PaperRecord, ParseEnumError, ScreeningStats, ScreeningStatus,
    Span, Trigger, Verdict,
};
pub use normalize::{normalize, NormalizedText};
