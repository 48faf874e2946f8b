use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use pps_core::dictionary::{fingerprint_id, Dictionary};
use pps_core::{
    aggregate_verdicts, normalize, normalize_doi, summarize, Assessment, DetectionHit, Fingerprint, FingerprintStatus,
    PaperRecord, ScreeningStats, ScreeningStatus, Trigger, Verdict,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::event::{Event, LogHeader, LOG_FORMAT, SCHEMA_VERSION};
use crate::records::{
    Alert, Decision, FingerprintProposal, HarvestRun, IngestOutcome, NewProposal, Page, PaperFilter, PaperSummary,
    ProposalState, Suspect,
};

pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("{message}")]
    Conflict {
        message: String,
        existing_id: Option<String>,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("ledger i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

impl LedgerError {
    fn not_found(kind: &'static str, id: &str) -> Self {
        LedgerError::NotFound {
            kind,
            id: id.to_string(),
        }
    }

    fn conflict(message: String, existing_id: Option<String>) -> Self {
        LedgerError::Conflict { message, existing_id }
    }
}

pub type Result<T, E = LedgerError> = std::result::Result<T, E>;

/// A paper with its assessments (oldest first) and derived status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperView {
    pub paper: PaperRecord,
    pub assessments: Vec<Assessment>,
    pub status: ScreeningStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryVersion {
    pub version: u64,
    pub at: DateTime<Utc>,
    pub active_fingerprints: usize,
}

struct Wal {
    file: File,
}

impl Wal {
    fn append(&mut self, events: &[&Event]) -> io::Result<()> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()
    }
}

#[derive(Default)]
struct State {
    papers: Vec<PaperRecord>,
    by_id: HashMap<String, usize>,
    by_doi: HashMap<String, usize>,
    by_external: HashMap<String, usize>,
    assessments: Vec<Assessment>,
    assessments_by_paper: HashMap<String, Vec<usize>>,
    proposals: Vec<FingerprintProposal>,
    proposal_index: HashMap<String, usize>,
    dictionary: Arc<Dictionary>,
    dictionary_versions: Vec<DictionaryVersion>,
    harvest_runs: Vec<HarvestRun>,
    alerts: Vec<Alert>,
    events: usize,
    wal: Option<Wal>,
}

/// The durable store behind the screening service.
///
/// Reads share a read lock; every mutation takes the write lock, checks
/// the event against the current state, appends it to the log (fsync) and
/// only then applies it, so an acknowledged write is always on disk and
/// all mutations are linearized.
pub struct Ledger {
    state: RwLock<State>,
    path: Option<PathBuf>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("path", &self.path)
            .finish_non_exhaustive()
    }
}

fn paper_key_id(key: &str) -> String {
    let digest = Sha256::digest(key.as_bytes());
    format!("pps-{}", &hex::encode(digest)[..16])
}

fn non_empty(s: &Option<String>) -> Option<&str> {
    s.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger {
            state: RwLock::new(State::default()),
            path: None,
        }
    }

    /// Opens or creates a ledger file and replays its log.
    ///
    /// A final line without its newline is an unacknowledged write torn by
    /// a crash; it is cut off. Any other unreadable line is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let display = path.display().to_string();
        let mut state = State::default();

        let mut content = String::new();
        if path.exists() {
            File::open(&path)?.read_to_string(&mut content)?;
        }
        if !content.is_empty() && !content.ends_with('\n') {
            let keep = content.rfind('\n').map_or(0, |i| i + 1);
            log::warn!("{display}: dropping torn final record ({} bytes)", content.len() - keep);
            content.truncate(keep);
            OpenOptions::new().write(true).open(&path)?.set_len(keep as u64)?;
        }

        let corrupt = |line: usize, message: String| LedgerError::Corrupt {
            path: display.clone(),
            line,
            message,
        };
        let mut lines = content.lines().enumerate();
        match lines.next() {
            None => {
                let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
                serde_json::to_writer(&mut f, &LogHeader::current()).map_err(io::Error::from)?;
                f.write_all(b"\n")?;
                f.sync_all()?;
            }
            Some((_, header)) => {
                let header: LogHeader =
                    serde_json::from_str(header).map_err(|e| corrupt(1, format!("bad header: {e}")))?;
                if header.format != LOG_FORMAT || header.schema != SCHEMA_VERSION {
                    return Err(corrupt(
                        1,
                        format!(
                            "unsupported log {} schema {} (expected {LOG_FORMAT} schema {SCHEMA_VERSION})",
                            header.format, header.schema
                        ),
                    ));
                }
            }
        }
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let event: Event = serde_json::from_str(line).map_err(|e| corrupt(idx + 1, e.to_string()))?;
            state.check(&event).map_err(|e| corrupt(idx + 1, e.to_string()))?;
            state.apply(event);
        }

        state.wal = Some(Wal {
            file: OpenOptions::new().append(true).open(&path)?,
        });
        Ok(Ledger {
            state: RwLock::new(state),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Number of events applied since the ledger was created.
    pub fn event_count(&self) -> usize {
        self.state.read().events
    }

    // ---- dictionary -------------------------------------------------------

    pub fn dictionary(&self) -> Arc<Dictionary> {
        self.state.read().dictionary.clone()
    }

    pub fn dictionary_versions(&self) -> Vec<DictionaryVersion> {
        self.state.read().dictionary_versions.clone()
    }

    /// Replaces the dictionary. Every fingerprint referenced by a stored hit
    /// or trigger must still be present (in any state). Returns the new
    /// version number.
    pub fn install_dictionary(&self, mut dictionary: Dictionary) -> Result<u64> {
        let mut st = self.state.write();
        dictionary.version = match st.dictionary_versions.last() {
            None => dictionary.version.max(1),
            Some(_) => st.dictionary.version + 1,
        };
        let version = dictionary.version;
        st.commit(Event::DictionaryInstalled {
            at: Utc::now(),
            dictionary,
        })?;
        Ok(version)
    }

    /// Installs `dictionary` unless one is already installed. Returns the
    /// version in effect.
    pub fn ensure_dictionary(&self, dictionary: Dictionary) -> Result<u64> {
        if !self.state.read().dictionary_versions.is_empty() {
            return Ok(self.state.read().dictionary.version);
        }
        let mut st = self.state.write();
        if !st.dictionary_versions.is_empty() {
            return Ok(st.dictionary.version);
        }
        let version = dictionary.version.max(1);
        let mut dictionary = dictionary;
        dictionary.version = version;
        st.commit(Event::DictionaryInstalled {
            at: Utc::now(),
            dictionary,
        })?;
        Ok(version)
    }

    pub fn retire_fingerprint(&self, fingerprint_id: &str) -> Result<u64> {
        let mut st = self.state.write();
        let version = st.dictionary.version + 1;
        st.commit(Event::FingerprintRetired {
            fingerprint_id: fingerprint_id.to_string(),
            at: Utc::now(),
            dictionary_version: version,
        })?;
        Ok(version)
    }

    // ---- papers -----------------------------------------------------------

    /// Inserts a new suspect or merges it into the paper with the same DOI
    /// (or, failing that, the same external id). Merging only adds hits and
    /// triggers that are not already present, so re-ingesting is a no-op.
    pub fn ingest(&self, suspect: Suspect) -> Result<IngestOutcome> {
        let mut st = self.state.write();
        let doi = non_empty(&suspect.doi).map(normalize_doi);
        let external = non_empty(&suspect.external_id).map(str::to_string);
        if doi.is_none() && external.is_none() {
            return Err(LedgerError::Invalid(
                "suspect needs a DOI or an external id".to_string(),
            ));
        }

        // The DOI is authoritative. An external-id match only counts when it
        // cannot contradict the DOI; otherwise the record becomes its own
        // paper without the already claimed external id. Every ingested
        // record therefore ends up in the paper owning its DOI (or, without
        // a DOI, its external id), which makes re-ingestion a no-op.
        let by_external = external.as_ref().and_then(|e| st.by_external.get(e)).copied();
        let existing = match doi.as_ref().and_then(|d| st.by_doi.get(d)).copied() {
            Some(i) => Some(i),
            None => by_external.filter(|&i| doi.is_none() || st.papers[i].doi.is_none()),
        };
        let external = external.filter(|_| existing.is_some() || by_external.is_none());

        match existing {
            Some(idx) => {
                let paper = &st.papers[idx];
                let mut hits: Vec<DetectionHit> = Vec::new();
                for h in suspect.hits {
                    if !paper.hits.contains(&h) && !hits.contains(&h) {
                        hits.push(h);
                    }
                }
                let mut triggers: Vec<Trigger> = Vec::new();
                for t in suspect.triggers {
                    if !paper.triggers.contains(&t) && !triggers.contains(&t) {
                        triggers.push(t);
                    }
                }
                let fill_doi = doi
                    .filter(|d| paper.doi.is_none() && !st.by_doi.contains_key(d))
                    .map(|_| suspect.doi.clone().unwrap_or_default().trim().to_string());
                let fill_external = external.filter(|e| paper.external_id.is_none() && !st.by_external.contains_key(e));
                let paper_id = paper.paper_id.clone();
                if hits.is_empty() && triggers.is_empty() && fill_doi.is_none() && fill_external.is_none() {
                    return Ok(IngestOutcome::Unchanged(paper_id));
                }
                let (added_hits, added_triggers) = (hits.len(), triggers.len());
                st.commit(Event::PaperMerged {
                    paper_id: paper_id.clone(),
                    doi: fill_doi,
                    external_id: fill_external,
                    hits,
                    triggers,
                })?;
                Ok(IngestOutcome::Merged {
                    paper_id,
                    added_hits,
                    added_triggers,
                })
            }
            None => {
                let key = match (&doi, &external) {
                    (Some(d), _) => format!("doi:{d}"),
                    (None, Some(e)) => format!("ext:{e}"),
                    (None, None) => unreachable!(),
                };
                let mut paper_id = paper_key_id(&key);
                let mut n = 1;
                while st.by_id.contains_key(&paper_id) {
                    n += 1;
                    paper_id = format!("{}-{n}", paper_key_id(&key));
                }
                let mut hits: Vec<DetectionHit> = Vec::new();
                for h in suspect.hits {
                    if !hits.contains(&h) {
                        hits.push(h);
                    }
                }
                let mut triggers = suspect.triggers;
                triggers.sort();
                triggers.dedup();
                let paper = PaperRecord {
                    paper_id: paper_id.clone(),
                    doi: suspect.doi.map(|d| d.trim().to_string()).filter(|d| !d.is_empty()),
                    external_id: external,
                    title: suspect.title,
                    venue: suspect.venue,
                    year: suspect.year,
                    record_url: suspect.record_url,
                    pubpeer_url: None,
                    first_seen: Utc::now(),
                    hits,
                    triggers,
                };
                st.commit(Event::PaperInserted { paper })?;
                Ok(IngestOutcome::Inserted(paper_id))
            }
        }
    }

    pub fn set_pubpeer_url(&self, paper_id: &str, url: &str) -> Result<()> {
        let url = url.trim();
        if url.is_empty() {
            return Err(LedgerError::Invalid("pubpeer url must not be empty".into()));
        }
        self.state.write().commit(Event::PubpeerLinked {
            paper_id: paper_id.to_string(),
            url: url.to_string(),
        })
    }

    pub fn paper(&self, paper_id: &str) -> Option<PaperRecord> {
        let st = self.state.read();
        st.by_id.get(paper_id).map(|&i| st.papers[i].clone())
    }

    pub fn paper_view(&self, paper_id: &str) -> Option<PaperView> {
        let st = self.state.read();
        let &idx = st.by_id.get(paper_id)?;
        let assessments = st.assessments_of(paper_id);
        Some(PaperView {
            paper: st.papers[idx].clone(),
            status: status_of(&assessments),
            assessments,
        })
    }

    pub fn find_by_doi(&self, doi: &str) -> Option<PaperRecord> {
        let st = self.state.read();
        st.by_doi.get(&normalize_doi(doi)).map(|&i| st.papers[i].clone())
    }

    pub fn find_by_external_id(&self, external_id: &str) -> Option<PaperRecord> {
        let st = self.state.read();
        st.by_external.get(external_id).map(|&i| st.papers[i].clone())
    }

    pub fn papers(&self) -> Vec<PaperRecord> {
        self.state.read().papers.clone()
    }

    pub fn paper_count(&self) -> usize {
        self.state.read().papers.len()
    }

    /// Filtered page of summaries, newest `first_seen` first, ties by id.
    pub fn list_papers(&self, filter: PaperFilter, page: usize, page_size: usize) -> Result<Page<PaperSummary>> {
        if page == 0 {
            return Err(LedgerError::Invalid("page numbers start at 1".into()));
        }
        if page_size == 0 || page_size > MAX_PAGE_SIZE {
            return Err(LedgerError::Invalid(format!(
                "page_size must be between 1 and {MAX_PAGE_SIZE}"
            )));
        }
        let st = self.state.read();
        let mut matching: Vec<(&PaperRecord, ScreeningStatus)> = st
            .papers
            .iter()
            .map(|p| (p, st.status(&p.paper_id)))
            .filter(|(p, s)| {
                filter.status.is_none_or(|f| f.matches(*s))
                    && filter.category.is_none_or(|c| p.categories().contains(&c))
            })
            .collect();
        matching.sort_by(|(a, _), (b, _)| {
            b.first_seen
                .cmp(&a.first_seen)
                .then_with(|| a.paper_id.cmp(&b.paper_id))
        });
        let total = matching.len();
        let items = matching
            .into_iter()
            .skip((page - 1).saturating_mul(page_size))
            .take(page_size)
            .map(|(p, status)| PaperSummary {
                paper_id: p.paper_id.clone(),
                title: p.title.clone(),
                doi: p.doi.clone(),
                external_id: p.external_id.clone(),
                status,
                categories: p.categories(),
                hit_count: p.hits.len(),
                record_url: p.record_url.clone(),
                pubpeer_url: p.pubpeer_url.clone(),
                first_seen: p.first_seen,
            })
            .collect();
        Ok(Page {
            items,
            page,
            page_size,
            total,
            total_pages: total.div_ceil(page_size),
        })
    }

    // ---- assessments ------------------------------------------------------

    /// Appends a verdict stamped with the current server time.
    pub fn append_assessment(
        &self,
        paper_id: &str,
        verdict: Verdict,
        assessor: &str,
        note: Option<String>,
    ) -> Result<Assessment> {
        let assessor = assessor.trim();
        if assessor.is_empty() {
            return Err(LedgerError::Invalid("assessor must not be empty".into()));
        }
        let assessment = Assessment {
            paper_id: paper_id.to_string(),
            verdict,
            assessor: assessor.to_string(),
            timestamp: Utc::now(),
            note: note.map(|n| n.trim().to_string()).filter(|n| !n.is_empty()),
        };
        self.state.write().commit(Event::AssessmentAppended {
            assessment: assessment.clone(),
        })?;
        Ok(assessment)
    }

    pub fn assessments(&self) -> Vec<Assessment> {
        self.state.read().assessments.clone()
    }

    pub fn assessments_for(&self, paper_id: &str) -> Vec<Assessment> {
        self.state.read().assessments_of(paper_id)
    }

    pub fn status(&self, paper_id: &str) -> Option<ScreeningStatus> {
        let st = self.state.read();
        st.by_id.contains_key(paper_id).then(|| st.status(paper_id))
    }

    pub fn stats(&self) -> ScreeningStats {
        let st = self.state.read();
        summarize(&st.papers, &st.assessments).expect("ledger keeps assessments referentially intact")
    }

    // ---- proposals --------------------------------------------------------

    pub fn submit_proposal(&self, proposal: NewProposal) -> Result<FingerprintProposal> {
        let proposer = proposal.proposer.trim().to_string();
        if proposer.is_empty() {
            return Err(LedgerError::Invalid("proposer must not be empty".into()));
        }
        let pattern = normalize(&proposal.pattern).canonical;
        let expected = proposal
            .expected_phrase
            .map(|e| e.trim().to_string())
            .filter(|e| !e.is_empty());
        let candidate = Fingerprint {
            id: fingerprint_id(&pattern),
            pattern: pattern.clone(),
            category: proposal.category,
            expected_phrase: expected.clone(),
            status: FingerprintStatus::Proposed,
            provenance: String::new(),
        };
        candidate.validate().map_err(|e| LedgerError::Invalid(e.to_string()))?;

        let mut st = self.state.write();
        if let Some(existing) = st.dictionary.find_live_pattern(&pattern) {
            return Err(LedgerError::conflict(
                format!("pattern {pattern:?} duplicates fingerprint {}", existing.id),
                Some(existing.id.clone()),
            ));
        }
        let record = FingerprintProposal {
            proposal_id: format!("prop-{:06}", st.proposals.len() + 1),
            pattern,
            category: proposal.category,
            expected_phrase: expected,
            proposer,
            submitted: Utc::now(),
            state: ProposalState::Open,
            resolution_note: None,
            resolved_at: None,
            fingerprint_id: None,
        };
        st.commit(Event::ProposalSubmitted {
            proposal: record.clone(),
        })?;
        Ok(record)
    }

    /// Closes an open proposal. Approval installs the fingerprint and bumps
    /// the dictionary version in the same event, so no reader can observe
    /// one without the other.
    pub fn resolve_proposal(
        &self,
        proposal_id: &str,
        decision: Decision,
        note: Option<String>,
    ) -> Result<FingerprintProposal> {
        let note = note.map(|n| n.trim().to_string()).filter(|n| !n.is_empty());
        let mut st = self.state.write();
        let &idx = st
            .proposal_index
            .get(proposal_id)
            .ok_or_else(|| LedgerError::not_found("proposal", proposal_id))?;
        let proposal = &st.proposals[idx];
        if proposal.state != ProposalState::Open {
            return Err(LedgerError::conflict(
                format!("proposal {proposal_id} is already {}", proposal.state.as_str()),
                proposal.fingerprint_id.clone(),
            ));
        }
        let event = match decision {
            Decision::Reject => Event::ProposalResolved {
                proposal_id: proposal_id.to_string(),
                state: ProposalState::Rejected,
                at: Utc::now(),
                note,
                fingerprint: None,
                dictionary_version: st.dictionary.version,
            },
            Decision::Approve => {
                if let Some(existing) = st.dictionary.find_live_pattern(&proposal.pattern) {
                    return Err(LedgerError::conflict(
                        format!("pattern {:?} duplicates fingerprint {}", proposal.pattern, existing.id),
                        Some(existing.id.clone()),
                    ));
                }
                let version = st.dictionary.version + 1;
                let mut id = fingerprint_id(&proposal.pattern);
                if st.dictionary.get(&id).is_some() {
                    id = format!("{id}-v{version}");
                }
                Event::ProposalResolved {
                    proposal_id: proposal_id.to_string(),
                    state: ProposalState::Approved,
                    at: Utc::now(),
                    note,
                    fingerprint: Some(Fingerprint {
                        id,
                        pattern: proposal.pattern.clone(),
                        category: proposal.category,
                        expected_phrase: proposal.expected_phrase.clone(),
                        status: FingerprintStatus::Active,
                        provenance: format!("{} by {}", proposal.proposal_id, proposal.proposer),
                    }),
                    dictionary_version: version,
                }
            }
        };
        st.commit(event)?;
        Ok(st.proposals[idx].clone())
    }

    pub fn proposal(&self, proposal_id: &str) -> Option<FingerprintProposal> {
        let st = self.state.read();
        st.proposal_index.get(proposal_id).map(|&i| st.proposals[i].clone())
    }

    /// Proposals, oldest first, optionally restricted to one state.
    pub fn proposals(&self, state: Option<ProposalState>) -> Vec<FingerprintProposal> {
        self.state
            .read()
            .proposals
            .iter()
            .filter(|p| state.is_none_or(|s| p.state == s))
            .cloned()
            .collect()
    }

    // ---- operations records -----------------------------------------------

    pub fn record_harvest(&self, run: HarvestRun) -> Result<()> {
        self.state.write().commit(Event::HarvestRecorded { run })
    }

    pub fn harvest_runs(&self) -> Vec<HarvestRun> {
        self.state.read().harvest_runs.clone()
    }

    pub fn raise_alert(&self, source: &str, message: &str) -> Result<Alert> {
        let alert = Alert {
            raised: Utc::now(),
            source: source.to_string(),
            message: message.to_string(),
        };
        log::error!("alert from {source}: {message}");
        self.state.write().commit(Event::AlertRaised { alert: alert.clone() })?;
        Ok(alert)
    }

    pub fn alerts(&self) -> Vec<Alert> {
        self.state.read().alerts.clone()
    }

    // ---- backup -----------------------------------------------------------

    /// Writes a compacted event stream that rebuilds the current state:
    /// the current dictionary, then papers, assessments, proposals and
    /// operations records.
    pub fn export_jsonl(&self, mut out: impl Write) -> Result<()> {
        let st = self.state.read();
        write_line(&mut out, &LogHeader::current())?;
        let mut line = |event: &Event| write_line(&mut out, event);
        if !st.dictionary_versions.is_empty() {
            line(&Event::DictionaryInstalled {
                at: st.dictionary_versions.last().map(|v| v.at).unwrap_or_else(Utc::now),
                dictionary: (*st.dictionary).clone(),
            })?;
        }
        for paper in &st.papers {
            line(&Event::PaperInserted { paper: paper.clone() })?;
        }
        for assessment in &st.assessments {
            line(&Event::AssessmentAppended {
                assessment: assessment.clone(),
            })?;
        }
        for proposal in &st.proposals {
            line(&Event::ProposalRestored {
                proposal: proposal.clone(),
            })?;
        }
        for run in &st.harvest_runs {
            line(&Event::HarvestRecorded { run: run.clone() })?;
        }
        for alert in &st.alerts {
            line(&Event::AlertRaised { alert: alert.clone() })?;
        }
        Ok(())
    }

    /// Loads an export (or any valid event stream) into an empty ledger.
    /// The stream is checked in full before anything is written.
    pub fn import_jsonl(&self, input: impl Read) -> Result<usize> {
        let mut events = Vec::new();
        let reader = BufReader::new(input);
        let corrupt = |line: usize, message: String| LedgerError::Corrupt {
            path: "<import>".to_string(),
            line,
            message,
        };
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if idx == 0 {
                let header: LogHeader =
                    serde_json::from_str(&line).map_err(|e| corrupt(1, format!("bad header: {e}")))?;
                if header != LogHeader::current() {
                    return Err(corrupt(1, format!("unsupported header {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(|e| corrupt(idx + 1, e.to_string()))?);
        }
        self.import_events(events)
    }

    /// Applies a batch of events to an empty ledger with a single log sync.
    pub fn import_events(&self, events: Vec<Event>) -> Result<usize> {
        let mut st = self.state.write();
        if st.events != 0 {
            return Err(LedgerError::conflict(
                "import requires an empty ledger".to_string(),
                None,
            ));
        }
        // Dry run on a scratch copy so a bad stream leaves the ledger untouched.
        let mut scratch = State::default();
        for (i, e) in events.iter().enumerate() {
            scratch
                .check(e)
                .map_err(|err| LedgerError::Invalid(format!("event {}: {err}", i + 1)))?;
            scratch.apply(e.clone());
        }
        if let Some(wal) = st.wal.as_mut() {
            wal.append(&events.iter().collect::<Vec<_>>())?;
        }
        scratch.wal = st.wal.take();
        let n = events.len();
        *st = scratch;
        Ok(n)
    }
}

fn write_line<T: Serialize>(out: &mut impl Write, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

fn status_of(assessments: &[Assessment]) -> ScreeningStatus {
    match aggregate_verdicts(assessments.iter().map(|a| &a.verdict)) {
        None => ScreeningStatus::Awaiting,
        Some(v) => ScreeningStatus::Assessed(v),
    }
}

impl State {
    fn commit(&mut self, event: Event) -> Result<()> {
        self.check(&event)?;
        if let Some(wal) = self.wal.as_mut() {
            wal.append(&[&event])?;
        }
        self.apply(event);
        Ok(())
    }

    fn assessments_of(&self, paper_id: &str) -> Vec<Assessment> {
        self.assessments_by_paper
            .get(paper_id)
            .map(|idx| idx.iter().map(|&i| self.assessments[i].clone()).collect())
            .unwrap_or_default()
    }

    fn status(&self, paper_id: &str) -> ScreeningStatus {
        match self.assessments_by_paper.get(paper_id) {
            None => ScreeningStatus::Awaiting,
            Some(idx) => match aggregate_verdicts(idx.iter().map(|&i| &self.assessments[i].verdict)) {
                None => ScreeningStatus::Awaiting,
                Some(v) => ScreeningStatus::Assessed(v),
            },
        }
    }

    fn check_references(&self, hits: &[DetectionHit], triggers: &[Trigger]) -> Result<()> {
        let ids = hits
            .iter()
            .map(|h| &h.fingerprint_id)
            .chain(triggers.iter().map(|t| &t.fingerprint_id));
        for id in ids {
            if self.dictionary.get(id).is_none() {
                return Err(LedgerError::Invalid(format!("unknown fingerprint {id}")));
            }
        }
        Ok(())
    }

    fn check_identifiers(&self, doi: Option<&str>, external_id: Option<&str>) -> Result<()> {
        if let Some(d) = doi {
            if let Some(&i) = self.by_doi.get(&normalize_doi(d)) {
                return Err(LedgerError::conflict(
                    format!("DOI {d} already belongs to {}", self.papers[i].paper_id),
                    Some(self.papers[i].paper_id.clone()),
                ));
            }
        }
        if let Some(e) = external_id {
            if let Some(&i) = self.by_external.get(e) {
                return Err(LedgerError::conflict(
                    format!("external id {e} already belongs to {}", self.papers[i].paper_id),
                    Some(self.papers[i].paper_id.clone()),
                ));
            }
        }
        Ok(())
    }

    fn check_proposal_shape(&self, p: &FingerprintProposal) -> Result<()> {
        let fp = Fingerprint {
            id: String::new(),
            pattern: p.pattern.clone(),
            category: p.category,
            expected_phrase: p.expected_phrase.clone(),
            status: FingerprintStatus::Proposed,
            provenance: String::new(),
        };
        fp.validate().map_err(|e| LedgerError::Invalid(e.to_string()))?;
        if self.proposal_index.contains_key(&p.proposal_id) {
            return Err(LedgerError::conflict(
                format!("proposal {} already exists", p.proposal_id),
                Some(p.proposal_id.clone()),
            ));
        }
        Ok(())
    }

    /// Referential and state checks; `apply` assumes they passed.
    fn check(&self, event: &Event) -> Result<()> {
        match event {
            Event::DictionaryInstalled { dictionary, .. } => {
                dictionary.validate().map_err(|e| LedgerError::Invalid(e.to_string()))?;
                if !self.dictionary_versions.is_empty() && dictionary.version <= self.dictionary.version {
                    return Err(LedgerError::Invalid(format!(
                        "dictionary version {} does not advance {}",
                        dictionary.version, self.dictionary.version
                    )));
                }
                let present: HashSet<&str> = dictionary.fingerprints.iter().map(|f| f.id.as_str()).collect();
                for p in &self.papers {
                    for id in p
                        .hits
                        .iter()
                        .map(|h| &h.fingerprint_id)
                        .chain(p.triggers.iter().map(|t| &t.fingerprint_id))
                    {
                        if !present.contains(id.as_str()) {
                            return Err(LedgerError::Invalid(format!(
                                "new dictionary drops fingerprint {id} referenced by {}",
                                p.paper_id
                            )));
                        }
                    }
                }
            }
            Event::PaperInserted { paper } => {
                if !paper.is_addressable() {
                    return Err(LedgerError::Invalid(format!(
                        "paper {} has neither DOI nor external id",
                        paper.paper_id
                    )));
                }
                if self.by_id.contains_key(&paper.paper_id) {
                    return Err(LedgerError::conflict(
                        format!("paper {} already exists", paper.paper_id),
                        Some(paper.paper_id.clone()),
                    ));
                }
                self.check_identifiers(paper.doi.as_deref(), paper.external_id.as_deref())?;
                self.check_references(&paper.hits, &paper.triggers)?;
            }
            Event::PaperMerged {
                paper_id,
                doi,
                external_id,
                hits,
                triggers,
            } => {
                let &i = self
                    .by_id
                    .get(paper_id)
                    .ok_or_else(|| LedgerError::not_found("paper", paper_id))?;
                let p = &self.papers[i];
                if (doi.is_some() && p.doi.is_some()) || (external_id.is_some() && p.external_id.is_some()) {
                    return Err(LedgerError::Invalid(format!(
                        "merge would overwrite an identifier of {paper_id}"
                    )));
                }
                self.check_identifiers(doi.as_deref(), external_id.as_deref())?;
                self.check_references(hits, triggers)?;
            }
            Event::PubpeerLinked { paper_id, .. } => {
                if !self.by_id.contains_key(paper_id) {
                    return Err(LedgerError::not_found("paper", paper_id));
                }
            }
            Event::AssessmentAppended { assessment } => {
                if !self.by_id.contains_key(&assessment.paper_id) {
                    return Err(LedgerError::not_found("paper", &assessment.paper_id));
                }
            }
            Event::ProposalSubmitted { proposal } => {
                if proposal.state != ProposalState::Open {
                    return Err(LedgerError::Invalid("new proposals must be open".into()));
                }
                self.check_proposal_shape(proposal)?;
            }
            Event::ProposalRestored { proposal } => {
                self.check_proposal_shape(proposal)?;
                if let Some(id) = &proposal.fingerprint_id {
                    if self.dictionary.get(id).is_none() {
                        return Err(LedgerError::Invalid(format!(
                            "restored proposal {} references unknown fingerprint {id}",
                            proposal.proposal_id
                        )));
                    }
                }
            }
            Event::ProposalResolved {
                proposal_id,
                state,
                fingerprint,
                dictionary_version,
                ..
            } => {
                let &i = self
                    .proposal_index
                    .get(proposal_id)
                    .ok_or_else(|| LedgerError::not_found("proposal", proposal_id))?;
                if self.proposals[i].state != ProposalState::Open {
                    return Err(LedgerError::conflict(
                        format!("proposal {proposal_id} is already resolved"),
                        self.proposals[i].fingerprint_id.clone(),
                    ));
                }
                match (state, fingerprint) {
                    (ProposalState::Approved, Some(fp)) => {
                        fp.validate().map_err(|e| LedgerError::Invalid(e.to_string()))?;
                        if self.dictionary.get(&fp.id).is_some() {
                            return Err(LedgerError::conflict(
                                format!("fingerprint id {} already exists", fp.id),
                                Some(fp.id.clone()),
                            ));
                        }
                        if let Some(existing) = self.dictionary.find_live_pattern(&fp.pattern) {
                            return Err(LedgerError::conflict(
                                format!("pattern {:?} duplicates fingerprint {}", fp.pattern, existing.id),
                                Some(existing.id.clone()),
                            ));
                        }
                        if *dictionary_version != self.dictionary.version + 1 {
                            return Err(LedgerError::Invalid(format!(
                                "approval must create dictionary version {}",
                                self.dictionary.version + 1
                            )));
                        }
                    }
                    (ProposalState::Rejected, None) => {}
                    _ => {
                        return Err(LedgerError::Invalid(
                            "approval must carry exactly one fingerprint; rejection none".into(),
                        ))
                    }
                }
            }
            Event::FingerprintRetired {
                fingerprint_id,
                dictionary_version,
                ..
            } => {
                match self.dictionary.get(fingerprint_id) {
                    None => return Err(LedgerError::not_found("fingerprint", fingerprint_id)),
                    Some(fp) if fp.status == FingerprintStatus::Retired => {
                        return Err(LedgerError::conflict(
                            format!("fingerprint {fingerprint_id} is already retired"),
                            Some(fingerprint_id.clone()),
                        ))
                    }
                    Some(_) => {}
                }
                if *dictionary_version != self.dictionary.version + 1 {
                    return Err(LedgerError::Invalid(
                        "retirement must advance the dictionary version".into(),
                    ));
                }
            }
            Event::HarvestRecorded { run } => {
                if run.new_suspects > run.results_seen {
                    return Err(LedgerError::Invalid(format!(
                        "harvest run {} reports more new suspects than results",
                        run.run_id
                    )));
                }
            }
            Event::AlertRaised { .. } => {}
        }
        Ok(())
    }

    fn index_identifiers(&mut self, idx: usize) {
        let p = &self.papers[idx];
        if let Some(d) = non_empty(&p.doi) {
            self.by_doi.insert(normalize_doi(d), idx);
        }
        if let Some(e) = non_empty(&p.external_id) {
            self.by_external.insert(e.to_string(), idx);
        }
    }

    fn push_dictionary_version(&mut self, at: DateTime<Utc>) {
        self.dictionary_versions.push(DictionaryVersion {
            version: self.dictionary.version,
            at,
            active_fingerprints: self.dictionary.active().count(),
        });
    }

    fn apply(&mut self, event: Event) {
        self.events += 1;
        match event {
            Event::DictionaryInstalled { at, dictionary } => {
                self.dictionary = Arc::new(dictionary);
                self.push_dictionary_version(at);
            }
            Event::PaperInserted { paper } => {
                let idx = self.papers.len();
                self.by_id.insert(paper.paper_id.clone(), idx);
                self.papers.push(paper);
                self.index_identifiers(idx);
            }
            Event::PaperMerged {
                paper_id,
                doi,
                external_id,
                hits,
                triggers,
            } => {
                let idx = self.by_id[&paper_id];
                let p = &mut self.papers[idx];
                if doi.is_some() {
                    p.doi = doi;
                }
                if external_id.is_some() {
                    p.external_id = external_id;
                }
                for h in hits {
                    if !p.hits.contains(&h) {
                        p.hits.push(h);
                    }
                }
                p.hits.sort_by(|a, b| {
                    (a.span.start, &a.fingerprint_id, a.span.end).cmp(&(b.span.start, &b.fingerprint_id, b.span.end))
                });
                for t in triggers {
                    if !p.triggers.contains(&t) {
                        p.triggers.push(t);
                    }
                }
                p.triggers.sort();
                self.index_identifiers(idx);
            }
            Event::PubpeerLinked { paper_id, url } => {
                let idx = self.by_id[&paper_id];
                self.papers[idx].pubpeer_url = Some(url);
            }
            Event::AssessmentAppended { assessment } => {
                self.assessments_by_paper
                    .entry(assessment.paper_id.clone())
                    .or_default()
                    .push(self.assessments.len());
                self.assessments.push(assessment);
            }
            Event::ProposalSubmitted { proposal } | Event::ProposalRestored { proposal } => {
                self.proposal_index
                    .insert(proposal.proposal_id.clone(), self.proposals.len());
                self.proposals.push(proposal);
            }
            Event::ProposalResolved {
                proposal_id,
                state,
                at,
                note,
                fingerprint,
                dictionary_version,
            } => {
                let idx = self.proposal_index[&proposal_id];
                let p = &mut self.proposals[idx];
                p.state = state;
                p.resolution_note = note;
                p.resolved_at = Some(at);
                if let Some(fp) = fingerprint {
                    p.fingerprint_id = Some(fp.id.clone());
                    let mut dict = (*self.dictionary).clone();
                    dict.fingerprints.push(fp);
                    dict.version = dictionary_version;
                    self.dictionary = Arc::new(dict);
                    self.push_dictionary_version(at);
                }
            }
            Event::FingerprintRetired {
                fingerprint_id,
                at,
                dictionary_version,
            } => {
                let mut dict = (*self.dictionary).clone();
                if let Some(fp) = dict.fingerprints.iter_mut().find(|f| f.id == fingerprint_id) {
                    fp.status = FingerprintStatus::Retired;
                }
                dict.version = dictionary_version;
                self.dictionary = Arc::new(dict);
                self.push_dictionary_version(at);
            }
            Event::HarvestRecorded { run } => self.harvest_runs.push(run),
            Event::AlertRaised { alert } => self.alerts.push(alert),
        }
    }
}
