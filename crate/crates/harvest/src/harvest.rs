use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use chrono::Utc;
use pps_core::{normalize_doi, Detector, Dictionary, Fingerprint, Trigger};
use pps_ledger::{HarvestError, HarvestRun, IngestOutcome, Ledger, LedgerError, Suspect};

use crate::client::{search_all, SearchClient, SearchResult};

#[derive(Debug, Clone)]
pub struct HarvestOptions {
    /// Fingerprint queries running at once. Ingestion is always serial.
    pub parallelism: usize,
    /// Safety cap on pages followed per query.
    pub max_pages: usize,
    /// Paper ids, DOIs or external ids that are never ingested.
    pub allowlist: HashSet<String>,
    /// Append the run statistics to the ledger.
    pub record_run: bool,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        HarvestOptions {
            parallelism: 4,
            max_pages: 100,
            allowlist: HashSet::new(),
            record_run: true,
        }
    }
}

impl HarvestOptions {
    fn allows(&self, r: &SearchResult) -> bool {
        if self.allowlist.is_empty() {
            return true;
        }
        let doi_hit = r
            .doi
            .as_deref()
            .map(normalize_doi)
            .is_some_and(|d| self.allowlist.iter().any(|a| normalize_doi(a) == d));
        !(doi_hit || self.allowlist.contains(&r.external_id))
    }
}

/// What one fingerprint query produced across all clients.
struct QueryOutcome {
    queries: usize,
    results: Vec<Suspect>,
    seen: usize,
    errors: Vec<String>,
}

fn query_fingerprint(
    fp: &Fingerprint,
    clients: &[Arc<dyn SearchClient>],
    detector: &Detector,
    options: &HarvestOptions,
) -> QueryOutcome {
    let mut out = QueryOutcome {
        queries: 0,
        results: Vec::new(),
        seen: 0,
        errors: Vec::new(),
    };
    let trigger = Trigger {
        fingerprint_id: fp.id.clone(),
        category: fp.category,
    };
    for client in clients {
        out.queries += 1;
        match search_all(client.as_ref(), &fp.pattern, options.max_pages) {
            Err(e) => out.errors.push(format!("{}: {e}", client.name())),
            Ok(results) => {
                out.seen += results.len();
                for r in results.into_iter().filter(|r| options.allows(r)) {
                    let hits = r
                        .full_text
                        .as_deref()
                        .map(|text| detector.detect(&r.external_id, text).hits)
                        .unwrap_or_default();
                    out.results.push(Suspect {
                        doi: r.doi,
                        external_id: Some(r.external_id),
                        title: r.title,
                        venue: None,
                        year: r.year,
                        record_url: r.record_url,
                        hits,
                        triggers: vec![trigger.clone()],
                    });
                }
            }
        }
    }
    out
}

fn run_id(started: chrono::DateTime<Utc>) -> String {
    format!("run-{}", started.format("%Y%m%dT%H%M%S%.6fZ"))
}

/// Issues every active fingerprint of `dictionary` as a phrase query to
/// every client and merges the results into `ledger`.
///
/// Searches run on up to `options.parallelism` threads. Their results are
/// ingested by the calling thread alone, in dictionary order, so dedup is
/// race-free and the outcome does not depend on thread timing. A failing
/// query is recorded in the run and affects nothing else.
pub fn harvest_once(
    clients: &[Arc<dyn SearchClient>],
    dictionary: &Dictionary,
    ledger: &Ledger,
    options: &HarvestOptions,
) -> Result<HarvestRun, LedgerError> {
    let started = Utc::now();
    let detector =
        Detector::new(dictionary).map_err(|e| LedgerError::Invalid(format!("dictionary does not compile: {e}")))?;
    let fingerprints: Vec<&Fingerprint> = dictionary.active().collect();
    let mut run = HarvestRun {
        run_id: run_id(started),
        started,
        finished: started,
        dictionary_version: dictionary.version,
        queries_issued: 0,
        results_seen: 0,
        new_suspects: 0,
        updated_suspects: 0,
        errors: Vec::new(),
    };

    let next = AtomicUsize::new(0);
    let workers = options.parallelism.clamp(1, fingerprints.len().max(1));
    let (tx, rx) = mpsc::channel::<(usize, QueryOutcome)>();
    let ingest: Result<(), LedgerError> = std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, fingerprints, detector) = (&next, &fingerprints, &detector);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(fp) = fingerprints.get(i) else { break };
                let outcome = query_fingerprint(fp, clients, detector, options);
                if tx.send((i, outcome)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: BTreeMap<usize, QueryOutcome> = BTreeMap::new();
        let mut cursor = 0;
        for (i, outcome) in rx {
            pending.insert(i, outcome);
            while let Some(outcome) = pending.remove(&cursor) {
                let fp = fingerprints[cursor];
                cursor += 1;
                run.queries_issued += outcome.queries;
                run.results_seen += outcome.seen;
                for e in outcome.errors {
                    log::warn!("harvest query for {} failed: {e}", fp.id);
                    run.errors.push(HarvestError {
                        fingerprint_id: fp.id.clone(),
                        error: e,
                    });
                }
                for suspect in outcome.results {
                    match ledger.ingest(suspect) {
                        Ok(IngestOutcome::Inserted(_)) => run.new_suspects += 1,
                        Ok(IngestOutcome::Merged { .. }) => run.updated_suspects += 1,
                        Ok(IngestOutcome::Unchanged(_)) => {}
                        Err(e @ LedgerError::Io(_)) => return Err(e),
                        Err(e) => run.errors.push(HarvestError {
                            fingerprint_id: fp.id.clone(),
                            error: format!("ingest: {e}"),
                        }),
                    }
                }
            }
        }
        Ok(())
    });
    ingest?;

    run.finished = Utc::now();
    log::info!(
        "harvest {}: {} queries, {} results, {} new, {} updated, {} errors",
        run.run_id,
        run.queries_issued,
        run.results_seen,
        run.new_suspects,
        run.updated_suspects,
        run.errors.len()
    );
    if options.record_run {
        ledger.record_harvest(run.clone())?;
    }
    Ok(run)
}

/// Harvests with the ledger's current dictionary, so newly approved
/// fingerprints are queried from the next run on.
pub fn harvest_ledger(
    clients: &[Arc<dyn SearchClient>],
    ledger: &Ledger,
    options: &HarvestOptions,
) -> Result<HarvestRun, LedgerError> {
    let dictionary = ledger.dictionary();
    harvest_once(clients, &dictionary, ledger, options)
}
