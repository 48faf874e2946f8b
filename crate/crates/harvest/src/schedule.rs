use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use pps_ledger::{HarvestRun, Ledger};
use serde::Serialize;

use crate::client::SearchClient;
use crate::harvest::{harvest_ledger, HarvestOptions};

#[derive(Debug, Clone)]
pub struct ScheduleConfig {
    pub interval: Duration,
    /// Consecutive failed runs before the loop pauses itself.
    pub failure_threshold: u32,
    /// Stop on its own after this many ticks (tests, one-off batches).
    pub max_ticks: Option<u64>,
}

impl ScheduleConfig {
    pub fn every(interval: Duration) -> Self {
        ScheduleConfig {
            interval,
            failure_threshold: 5,
            max_ticks: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SchedulerStatus {
    pub ticks: u64,
    pub runs_started: u64,
    pub runs_completed: u64,
    pub failed_runs: u64,
    /// Ticks dropped because the previous run was still active.
    pub skipped_ticks: u64,
    /// Ticks ignored while paused.
    pub paused_ticks: u64,
    pub consecutive_failures: u32,
    pub paused: bool,
    pub running: bool,
}

struct Shared {
    status: Mutex<SchedulerStatus>,
}

/// Handle to a running harvest loop.
pub struct Scheduler {
    shared: Arc<Shared>,
    stop_tx: mpsc::Sender<()>,
    ticker: Option<JoinHandle<()>>,
    worker: Option<JoinHandle<()>>,
}

/// A run counts as failed when it could not complete or when every query
/// it issued failed.
fn run_failed(result: &Result<HarvestRun, pps_ledger::LedgerError>) -> bool {
    match result {
        Err(_) => true,
        Ok(run) => run.queries_issued > 0 && run.errors.len() >= run.queries_issued,
    }
}

/// Starts a loop that harvests now and then once per `config.interval`.
///
/// Runs never overlap: a tick that fires while a run is active is skipped
/// and counted. After `failure_threshold` consecutive failed runs the loop
/// pauses and raises an alert in the ledger; [`Scheduler::resume`] clears
/// it.
pub fn schedule(
    clients: Vec<Arc<dyn SearchClient>>,
    ledger: Arc<Ledger>,
    options: HarvestOptions,
    config: ScheduleConfig,
) -> Scheduler {
    let shared = Arc::new(Shared {
        status: Mutex::new(SchedulerStatus::default()),
    });
    let (stop_tx, stop_rx) = mpsc::channel::<()>();
    let (run_tx, run_rx) = mpsc::sync_channel::<()>(1);

    let worker = {
        let shared = shared.clone();
        let threshold = config.failure_threshold.max(1);
        std::thread::Builder::new()
            .name("harvest-worker".into())
            .spawn(move || {
                for () in run_rx {
                    let result = harvest_ledger(&clients, &ledger, &options);
                    let failed = run_failed(&result);
                    if let Err(e) = &result {
                        log::error!("harvest run failed: {e}");
                    }
                    let alert = {
                        let mut st = shared.status.lock();
                        st.running = false;
                        st.runs_completed += 1;
                        if failed {
                            st.failed_runs += 1;
                            st.consecutive_failures += 1;
                            if st.consecutive_failures >= threshold && !st.paused {
                                st.paused = true;
                                Some(st.consecutive_failures)
                            } else {
                                None
                            }
                        } else {
                            st.consecutive_failures = 0;
                            None
                        }
                    };
                    if let Some(n) = alert {
                        let msg = format!("{n} consecutive failed harvest runs; scheduler paused");
                        if let Err(e) = ledger.raise_alert("scheduler", &msg) {
                            log::error!("cannot record alert: {e}");
                        }
                    }
                }
            })
            .expect("spawn harvest worker")
    };

    let ticker = {
        let shared = shared.clone();
        std::thread::Builder::new()
            .name("harvest-ticker".into())
            .spawn(move || {
                let mut next = Instant::now();
                loop {
                    {
                        let mut st = shared.status.lock();
                        st.ticks += 1;
                        if st.paused {
                            st.paused_ticks += 1;
                            log::warn!("harvest tick {} ignored: scheduler paused", st.ticks);
                        } else if st.running {
                            st.skipped_ticks += 1;
                            log::warn!("harvest tick {} skipped: previous run still active", st.ticks);
                        } else {
                            st.running = true;
                            st.runs_started += 1;
                            // Capacity 1 and `running` was false, so this never blocks.
                            if run_tx.try_send(()).is_err() {
                                st.running = false;
                                st.runs_started -= 1;
                            }
                        }
                        if config.max_ticks.is_some_and(|m| st.ticks >= m) {
                            break;
                        }
                    }
                    next += config.interval;
                    let wait = next.saturating_duration_since(Instant::now());
                    match stop_rx.recv_timeout(wait) {
                        Err(RecvTimeoutError::Timeout) => {}
                        Ok(()) | Err(RecvTimeoutError::Disconnected) => break,
                    }
                }
                // Dropping run_tx lets the worker finish its run and exit.
            })
            .expect("spawn harvest ticker")
    };

    Scheduler {
        shared,
        stop_tx,
        ticker: Some(ticker),
        worker: Some(worker),
    }
}

impl Scheduler {
    pub fn status(&self) -> SchedulerStatus {
        self.shared.status.lock().clone()
    }

    /// Clears a failure pause.
    pub fn resume(&self) {
        let mut st = self.shared.status.lock();
        st.paused = false;
        st.consecutive_failures = 0;
    }

    /// Stops ticking and waits for an in-flight run to finish.
    pub fn stop(mut self) -> SchedulerStatus {
        let _ = self.stop_tx.send(());
        self.join_threads();
        self.status()
    }

    /// Waits for a loop bounded by `max_ticks` to end by itself.
    pub fn join(mut self) -> SchedulerStatus {
        if let Some(t) = self.ticker.take() {
            let _ = t.join();
        }
        self.join_threads();
        self.status()
    }

    fn join_threads(&mut self) {
        if let Some(t) = self.ticker.take() {
            let _ = t.join();
        }
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        let _ = self.stop_tx.send(());
        self.join_threads();
    }
}
