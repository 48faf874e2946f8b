//! Finds new suspects by issuing fingerprints as phrase queries to
//! scholarly search indexes.
//!
//! [`SearchClient`] abstracts the index. [`LocalIndex`] searches a JSONL
//! corpus deterministically; [`HttpSearchClient`] talks to a JSON API with
//! rate limiting, retries and a configurable field mapping.
//! [`harvest_once`] runs one pass and [`schedule`] repeats it.

mod client;
mod harvest;
mod http;
mod local;
mod schedule;

pub use client::{search_all, SearchClient, SearchError, SearchPage, SearchResult};
pub use harvest::{harvest_ledger, harvest_once, HarvestOptions};
pub use http::{FieldMapping, HttpClientConfig, HttpSearchClient, RateLimiter};
pub use local::{IndexError, IndexRecord, LocalIndex, DEFAULT_PAGE_SIZE};
pub use pps_ledger::{HarvestError, HarvestRun};
pub use schedule::{schedule, ScheduleConfig, Scheduler, SchedulerStatus};
