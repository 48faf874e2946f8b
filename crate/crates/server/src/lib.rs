//! REST service over the screening ledger.
//!
//! All endpoints live under `/api` and exchange JSON. Errors share one
//! envelope, `{error_code, message, details?}`. Write endpoints are rate
//! limited per client address; proposal resolution can be restricted to
//! holders of an admin token.

mod api;
mod config;
mod error;
mod limit;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use pps_ledger::{Ledger, LedgerError};
use thiserror::Error;

pub use api::{
    router, AppState, AssessmentRequest, DictionaryView, ExplainedHit, Health, PaperDetail, ProposalRequest,
    ResolutionRequest, DEFAULT_PAGE_SIZE,
};
pub use config::{ConfigError, HarvestConfig, RateLimitConfig, SearchConfig, ServiceConfig};
pub use error::{ApiError, ErrorEnvelope};
pub use limit::AddressLimiter;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opens the configured ledger, installing the configured dictionary if
/// the ledger has none yet.
pub fn open_ledger(config: &ServiceConfig) -> Result<Arc<Ledger>, ServiceError> {
    let ledger = Ledger::open(&config.store_path)?;
    if ledger.dictionary_versions().is_empty() {
        ledger.ensure_dictionary(config.initial_dictionary()?)?;
    }
    Ok(Arc::new(ledger))
}

pub fn app_state(config: &ServiceConfig, ledger: Arc<Ledger>) -> Result<AppState, ServiceError> {
    Ok(AppState {
        ledger,
        limiter: Arc::new(AddressLimiter::new(
            config.rate_limit.writes_per_minute,
            config.rate_limit.burst,
        )),
        admin_token: config.admin_token()?.map(Arc::from),
    })
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state).into_make_service_with_connect_info::<SocketAddr>();
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

pub async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, ServiceError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })
}
