//! JSON HTTP API over a live log directory.
//!
//! Handlers read an immutable catalog snapshot; a background task rescans the
//! log directory and swaps in a new snapshot when anything changed. Responses
//! are cached per snapshot version and request, so repeated requests return
//! identical bytes until new data arrives.

mod error;
mod handlers;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderValue, Request, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use log::{info, warn};
use parking_lot::{Mutex, RwLock};
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::ingest::{IngestError, Ingestor, RunCatalog};

pub use error::ApiError;
pub use handlers::{
    AxesInput, BundleQuery, BundleResponse, CorrelationQuery, FairnessRequest, FairnessResponse, HealthResponse,
    InOutQuery, RunSummary, ScalarMode, ScalarsQuery, ScalarsResponse, TimelineQuery, WhatIfRequest,
};

pub const DEFAULT_RESCAN: Duration = Duration::from_secs(5);
pub const DEFAULT_MAX_POINTS: usize = 1000;
const CACHE_CAPACITY: usize = 4096;

/// Serialized responses for the current snapshot version.
#[derive(Debug, Default)]
struct ResponseCache {
    version: u64,
    entries: HashMap<String, Bytes>,
}

/// Shared server state.
#[derive(Debug)]
pub struct AppState {
    catalog: RwLock<Arc<RunCatalog>>,
    ingestor: Option<Mutex<Ingestor>>,
    cache: Mutex<ResponseCache>,
    /// One permit per core: queued requests wait rather than time-slice against each other.
    pub(crate) compute: tokio::sync::Semaphore,
    seed: u64,
    rescan_interval: Duration,
    scans: AtomicU64,
    last_scan_micros: AtomicU64,
}

impl AppState {
    /// Scans `logdir` once and serves from it; [`AppState::rescan`] picks up new data.
    pub fn open(logdir: impl AsRef<Path>, seed: u64, rescan_interval: Duration) -> Result<Arc<Self>, IngestError> {
        let mut ingestor = Ingestor::new(logdir)?;
        let started = Instant::now();
        ingestor.rescan()?;
        let state = Self::build(ingestor.shared_snapshot(), Some(ingestor), seed, rescan_interval);
        state.scans.store(1, Ordering::Relaxed);
        state
            .last_scan_micros
            .store(started.elapsed().as_micros() as u64, Ordering::Relaxed);
        Ok(Arc::new(state))
    }

    /// Serves a fixed catalog with no backing directory.
    pub fn from_catalog(catalog: RunCatalog, seed: u64) -> Arc<Self> {
        Arc::new(Self::build(Arc::new(catalog), None, seed, DEFAULT_RESCAN))
    }

    fn build(catalog: Arc<RunCatalog>, ingestor: Option<Ingestor>, seed: u64, rescan_interval: Duration) -> Self {
        Self {
            compute: tokio::sync::Semaphore::new(std::thread::available_parallelism().map_or(1, |n| n.get())),
            cache: Mutex::new(ResponseCache {
                version: catalog.version,
                entries: HashMap::new(),
            }),
            catalog: RwLock::new(catalog),
            ingestor: ingestor.map(Mutex::new),
            seed,
            rescan_interval,
            scans: AtomicU64::new(0),
            last_scan_micros: AtomicU64::new(0),
        }
    }

    pub fn snapshot(&self) -> Arc<RunCatalog> {
        Arc::clone(&self.catalog.read())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rescan_interval(&self) -> Duration {
        self.rescan_interval
    }

    /// Reads new data from the log directory. Returns whether a new snapshot was published.
    pub fn rescan(&self) -> Result<bool, IngestError> {
        let Some(ingestor) = &self.ingestor else {
            return Ok(false);
        };
        let started = Instant::now();
        let published = ingestor.lock().rescan()?;
        self.scans.fetch_add(1, Ordering::Relaxed);
        self.last_scan_micros
            .store(started.elapsed().as_micros() as u64, Ordering::Relaxed);
        match published {
            Some(snapshot) => {
                *self.catalog.write() = snapshot;
                Ok(true)
            }
            None => Ok(false),
        }
    }

    /// Returns the cached body for `key` under `version`, computing it on a miss.
    fn cached(
        &self,
        version: u64,
        key: String,
        compute: impl FnOnce() -> Result<String, ApiError>,
    ) -> Result<Bytes, ApiError> {
        {
            let cache = self.cache.lock();
            if cache.version == version {
                if let Some(body) = cache.entries.get(&key) {
                    return Ok(body.clone());
                }
            }
        }
        let body = Bytes::from(compute()?);
        let mut cache = self.cache.lock();
        if cache.version < version {
            cache.version = version;
            cache.entries.clear();
        }
        if cache.version == version {
            if cache.entries.len() >= CACHE_CAPACITY {
                cache.entries.clear();
            }
            cache.entries.insert(key, body.clone());
        }
        Ok(body)
    }
}

/// Runs [`AppState::rescan`] every `interval` until the task is dropped.
pub fn spawn_rescan(state: Arc<AppState>, interval: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(interval);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        ticker.tick().await;
        loop {
            ticker.tick().await;
            let s = Arc::clone(&state);
            match tokio::task::spawn_blocking(move || s.rescan()).await {
                Ok(Ok(true)) => info!("published snapshot {}", state.snapshot().version),
                Ok(Ok(false)) => {}
                Ok(Err(e)) => warn!("rescan failed: {e}"),
                Err(e) => warn!("rescan task panicked: {e}"),
            }
        }
    })
}

#[derive(Debug, Clone, Default)]
pub struct RouterOptions {
    /// Allowed CORS origin; any origin when unset.
    pub cors_origin: Option<String>,
    /// Directory of static dashboard assets served at `/`.
    pub assets: Option<PathBuf>,
}

pub fn router(state: Arc<AppState>, options: &RouterOptions) -> Router {
    let cors = match options.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => CorsLayer::new().allow_origin(origin),
        _ => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);

    let api = Router::new()
        .route("/api/runs", get(handlers::runs))
        .route("/api/scalars", get(handlers::scalars))
        .route("/api/fairness", post(handlers::fairness))
        .route("/api/whatif", post(handlers::whatif))
        .route("/api/correlation", get(handlers::correlation))
        .route("/api/timeline", get(handlers::timeline))
        .route("/api/inout", get(handlers::inout))
        .route("/api/bundle", get(handlers::bundle))
        .route("/api/health", get(handlers::health))
        .with_state(state);
    let app = match &options.assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    };
    app.layer(middleware::from_fn(ensure_api_error)).layer(cors)
}

async fn not_found() -> ApiError {
    ApiError::not_found("NOT_FOUND", "no such endpoint")
}

/// Replaces framework-generated error bodies with an [`ApiError`].
async fn ensure_api_error(request: Request<Body>, next: Next) -> Response {
    let is_api = request.uri().path().starts_with("/api/");
    let response = next.run(request).await;
    let status = response.status();
    let is_json = response
        .headers()
        .get(header::CONTENT_TYPE)
        .is_some_and(|v| v.as_bytes().starts_with(b"application/json"));
    if !is_api || !(status.is_client_error() || status.is_server_error()) || is_json {
        return response;
    }
    let code = match status {
        StatusCode::NOT_FOUND => "NOT_FOUND",
        StatusCode::METHOD_NOT_ALLOWED => "METHOD_NOT_ALLOWED",
        StatusCode::UNSUPPORTED_MEDIA_TYPE => "UNSUPPORTED_MEDIA_TYPE",
        s if s.is_server_error() => "INTERNAL",
        _ => "BAD_REQUEST",
    };
    let message = status.canonical_reason().unwrap_or("request failed");
    ApiError::new(status, code, message).into_response()
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub logdir: PathBuf,
    pub addr: SocketAddr,
    pub rescan_interval: Duration,
    pub seed: u64,
    pub router: RouterOptions,
}

/// Binds, starts background rescanning and serves until the process exits.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let dir = config.logdir.clone();
    let (seed, interval) = (config.seed, config.rescan_interval);
    let state = tokio::task::spawn_blocking(move || AppState::open(dir, seed, interval))
        .await
        .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
    let _rescan = spawn_rescan(Arc::clone(&state), config.rescan_interval);
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    info!(
        "serving {} ({} runs) on http://{}",
        config.logdir.display(),
        state.snapshot().len(),
        listener.local_addr()?
    );
    axum::serve(listener, router(state, &config.router)).await?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
