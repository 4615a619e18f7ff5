//! Read-only HTTP front end.
//!
//! `GET /health`, `GET /retrieve?seed=ID&k=N&retriever=semantic|baseline`,
//! `GET /stats`. The snapshot sits behind an atomic pointer: a reload swaps
//! it in while in-flight requests finish on the old one.

use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use arc_swap::ArcSwapOption;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use super::{Engine, EngineError, RetrieverTag, SnapshotError};

#[derive(Default)]
pub struct AppState {
    engine: ArcSwapOption<Engine>,
    served: AtomicU64,
}

impl AppState {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn with_engine(engine: Engine) -> Arc<Self> {
        let state = Self::new();
        state.install(engine);
        state
    }

    pub fn install(&self, engine: Engine) {
        self.engine.store(Some(Arc::new(engine)));
    }

    /// Loads a snapshot and swaps it in. The current one stays live on error.
    pub fn reload(&self, path: &std::path::Path) -> Result<(), SnapshotError> {
        self.install(Engine::load(path)?);
        Ok(())
    }

    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.engine.load_full()
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": code, "message": message.into() }))).into_response()
}

fn not_ready() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "not_ready", "snapshot is still loading")
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.engine() {
        Some(e) => Json(json!({ "status": "ok", "snapshot_hash": e.snapshot_hash() })).into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "loading" }))).into_response(),
    }
}

#[derive(Deserialize)]
struct RetrieveQuery {
    seed: Option<String>,
    k: Option<String>,
    retriever: Option<String>,
}

async fn retrieve(State(state): State<Arc<AppState>>, Query(q): Query<RetrieveQuery>) -> Response {
    let Some(engine) = state.engine() else {
        return not_ready();
    };
    let Some(seed) = q.seed.filter(|s| !s.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "bad_request", "missing `seed`");
    };
    let k = match q.k.as_deref().map(str::parse::<usize>) {
        None => engine.config().k_default,
        Some(Ok(k)) if k >= 1 => k,
        Some(_) => return error(StatusCode::BAD_REQUEST, "bad_request", "`k` must be a positive integer"),
    };
    let tag = match q.retriever.as_deref().map(str::parse::<RetrieverTag>) {
        None => RetrieverTag::Semantic,
        Some(Ok(t)) => t,
        Some(Err(m)) => return error(StatusCode::BAD_REQUEST, "bad_request", m),
    };
    state.served.fetch_add(1, Ordering::Relaxed);
    match engine.retrieve_with(tag, &seed, k) {
        Ok(r) => Json(r).into_response(),
        Err(e @ EngineError::UnknownSeed(_)) => error(StatusCode::NOT_FOUND, "unknown_seed", e.to_string()),
        Err(e @ EngineError::BaselineUnavailable) => error(StatusCode::CONFLICT, "baseline_unavailable", e.to_string()),
        Err(e @ EngineError::EmptyIndex) => error(StatusCode::SERVICE_UNAVAILABLE, "empty_index", e.to_string()),
        Err(e) => error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
    }
}

async fn stats(State(state): State<Arc<AppState>>) -> Response {
    let Some(engine) = state.engine() else {
        return not_ready();
    };
    Json(json!({
        "snapshot_hash": engine.snapshot_hash(),
        "ad_count": engine.len(),
        "edge_count": engine.graph().edge_count(),
        "baseline_available": engine.has_baseline(),
        "config": engine.config(),
        "graph_params": engine.graph_params(),
        "requests_served": state.served.load(Ordering::Relaxed),
    }))
    .into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/retrieve", get(retrieve))
        .route("/stats", get(stats))
        .with_state(state)
}

/// Serves on an already-bound listener while the snapshot loads in the
/// background. `/health` answers 503 until the load completes. A failed load
/// ends the server with an error.
pub async fn serve(
    listener: TcpListener,
    snapshot: PathBuf,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let app = router(state.clone());
    let server = async move {
        axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
        Ok::<(), anyhow::Error>(())
    };
    let loader = async move {
        let path = snapshot.clone();
        let engine = tokio::task::spawn_blocking(move || Engine::load(&path)).await??;
        log::info!("loaded snapshot {} ({} ads, hash {})", snapshot.display(), engine.len(), engine.snapshot_hash());
        state.install(engine);
        Ok::<(), anyhow::Error>(())
    };
    tokio::try_join!(server, loader)?;
    Ok(())
}
