//! HTTP/JSON facade over the exploration engine.
//!
//! Each session owns one command queue; handlers enqueue mutations and wait
//! for the resulting snapshot, while reads serve the latest snapshot
//! directly. A per-session worker streams simulation frames as server-sent
//! events and writes converged positions back through the queue.

pub mod error;
pub mod routes;
pub mod session;
pub mod wire;

use std::collections::hash_map::RandomState;
use std::collections::HashMap;
use std::hash::BuildHasher;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use topicfield::{Bounds, Corpus, FieldState, Index, LayoutParams, TopicModel};

pub use error::ApiError;
pub use routes::router;
pub use session::{Catalog, Command, Session, SessionOptions, Snapshot, StreamEvent};

use crate::wire::FieldResponse;

/// Everything a server process is started with.
pub struct AppConfig {
    pub corpus: Arc<Corpus>,
    pub model: TopicModel,
    pub index: Arc<Index>,
    pub layout: LayoutParams,
    pub bounds: Bounds,
    pub session: SessionOptions,
}

impl AppConfig {
    /// Builds the search index from the corpus.
    pub fn new(corpus: Corpus, model: TopicModel) -> Self {
        let index = Index::build(&corpus);
        Self::with_index(corpus, model, index)
    }

    pub fn with_index(corpus: Corpus, model: TopicModel, index: Index) -> Self {
        Self {
            corpus: Arc::new(corpus),
            model,
            index: Arc::new(index),
            layout: LayoutParams::default(),
            bounds: Bounds::default(),
            session: SessionOptions::default(),
        }
    }
}

/// Shared handler state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub index: Arc<Index>,
    registry: Arc<Registry>,
}

struct Registry {
    layout: LayoutParams,
    bounds: Bounds,
    options: SessionOptions,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    counter: AtomicU64,
    salt: RandomState,
}

impl AppState {
    pub fn new(config: AppConfig) -> Self {
        Self {
            catalog: Arc::new(Catalog::new(config.corpus, config.model)),
            index: config.index,
            registry: Arc::new(Registry {
                layout: config.layout,
                bounds: config.bounds,
                options: config.session,
                sessions: RwLock::new(HashMap::new()),
                counter: AtomicU64::new(0),
                salt: RandomState::new(),
            }),
        }
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.registry
            .sessions
            .read()
            .expect("session registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))
    }

    /// Starts a session, empty or from a restored snapshot. Must run inside a
    /// tokio runtime.
    pub fn create_session(&self, restored: Option<Snapshot>) -> Arc<Session> {
        let r = &self.registry;
        let n = r.counter.fetch_add(1, Ordering::Relaxed);
        let id = format!("{:016x}", r.salt.hash_one(n));
        let initial = restored.unwrap_or_else(|| Snapshot {
            version: 0,
            epoch: 0,
            field: FieldState::new(r.bounds),
            params: r.layout,
        });
        let session = Session::spawn(id.clone(), self.catalog.clone(), initial, r.options);
        r.sessions
            .write()
            .expect("session registry poisoned")
            .insert(id, session.clone());
        session
    }

    /// Reads a file written by the save endpoint.
    pub fn restore(&self, path: &str) -> Result<Snapshot, ApiError> {
        let text = std::fs::read_to_string(path).map_err(|e| ApiError::NotFound(format!("cannot read {path}: {e}")))?;
        let saved: FieldResponse =
            serde_json::from_str(&text).map_err(|e| ApiError::BadRequest(format!("{path}: {e}")))?;
        let field = FieldState::try_from(saved.field).map_err(ApiError::BadRequest)?;
        routes::check_restored(self, &field)?;
        saved.layout.validate()?;
        // A restored session starts at a fresh epoch so that it settles once.
        Ok(Snapshot {
            version: saved.version,
            epoch: saved.epoch + 1,
            field,
            params: saved.layout,
        })
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
