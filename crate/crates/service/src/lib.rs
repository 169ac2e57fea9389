//! HTTP front end for planning sessions.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | GET | `/api/health` | `{status, version}` |
//! | GET | `/api/sessions` | sessions on disk |
//! | POST | `/api/sessions` | `201 {session_id}`; body `{backend?, default_area?, profile?}` |
//! | GET | `/api/sessions/{id}` | backend, degraded and busy flags |
//! | POST | `/api/sessions/{id}/prompts` | `202 {turn, job_ids, reused, outcome?, message?}`; `409` mid-turn |
//! | GET | `/api/sessions/{id}/events?since=N&timeout_ms=M` | `{events, next}` long-poll |
//! | GET | `/api/sessions/{id}/jobs` | job records |
//! | GET | `/api/sessions/{id}/artifacts` | artifact references |
//! | GET | `/api/sessions/{id}/artifacts/{artifact}` | file bytes; `410` if deleted |
//!
//! Errors are `{"error": message}` with 400, 404, 409, 410 or 500.

pub mod config;
mod routes;
pub mod state;

use std::net::SocketAddr;
use std::thread::JoinHandle;

use thiserror::Error;

pub use config::{OsmSource, ServiceConfig};
pub use routes::router;
pub use state::{AppState, JobRecord, JobState};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Project(#[from] radioplan::project::ProjectError),
    #[error(transparent)]
    Agent(#[from] radioplan::agent::AgentError),
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("session {0} is running a turn; retry when it finishes")]
    Busy(String),
    #[error("{0}")]
    Gone(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Serves until the process is stopped.
pub fn run(config: ServiceConfig) -> Result<(), ServiceError> {
    let bind = config.bind.clone();
    let state = AppState::new(config)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}

/// A server on a background thread, stopped on [`ServerHandle::stop`] or drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn start(config: ServiceConfig) -> Result<Self, ServiceError> {
        let state = AppState::new(config.clone())?;
        let runtime = tokio::runtime::Runtime::new()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(&config.bind))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let served = axum::serve(listener, router(state)).with_graceful_shutdown(async move {
                    let _ = rx.await;
                });
                if let Err(e) = served.await {
                    log::error!("server stopped: {e}");
                }
            });
            runtime.shutdown_timeout(std::time::Duration::from_secs(30));
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.halt();
    }
}
