//! HTTP service for participatory budgeting elections.
//!
//! Routes:
//!
//! | method | path | auth |
//! |--------|------|------|
//! | `POST` | `/elections` | admin |
//! | `GET`  | `/elections/{id}` | none |
//! | `POST` | `/elections/{id}/close` | admin |
//! | `POST` | `/elections/{id}/voters/{voter}/edits` | none |
//! | `GET`  | `/elections/{id}/voters/{voter}/session` | none |
//! | `POST` | `/elections/{id}/voters/{voter}/submit` | none |
//! | `GET`  | `/elections/{id}/tally?rule=greedy\|exact` | admin |
//!
//! Ballot drafts are held server-side per `(election, voter)` and only ever
//! change through the ballot engine, so the server, not the browser, is what
//! keeps a draft within budget. Rejected edits come back as in-band
//! feedback next to the unchanged draft.

mod api;
mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use parking_lot::Mutex;
use pb_core::VoteStore;

pub use api::{ElectionView, Receipt};
pub use error::ApiError;
pub use session::{Feedback, SessionState};

pub const ENV_ADMIN_TOKEN: &str = "PB_ADMIN_TOKEN";
pub const ENV_DATA_DIR: &str = "PB_DATA_DIR";
pub const ENV_LISTEN_ADDR: &str = "PB_LISTEN_ADDR";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Bearer token for admin routes. Admin routes are refused when unset.
    pub admin_token: Option<String>,
    pub data_dir: PathBuf,
    pub listen_addr: SocketAddr,
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, String> {
        let admin_token = std::env::var(ENV_ADMIN_TOKEN).ok().filter(|t| !t.is_empty());
        let data_dir = std::env::var_os(ENV_DATA_DIR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("pb-data"));
        let listen_addr = std::env::var(ENV_LISTEN_ADDR)
            .unwrap_or_else(|_| "127.0.0.1:8080".to_owned())
            .parse()
            .map_err(|e| format!("{ENV_LISTEN_ADDR}: {e}"))?;
        Ok(ServiceConfig {
            admin_token,
            data_dir,
            listen_addr,
        })
    }
}

type SessionKey = (String, String);

pub struct AppState {
    store: VoteStore,
    admin_token: Option<String>,
    sessions: Mutex<HashMap<SessionKey, Arc<Mutex<session::Session>>>>,
}

impl AppState {
    pub fn new(store: VoteStore, admin_token: Option<String>) -> Self {
        AppState {
            store,
            admin_token,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &VoteStore {
        &self.store
    }

    fn session(&self, election_id: &str, voter_id: &str) -> Arc<Mutex<session::Session>> {
        let mut sessions = self.sessions.lock();
        sessions
            .entry((election_id.to_owned(), voter_id.to_owned()))
            .or_default()
            .clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/elections", post(api::create_election))
        .route("/elections/{id}", get(api::get_election))
        .route("/elections/{id}/close", post(api::close_election))
        .route("/elections/{id}/voters/{voter}/edits", post(api::edit_ballot))
        .route("/elections/{id}/voters/{voter}/session", get(api::get_session))
        .route("/elections/{id}/voters/{voter}/submit", post(api::submit_ballot))
        .route("/elections/{id}/tally", get(api::get_tally))
        .with_state(state)
}

/// Binds `addr` and serves the API from a background task on the current
/// tokio runtime. Returns the bound address (useful with port 0).
pub async fn spawn(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<SocketAddr> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router(state)).await {
            log::error!("server error: {e}");
        }
    });
    Ok(bound)
}
