use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::Json;
use pb_core::{
    apply_edit, parse_config, select_winners, tally, validate_config, Edit, ElectionConfig,
    MethodSpec, Project, SelectionRule, StoreError, TallyResult, UiVariant,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::session::SessionState;
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

fn require_admin(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(expected) = state.admin_token.as_deref() else {
        return Err(ApiError::unauthorized());
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match presented {
        Some(token) if token == expected => Ok(()),
        _ => Err(ApiError::unauthorized()),
    }
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

pub async fn create_election(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: String,
) -> ApiResult<(StatusCode, Json<Value>)> {
    require_admin(&state, &headers)?;
    let config = parse_config(&body).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "parse_error", e.message.clone())
            .with("field", &e.field)
            .with("line", e.line)
            .with("column", e.column)
    })?;
    let violations = validate_config(&config);
    if !violations.is_empty() {
        return Err(StoreError::InvalidConfig(violations).into());
    }
    let id = config.id.clone();
    blocking(move || Ok(state.store.create_election(config)?)).await?;
    log::info!("created election {id}");
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

/// Public description of an election. Ballots are never included.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct ElectionView {
    pub id: String,
    pub name: String,
    pub monetary_budget: u64,
    pub method: MethodSpec,
    pub ui_variant: UiVariant,
    pub projects: Vec<Project>,
    pub open: bool,
}

impl From<ElectionConfig> for ElectionView {
    fn from(c: ElectionConfig) -> Self {
        ElectionView {
            id: c.id,
            name: c.name,
            monetary_budget: c.monetary_budget,
            method: c.method_spec,
            ui_variant: c.ui_variant,
            projects: c.projects,
            open: c.open,
        }
    }
}

pub async fn get_election(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<ElectionView>> {
    Ok(Json(state.store.election(&id)?.into()))
}

pub async fn close_election(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<Json<ElectionView>> {
    require_admin(&state, &headers)?;
    let view = blocking(move || {
        state.store.close_election(&id)?;
        Ok(state.store.election(&id)?)
    })
    .await?;
    Ok(Json(view.into()))
}

fn open_election(state: &AppState, id: &str) -> ApiResult<ElectionConfig> {
    let election = state.store.election(id)?;
    if !election.open {
        return Err(StoreError::ElectionClosed(id.to_owned()).into());
    }
    Ok(election)
}

pub async fn edit_ballot(
    State(state): State<Arc<AppState>>,
    Path((id, voter)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<SessionState>> {
    let edit: Edit = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("invalid edit: {e}")))?;
    let election = open_election(&state, &id)?;
    let session = state.session(&id, &voter);
    let mut session = session.lock();
    let current = session.draft(&election).clone();
    match apply_edit(&election, &current, &edit) {
        Ok(next) => {
            session.draft = Some(next);
            session.last_error = None;
        }
        Err(violation) => {
            log::debug!("{id}/{voter}: rejected {edit:?}: {violation}");
            session.last_error = Some(violation.into());
        }
    }
    let draft = session.draft(&election).clone();
    SessionState::build(&election, &voter, &draft, session.last_error.clone())
        .map(Json)
        .map_err(|v| ApiError::internal(format!("draft left the engine's invariants: {v}")))
}

pub async fn get_session(
    State(state): State<Arc<AppState>>,
    Path((id, voter)): Path<(String, String)>,
) -> ApiResult<Json<SessionState>> {
    let election = state.store.election(&id)?;
    let session = state.session(&id, &voter);
    let mut session = session.lock();
    let draft = session.draft(&election).clone();
    SessionState::build(&election, &voter, &draft, session.last_error.clone())
        .map(Json)
        .map_err(|v| ApiError::internal(format!("draft left the engine's invariants: {v}")))
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub election_id: String,
    pub voter_id: String,
    pub sequence: u64,
}

pub async fn submit_ballot(
    State(state): State<Arc<AppState>>,
    Path((id, voter)): Path<(String, String)>,
) -> ApiResult<(StatusCode, Json<Receipt>)> {
    let receipt = blocking(move || {
        let election = open_election(&state, &id)?;
        let session = state.session(&id, &voter);
        // Held through the append so edits to this session wait for it.
        let mut session = session.lock();
        let draft = session.draft(&election).clone();
        let record = state.store.append_vote(&id, &voter, draft)?;
        Ok(Receipt {
            election_id: record.election_id,
            voter_id: record.voter_id,
            sequence: record.sequence,
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(receipt)))
}

#[derive(Deserialize)]
pub struct TallyQuery {
    rule: Option<String>,
}

pub async fn get_tally(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(query): Query<TallyQuery>,
) -> ApiResult<Json<TallyResult>> {
    require_admin(&state, &headers)?;
    let rule: SelectionRule = query
        .rule
        .as_deref()
        .unwrap_or("greedy")
        .parse()
        .map_err(ApiError::bad_request)?;
    let result = blocking(move || {
        let election = state.store.election(&id)?;
        let ballots = state.store.effective_ballots(&id)?;
        let board = tally(&election, &ballots)?;
        Ok(select_winners(
            &board,
            &election.projects,
            election.monetary_budget,
            rule,
        )?)
    })
    .await?;
    Ok(Json(result))
}
