//! HTTP sessions over the combat simulator.
//!
//! A client creates a session from a scenario, then plays the druid one tick
//! at a time with `action`, or lets the bot decide with `bot-step`. Every
//! decision lands in the session's episode log, which can be downloaded or
//! fed to `/train` to fit a new model. Stored models can be attached to new
//! sessions.
//!
//! Requests on one session are serialized by a per-session lock; different
//! sessions proceed in parallel.

mod error;
mod session;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bayes_arena::learning::{extract_records, fit, FitReport};
use bayes_arena::model::{DecisionModel, ModelParams};
use bayes_arena::sim::{Action, BotMode, EpisodeLog, Scenario};
use bayes_arena::vars::Skill;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use session::{
    AvailabilityRow, BotStepResponse, CharacterView, DruidView, PairView, PosteriorView, Prob, Session, StateDocument,
    Status, StepResponse, TargetSkills, TOP_PAIRS, TOP_TARGETS,
};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: SocketAddr, source: std::io::Error },
    #[error("static directory {0} does not exist")]
    MissingStaticDir(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    /// Built play-ui assets. Without it only the API is served.
    pub static_dir: Option<PathBuf>,
    /// Where scenario names other than `A` and `B` are looked up.
    pub scenario_dir: Option<PathBuf>,
}

impl ServeConfig {
    pub fn local(port: u16) -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], port)),
            static_dir: None,
            scenario_dir: None,
        }
    }
}

/// A model produced by `/train`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredModel {
    pub id: String,
    pub roster_size: usize,
    pub sources: Vec<String>,
    pub report: FitReport,
}

type SessionRef = Arc<Mutex<Session>>;

#[derive(Default)]
struct Inner {
    sessions: RwLock<HashMap<String, SessionRef>>,
    models: RwLock<BTreeMap<String, (Arc<DecisionModel>, StoredModel)>>,
    next_model: AtomicU64,
    scenario_dir: Option<PathBuf>,
}

/// Shared state behind the router. Cheap to clone.
#[derive(Clone, Default)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(scenario_dir: Option<PathBuf>) -> Self {
        Self(Arc::new(Inner {
            scenario_dir,
            ..Inner::default()
        }))
    }

    fn session(&self, id: &str) -> Result<SessionRef, ApiError> {
        let sessions = self.0.sessions.read().unwrap_or_else(|e| e.into_inner());
        sessions.get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    fn model(&self, id: &str) -> Option<Arc<DecisionModel>> {
        let models = self.0.models.read().unwrap_or_else(|e| e.into_inner());
        models.get(id).map(|(m, _)| m.clone())
    }

    /// Adds a model under a fresh id and returns the id.
    pub fn store_model(&self, model: DecisionModel, sources: Vec<String>, report: FitReport) -> String {
        let id = format!("m{}", self.0.next_model.fetch_add(1, Ordering::Relaxed) + 1);
        let stored = StoredModel {
            id: id.clone(),
            roster_size: model.roster_size,
            sources,
            report,
        };
        let mut models = self.0.models.write().unwrap_or_else(|e| e.into_inner());
        models.insert(id.clone(), (Arc::new(model), stored));
        id
    }
}

fn lock(session: &SessionRef) -> std::sync::MutexGuard<'_, Session> {
    session.lock().unwrap_or_else(|e| e.into_inner())
}

/// The API routes, plus the play-ui assets as a fallback when given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/action", post(apply_action))
        .route("/sessions/{id}/bot-step", post(bot_step))
        .route("/sessions/{id}/posterior", get(get_posterior))
        .route("/sessions/{id}/log", get(get_log))
        .route("/train", post(train))
        .route("/models", get(list_models))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    if let Some(dir) = &config.static_dir {
        if !dir.is_dir() {
            return Err(ServeError::MissingStaticDir(dir.clone()));
        }
    }
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|source| ServeError::BindFailure {
            addr: config.addr,
            source,
        })?;
    let app = router(AppState::new(config.scenario_dir), config.static_dir);
    axum::serve(listener, app).await?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Name(String),
    Inline(Box<Scenario>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub model: Option<String>,
    /// Builds the session's model from parameters instead of a stored id.
    #[serde(default)]
    pub params: Option<ModelParams>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub state: StateDocument,
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateSession>) -> Result<Response, ApiError> {
    let scenario = match req.scenario {
        ScenarioRef::Name(name) => {
            Scenario::resolve_in(&name, app.0.scenario_dir.as_deref()).map_err(ApiError::bad_scenario)?
        }
        ScenarioRef::Inline(s) => {
            s.validate().map_err(ApiError::bad_scenario)?;
            *s
        }
    };
    let roster = scenario.roster.len();
    let model = match (&req.model, &req.params) {
        (Some(_), Some(_)) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "BadRequest",
                "give either a model id or parameters, not both",
            ))
        }
        (Some(id), None) => {
            let m = app.model(id).ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "UnknownModel",
                    format!("no model `{id}`"),
                )
            })?;
            if m.roster_size != roster {
                return Err(ApiError::bad_scenario(format!(
                    "model `{id}` was trained for {} characters, the scenario has {roster}",
                    m.roster_size
                )));
            }
            m
        }
        (None, params) => {
            let params = params.clone().unwrap_or_default();
            let m = DecisionModel::from_params(&params, roster)
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "BadParams", e))?;
            Arc::new(m)
        }
    };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(id.clone(), &scenario, req.model, model, req.seed).map_err(ApiError::bad_scenario)?;
    let state = session.state()?;
    app.0
        .sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(Created { id, state })).into_response())
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StateDocument>, ApiError> {
    let s = app.session(&id)?;
    let doc = lock(&s).state()?;
    Ok(Json(doc))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionRequest {
    pub skill: Skill,
    pub target: String,
}

async fn apply_action(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> Result<Json<StepResponse>, ApiError> {
    let s = app.session(&id)?;
    let resp = lock(&s).human_action(Action::new(req.skill, req.target))?;
    Ok(Json(resp))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BotStepRequest {
    #[serde(default = "default_mode")]
    pub mode: BotMode,
}

fn default_mode() -> BotMode {
    BotMode::Argmax
}

/// 200 with the chosen action, or 409 when nothing was legal and the bot
/// idled for the tick. Both carry the same document.
async fn bot_step(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<BotStepRequest>>,
) -> Result<Response, ApiError> {
    let mode = body.map_or(BotMode::Argmax, |Json(b)| b.mode);
    let s = app.session(&id)?;
    let resp = lock(&s).bot_step(mode)?;
    let status = if resp.idle {
        StatusCode::CONFLICT
    } else {
        StatusCode::OK
    };
    Ok((status, Json(resp)).into_response())
}

async fn get_posterior(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<PosteriorView>, ApiError> {
    let s = app.session(&id)?;
    let view = lock(&s).posterior()?;
    Ok(Json(view))
}

async fn get_log(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let s = app.session(&id)?;
    let body = lock(&s).episode().log().to_jsonl();
    let disposition = format!("attachment; filename=\"session-{id}.jsonl\"");
    Ok((
        [
            (header::CONTENT_TYPE, "application/x-ndjson".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        body,
    )
        .into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(default)]
    pub sessions: Vec<String>,
    /// Episode logs as JSON Lines text.
    #[serde(default)]
    pub logs: Vec<String>,
    #[serde(default = "default_pseudocount")]
    pub pseudocount: f64,
}

fn default_pseudocount() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trained {
    pub model_id: String,
    pub report: FitReport,
}

async fn train(State(app): State<AppState>, Json(req): Json<TrainRequest>) -> Result<Response, ApiError> {
    let mut logs: Vec<(String, EpisodeLog)> = Vec::new();
    for id in &req.sessions {
        let s = app.session(id)?;
        let log = lock(&s).episode().log().clone();
        logs.push((format!("session:{id}"), log));
    }
    for (k, text) in req.logs.iter().enumerate() {
        let log = EpisodeLog::from_jsonl(text).map_err(|e| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "MalformedLog",
                format!("log {k}: {e}"),
            )
        })?;
        logs.push((format!("upload:{k}"), log));
    }
    let mut records = Vec::new();
    for (_, log) in &logs {
        records.extend(extract_records(log).map_err(ApiError::from_learn)?);
    }
    if records.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "NoData",
            "no decision records in the given sources",
        ));
    }
    let (model, report) = fit(&records, req.pseudocount).map_err(ApiError::from_learn)?;
    let sources = logs.into_iter().map(|(name, _)| name).collect();
    let model_id = app.store_model(model, sources, report.clone());
    Ok((StatusCode::CREATED, Json(Trained { model_id, report })).into_response())
}

async fn list_models(State(app): State<AppState>) -> Json<Vec<StoredModel>> {
    let models = app.0.models.read().unwrap_or_else(|e| e.into_inner());
    Json(models.values().map(|(_, s)| s.clone()).collect())
}
