//! HTTP endpoints over sessions, group memory and exports.
//!
//! Sessions live in memory, each behind its own lock so one session's
//! feedback calls are serialised while different sessions proceed in
//! parallel. The group store is single-writer/multi-reader and written
//! through to `<data_dir>/groups.jsonl` whenever a session completes; every
//! answered batch is appended to `<data_dir>/events.jsonl`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use refine_core::export::{export_class_dataset, export_pairs, ClassDatasetManifest};
use refine_core::groups::{append_events, read_events, GroupStats, GroupStore};
use refine_core::metrics::SessionMetrics;
use refine_core::session::{BatchSource, Query, Session, SessionConfig, SessionStatus, WeightMode};
use refine_core::{data, Dataset};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub const GROUPS_FILE: &str = "groups.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub manifest: PathBuf,
    pub features: PathBuf,
    /// Holds the group store and the feedback log.
    pub data_dir: PathBuf,
    /// Thumbnails and UI assets, served under `/static`.
    pub static_root: Option<PathBuf>,
    /// Session settings used when a request leaves them out.
    pub defaults: SessionConfig,
    /// Number sessions and timestamp events with a counter instead of the
    /// wall clock, making responses reproducible.
    pub logical_clock: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("failed to load the dataset: {0}")]
    Dataset(#[source] refine_core::Error),
    #[error("failed to load the group store: {0}")]
    Groups(#[source] refine_core::Error),
    #[error("cannot create data directory {path}: {source}")]
    DataDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid session defaults: {0}")]
    Defaults(#[source] refine_core::Error),
}

pub struct AppState {
    dataset: Dataset,
    defaults: SessionConfig,
    data_dir: PathBuf,
    static_root: Option<PathBuf>,
    logical_clock: bool,
    id_prefix: String,
    next_session: AtomicU64,
    ticks: AtomicU64,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    groups: RwLock<GroupStore>,
    /// Serialises appends to the feedback log.
    events: Mutex<()>,
}

impl AppState {
    pub fn load(cfg: &ServerConfig) -> Result<Self, StartupError> {
        cfg.defaults.validate().map_err(StartupError::Defaults)?;
        let dataset =
            data::load_dataset(&cfg.manifest, &cfg.features).map_err(StartupError::Dataset)?;
        std::fs::create_dir_all(&cfg.data_dir).map_err(|source| StartupError::DataDir {
            path: cfg.data_dir.clone(),
            source,
        })?;
        let groups = GroupStore::load_or_default(cfg.data_dir.join(GROUPS_FILE))
            .map_err(StartupError::Groups)?;
        let id_prefix = if cfg.logical_clock {
            "s".to_string()
        } else {
            format!("s{:x}-", now_millis())
        };
        log::info!(
            "loaded {} items of dim {}, {} groups",
            dataset.len(),
            dataset.dim(),
            groups.group_count()
        );
        Ok(Self {
            dataset,
            defaults: cfg.defaults.clone(),
            data_dir: cfg.data_dir.clone(),
            static_root: cfg.static_root.clone(),
            logical_clock: cfg.logical_clock,
            id_prefix,
            next_session: AtomicU64::new(1),
            ticks: AtomicU64::new(1),
            sessions: RwLock::new(HashMap::new()),
            groups: RwLock::new(groups),
            events: Mutex::new(()),
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    fn now(&self) -> u64 {
        if self.logical_clock {
            self.ticks.fetch_add(1, Ordering::SeqCst)
        } else {
            now_millis()
        }
    }

    fn groups_path(&self) -> PathBuf {
        self.data_dir.join(GROUPS_FILE)
    }

    fn events_path(&self) -> PathBuf {
        self.data_dir.join(EVENTS_FILE)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown session {id:?}")))
    }
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/batch", get(get_batch))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/groups", get(get_groups))
        .route("/export/pairs", post(export_pairs_csv))
        .route("/export/classes", post(export_classes));
    if let Some(root) = &state.static_root {
        app = app.nest_service("/static", ServeDir::new(root));
    }
    app.with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl From<refine_core::Error> for ApiError {
    fn from(e: refine_core::Error) -> Self {
        use refine_core::Error as E;
        match e {
            E::Feedback(_) => ApiError::Unprocessable(e.to_string()),
            E::State(_) => ApiError::Conflict(e.to_string()),
            E::Validation(_) | E::Shape(_) | E::Parameter(_) | E::Session(_) | E::Export(_) => {
                ApiError::BadRequest(e.to_string())
            }
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        (
            status,
            Json(serde_json::json!({ "error": self.to_string() })),
        )
            .into_response()
    }
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct Health {
    pub status: String,
    pub items: usize,
    pub dim: usize,
    pub groups: usize,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        items: state.dataset.len(),
        dim: state.dataset.dim(),
        groups: state
            .groups
            .read()
            .expect("group lock poisoned")
            .group_count(),
    })
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub query_id: Option<String>,
    pub query_vector: Option<Vec<f64>>,
    pub scope: Option<usize>,
    pub max_iterations: Option<usize>,
    pub weight_mode: Option<WeightMode>,
    pub grouping: Option<bool>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct SessionHandle {
    pub id: String,
    pub created_at: u64,
    pub config: SessionConfig,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub id: String,
    pub distance: f64,
    /// Whether the item came from group memory rather than ranking.
    pub from_group: bool,
    pub thumbnail: Option<String>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct BatchView {
    pub session_id: String,
    pub iteration: usize,
    pub status: SessionStatus,
    pub items: Vec<BatchItem>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct CreatedSession {
    pub session: SessionHandle,
    pub batch: BatchView,
}

fn batch_view(id: &str, session: &Session, dataset: &Dataset) -> BatchView {
    let batch = session.current_batch();
    BatchView {
        session_id: id.to_string(),
        iteration: batch.iteration,
        status: session.status(),
        items: batch
            .entries
            .iter()
            .map(|e| BatchItem {
                id: e.id.clone(),
                distance: e.distance,
                from_group: e.source == BatchSource::GroupFill,
                thumbnail: dataset.item(&e.id).and_then(|i| i.thumbnail.clone()),
            })
            .collect(),
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<CreatedSession>), ApiError> {
    let query = match (req.query_id, req.query_vector) {
        (Some(id), None) => Query::Item(id),
        (None, Some(v)) => Query::Vector(v),
        _ => {
            return Err(ApiError::BadRequest(
                "exactly one of query_id and query_vector is required".into(),
            ))
        }
    };
    let d = &state.defaults;
    let config = SessionConfig {
        scope: req.scope.unwrap_or(d.scope),
        max_iterations: req.max_iterations.unwrap_or(d.max_iterations),
        delta: req.delta.unwrap_or(d.delta),
        weight_mode: req.weight_mode.unwrap_or(d.weight_mode),
        grouping_enabled: req.grouping.unwrap_or(d.grouping_enabled),
        rng_seed: req.seed.unwrap_or(d.rng_seed),
    };
    let session = Session::start(query, &state.dataset, config.clone())?;
    let n = state.next_session.fetch_add(1, Ordering::SeqCst);
    let id = format!("{}{n:06}", state.id_prefix);
    let created_at = state.now();
    let batch = batch_view(&id, &session, &state.dataset);
    state
        .sessions
        .write()
        .expect("session map lock poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    log::debug!("session {id} started");
    Ok((
        StatusCode::CREATED,
        Json(CreatedSession {
            session: SessionHandle {
                id,
                created_at,
                config,
            },
            batch,
        }),
    ))
}

async fn get_batch(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<BatchView>, ApiError> {
    let entry = state.session(&id)?;
    let entry = entry.lock().expect("session lock poisoned");
    Ok(Json(batch_view(&id, &entry, &state.dataset)))
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    pub relevant_ids: Vec<String>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct FeedbackResponse {
    pub status: SessionStatus,
    /// The next batch; absent once the session is complete.
    pub batch: Option<BatchView>,
    pub metrics: SessionMetrics,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

async fn submit_feedback(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<Feedback>,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let entry = state.session(&id)?;
    let mut session = entry.lock().expect("session lock poisoned");
    let warnings_before = session.warnings().len();
    let status = {
        let groups = state.groups.read().expect("group lock poisoned");
        session.submit_feedback(&req.relevant_ids, &state.dataset, Some(&groups))?
    };

    let timestamp = state.now();
    if let Some(event) = session.feedback_events(&id, timestamp).pop() {
        let _guard = state.events.lock().expect("event log lock poisoned");
        append_events(state.events_path(), &[event])?;
    }
    if status == SessionStatus::Complete {
        let mut groups = state.groups.write().expect("group lock poisoned");
        let outcome = groups.record_session(session.relevant(), session.matched_roots());
        groups.save(state.groups_path())?;
        log::info!("session {id} complete: {outcome:?}");
    }

    Ok(Json(FeedbackResponse {
        status,
        batch: (status == SessionStatus::AwaitingFeedback)
            .then(|| batch_view(&id, &session, &state.dataset)),
        metrics: SessionMetrics::from_session(&session),
        warnings: session.warnings()[warnings_before..].to_vec(),
    }))
}

async fn get_metrics(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionMetrics>, ApiError> {
    let entry = state.session(&id)?;
    let entry = entry.lock().expect("session lock poisoned");
    Ok(Json(SessionMetrics::from_session(&entry)))
}

#[derive(Serialize, Deserialize, Debug, PartialEq)]
pub struct GroupsView {
    pub stats: GroupStats,
    /// Root id to sorted member ids.
    pub groups: BTreeMap<String, Vec<String>>,
}

async fn get_groups(State(state): State<Arc<AppState>>) -> Json<GroupsView> {
    let groups = state.groups.read().expect("group lock poisoned");
    Json(GroupsView {
        stats: groups.stats(),
        groups: groups.groups(),
    })
}

fn logged_events(path: &Path) -> Result<Vec<refine_core::groups::FeedbackEvent>, ApiError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    Ok(read_events(path)?)
}

async fn export_pairs_csv(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let events = {
        let _guard = state.events.lock().expect("event log lock poisoned");
        logged_events(&state.events_path())?
    };
    let export = export_pairs(&events)?;
    let mut body = Vec::new();
    export.write_csv(&mut body)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], body).into_response())
}

#[derive(Deserialize, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct ClassExportRequest {
    pub min_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for ClassExportRequest {
    fn default() -> Self {
        Self {
            min_size: 10,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

async fn export_classes(
    State(state): State<Arc<AppState>>,
    body: Option<Json<ClassExportRequest>>,
) -> Result<Json<ClassDatasetManifest>, ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let groups = state.groups.read().expect("group lock poisoned");
    Ok(Json(export_class_dataset(
        &groups,
        req.min_size,
        req.val_fraction,
        req.seed,
    )?))
}

/// Serves the API on `addr` until Ctrl-C.
pub async fn serve(cfg: &ServerConfig, addr: &str) -> anyhow::Result<()> {
    let state = Arc::new(AppState::load(cfg)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
