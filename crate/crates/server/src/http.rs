//! JSON HTTP service over immutable datasets and per-cohort sessions.
//!
//! Handlers clone the (cheap, `Arc`-based) session state under a short read
//! lock and compute outside it; writes replace whole session values.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use eventscope_core::ingest::SnapshotManifest;
use eventscope_core::layout::FocusParams;
use eventscope_core::query::{apply_attribute_filter, AttributeConstraint};
use eventscope_core::synth::{generate_synthetic, SyntheticSpec};
use eventscope_core::timeline::{Selection, TimelineSummary};
use eventscope_core::views::{ScatterParams, SortKey};
use eventscope_core::{execute_query, fixtures, ingest, Dataset, DatasetManifest, QuerySpec};
use moka::sync::Cache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{parse_r, Analysis, EngineError, StatsCache};

/// R used until a session sets its own.
pub const DEFAULT_R: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    /// Snapshots (one per subdirectory) loaded at startup.
    pub data_dir: Option<PathBuf>,
    /// Entries per recomputation cache.
    pub cache_size: u64,
    /// Also load the built-in demo datasets.
    pub fixtures: bool,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("address {0} is already in use")]
    PortInUse(SocketAddr),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
struct Session {
    dataset_id: String,
    analysis: Analysis,
    r: f64,
    locked: BTreeSet<String>,
}

/// Client-visible session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub dataset_id: String,
    pub cohort_id: String,
    pub timeline_version: u64,
    pub selection: Selection,
    pub r: f64,
    pub locked: BTreeSet<String>,
    pub entities: usize,
    pub positives: usize,
    pub outcome_rate: f64,
}

impl Session {
    fn state(&self) -> SessionState {
        let c = &self.analysis.cohort;
        SessionState {
            dataset_id: self.dataset_id.clone(),
            cohort_id: c.id.clone(),
            timeline_version: self.analysis.timeline.version,
            selection: self.analysis.selection.clone(),
            r: self.r,
            locked: self.locked.clone(),
            entities: c.len(),
            positives: c.positives(),
            outcome_rate: c.outcome_rate(),
        }
    }
}

pub struct AppState {
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    sessions: RwLock<BTreeMap<String, Session>>,
    stats: StatsCache,
    /// Serialized scatter bodies keyed by context and R.
    scatter: Cache<String, Arc<String>>,
}

impl AppState {
    pub fn new(cache_size: u64) -> Self {
        AppState {
            datasets: RwLock::default(),
            sessions: RwLock::default(),
            stats: StatsCache::new(cache_size),
            scatter: Cache::new(cache_size),
        }
    }

    /// Registers a dataset; ids are immutable once taken.
    pub fn add_dataset(&self, ds: Dataset) -> Result<SnapshotManifest, ApiError> {
        let mut map = self.datasets.write().expect("dataset registry lock");
        if map.contains_key(&ds.id) {
            return Err(ApiError::Conflict(format!("dataset `{}` already exists", ds.id)));
        }
        let manifest = ds.manifest();
        map.insert(ds.id.clone(), Arc::new(ds));
        Ok(manifest)
    }

    fn dataset(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        let map = self.datasets.read().expect("dataset registry lock");
        map.get(id).cloned().ok_or_else(|| EngineError::not_found("dataset", id).into())
    }

    fn session(&self, cohort: &str) -> Result<Session, ApiError> {
        let map = self.sessions.read().expect("session registry lock");
        map.get(cohort).cloned().ok_or_else(|| EngineError::not_found("cohort", cohort).into())
    }

    /// Applies `f` to the stored session under the write lock.
    fn update<T>(&self, cohort: &str, f: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let mut map = self.sessions.write().expect("session registry lock");
        let s = map.get_mut(cohort).ok_or_else(|| EngineError::not_found("cohort", cohort))?;
        f(s)
    }

    /// Opens (or returns the existing) session for a cohort.
    fn open(&self, dataset_id: &str, cohort: eventscope_core::Cohort) -> SessionState {
        let mut map = self.sessions.write().expect("session registry lock");
        map.entry(cohort.id.clone())
            .or_insert_with(|| Session {
                dataset_id: dataset_id.to_owned(),
                analysis: Analysis::new(Arc::new(cohort)),
                r: DEFAULT_R,
                locked: BTreeSet::new(),
            })
            .state()
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Conflict(String),
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    code: Option<String>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ApiError::Conflict(_) => (StatusCode::CONFLICT, None),
            ApiError::Engine(e) if e.is_not_found() => (StatusCode::NOT_FOUND, e.echo()),
            ApiError::Engine(e) => (StatusCode::BAD_REQUEST, e.echo()),
        };
        (status, Json(ErrorBody { error: self.to_string(), code })).into_response()
    }
}

impl From<eventscope_core::IngestError> for ApiError {
    fn from(e: eventscope_core::IngestError) -> Self {
        ApiError::Engine(e.into())
    }
}

impl From<eventscope_core::QueryError> for ApiError {
    fn from(e: eventscope_core::QueryError) -> Self {
        ApiError::Engine(e.into())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/datasets", get(list_datasets).post(create_dataset))
        .route("/datasets/synthetic", post(create_synthetic))
        .route("/datasets/{d}/query", post(run_query))
        .route("/cohorts/{c}", get(get_session))
        .route("/cohorts/{c}/filter", post(filter_cohort))
        .route("/cohorts/{c}/timeline", get(get_timeline))
        .route("/cohorts/{c}/selection", post(set_selection))
        .route("/cohorts/{c}/scatter", get(get_scatter))
        .route("/cohorts/{c}/cut", get(get_cut))
        .route("/cohorts/{c}/focus/{code}", get(get_focus))
        .route("/cohorts/{c}/milestones", post(add_milestone))
        .route("/cohorts/{c}/survival", get(get_survival))
        .route("/cohorts/{c}/attributes", get(get_attributes))
        .route("/cohorts/{c}/events/table", get(get_event_table))
        .route("/cohorts/{c}/lock", post(lock_code))
        .route("/cohorts/{c}/lock/{code}", delete(unlock_code))
        .with_state(state)
}

async fn list_datasets(State(app): Shared) -> Json<Vec<SnapshotManifest>> {
    let map = app.datasets.read().expect("dataset registry lock");
    Json(map.values().map(|d| d.manifest()).collect())
}

async fn create_dataset(State(app): Shared, Json(manifest): Json<DatasetManifest>) -> ApiResult<SnapshotManifest> {
    let ds = ingest(&manifest)?;
    Ok(Json(app.add_dataset(ds)?))
}

async fn create_synthetic(State(app): Shared, Json(spec): Json<SyntheticSpec>) -> ApiResult<SnapshotManifest> {
    let ds = generate_synthetic(&spec)?;
    Ok(Json(app.add_dataset(ds)?))
}

async fn run_query(State(app): Shared, Path(d): Path<String>, Json(spec): Json<QuerySpec>) -> ApiResult<SessionState> {
    let ds = app.dataset(&d)?;
    let cohort = execute_query(&ds, &spec)?;
    Ok(Json(app.open(&d, cohort)))
}

async fn get_session(State(app): Shared, Path(c): Path<String>) -> ApiResult<SessionState> {
    Ok(Json(app.session(&c)?.state()))
}

async fn filter_cohort(
    State(app): Shared,
    Path(c): Path<String>,
    Json(constraint): Json<AttributeConstraint>,
) -> ApiResult<SessionState> {
    let s = app.session(&c)?;
    let filtered = apply_attribute_filter(&s.analysis.cohort, &constraint)?;
    Ok(Json(app.open(&s.dataset_id, filtered)))
}

#[derive(Deserialize)]
struct DetailQuery {
    #[serde(default)]
    detail: bool,
}

async fn get_timeline(
    State(app): Shared,
    Path(c): Path<String>,
    Query(q): Query<DetailQuery>,
) -> ApiResult<TimelineSummary> {
    Ok(Json(app.session(&c)?.analysis.timeline_summary(q.detail)))
}

#[derive(Deserialize)]
struct SelectionBody {
    selection: String,
    #[serde(default)]
    r: Option<f64>,
}

async fn set_selection(
    State(app): Shared,
    Path(c): Path<String>,
    Json(body): Json<SelectionBody>,
) -> ApiResult<SessionState> {
    let selection: Selection = body.selection.parse().map_err(EngineError::from)?;
    if let Some(r) = body.r {
        parse_r(r)?;
    }
    app.update(&c, |s| {
        let next = Analysis { selection, ..s.analysis.clone() };
        next.validate_selection()?;
        s.analysis = next;
        if let Some(r) = body.r {
            s.r = r;
        }
        Ok(Json(s.state()))
    })
}

#[derive(Deserialize)]
struct RQuery {
    #[serde(rename = "R", alias = "r")]
    r: Option<f64>,
}

fn json_body(body: Arc<String>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body.as_str().to_owned()).into_response()
}

async fn get_scatter(State(app): Shared, Path(c): Path<String>, Query(q): Query<RQuery>) -> Result<Response, ApiError> {
    let s = app.session(&c)?;
    let r = q.r.unwrap_or(s.r);
    parse_r(r)?;
    let key = format!("{}/R={r:?}", s.analysis.key());
    if let Some(hit) = app.scatter.get(&key) {
        return Ok(json_body(hit));
    }
    let view = s.analysis.scatter(&app.stats, r, &ScatterParams::default())?;
    let body = Arc::new(serde_json::to_string(&view).expect("scatter view serializes"));
    app.scatter.insert(key, body.clone());
    Ok(json_body(body))
}

async fn get_cut(
    State(app): Shared,
    Path(c): Path<String>,
    Query(q): Query<RQuery>,
) -> ApiResult<crate::engine::CutReport> {
    let s = app.session(&c)?;
    Ok(Json(s.analysis.cut(&app.stats, q.r.unwrap_or(s.r))?))
}

async fn get_focus(
    State(app): Shared,
    Path((c, code)): Path<(String, String)>,
) -> ApiResult<crate::engine::FocusView> {
    let s = app.session(&c)?;
    Ok(Json(s.analysis.focus(&app.stats, &code, &FocusParams::default())?))
}

#[derive(Deserialize)]
struct MilestoneBody {
    edge: String,
    code: String,
}

#[derive(Serialize)]
struct MilestoneResponse {
    timeline_version: u64,
    timeline: TimelineSummary,
}

async fn add_milestone(
    State(app): Shared,
    Path(c): Path<String>,
    Json(body): Json<MilestoneBody>,
) -> ApiResult<MilestoneResponse> {
    app.update(&c, |s| {
        s.analysis = s.analysis.add_milestone(&body.edge, &body.code)?;
        Ok(Json(MilestoneResponse {
            timeline_version: s.analysis.timeline.version,
            timeline: s.analysis.timeline_summary(false),
        }))
    })
}

async fn get_survival(
    State(app): Shared,
    Path(c): Path<String>,
) -> ApiResult<eventscope_core::timeline::SurvivalCurve> {
    Ok(Json(app.session(&c)?.analysis.survival()?))
}

async fn get_attributes(
    State(app): Shared,
    Path(c): Path<String>,
) -> ApiResult<Vec<eventscope_core::views::AttributeSummary>> {
    Ok(Json(app.session(&c)?.analysis.attributes()))
}

#[derive(Deserialize)]
struct SortQuery {
    sort: Option<String>,
}

async fn get_event_table(
    State(app): Shared,
    Path(c): Path<String>,
    Query(q): Query<SortQuery>,
) -> ApiResult<crate::engine::EventTableView> {
    let sort = match q.sort.as_deref() {
        None => SortKey::default(),
        Some(s) => s.parse().map_err(EngineError::BadRequest)?,
    };
    Ok(Json(app.session(&c)?.analysis.event_table(&app.stats, sort)?))
}

#[derive(Deserialize)]
struct LockBody {
    code: String,
}

async fn lock_code(State(app): Shared, Path(c): Path<String>, Json(body): Json<LockBody>) -> ApiResult<SessionState> {
    app.update(&c, |s| {
        if s.analysis.cohort.hierarchy.id(&body.code).is_none() {
            return Err(EngineError::not_found("event type code", body.code.clone()).into());
        }
        s.locked.insert(body.code.clone());
        Ok(Json(s.state()))
    })
}

async fn unlock_code(State(app): Shared, Path((c, code)): Path<(String, String)>) -> ApiResult<SessionState> {
    app.update(&c, |s| {
        s.locked.remove(&code);
        Ok(Json(s.state()))
    })
}

/// Loads every snapshot directory under `dir`.
pub fn load_data_dir(app: &AppState, dir: &std::path::Path) -> Result<usize, ServeError> {
    let entries = std::fs::read_dir(dir).map_err(|e| ServeError::BadConfig(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    let mut loaded = 0;
    for p in paths.into_iter().filter(|p| p.join("manifest.json").is_file()) {
        let ds = Dataset::load(&p).map_err(|e| ServeError::BadConfig(e.to_string()))?;
        app.add_dataset(ds).map_err(|e| ServeError::BadConfig(e.to_string()))?;
        loaded += 1;
    }
    Ok(loaded)
}

pub fn build_state(config: &ServeConfig) -> Result<Arc<AppState>, ServeError> {
    if config.cache_size == 0 {
        return Err(ServeError::BadConfig("cache size must be positive".into()));
    }
    let app = AppState::new(config.cache_size);
    if let Some(dir) = &config.data_dir {
        load_data_dir(&app, dir)?;
    }
    if config.fixtures {
        for ds in [fixtures::use_case(), fixtures::heart_failure()] {
            let ds = ds.map_err(|e| ServeError::BadConfig(e.to_string()))?;
            app.add_dataset(ds).map_err(|e| ServeError::BadConfig(e.to_string()))?;
        }
    }
    Ok(Arc::new(app))
}

pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let state = build_state(&config)?;
    let listener = tokio::net::TcpListener::bind(config.addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(config.addr),
        _ => ServeError::Io(e),
    })?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
