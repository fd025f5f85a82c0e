//! HTTP API over a coverage-set store.
//!
//! | method | path                                   |                                   |
//! |--------|----------------------------------------|-----------------------------------|
//! | GET    | /api/health                            |                                   |
//! | GET    | /api/environments                      | shipped environments              |
//! | POST   | /api/solve                             | 202 + job id; solves in background |
//! | GET    | /api/jobs/{id}                         | job status and result id          |
//! | GET    | /api/coverage                          | stored run metadata               |
//! | GET    | /api/coverage/{id}                     | coverage.json as stored           |
//! | GET    | /api/coverage/{id}/what-if?param=x     | nearest policy evaluated at x     |
//! | POST   | /api/coverage/{id}/rollout             | one sampled episode               |
//! | POST   | /api/coverage/{id}/selection           | 201 new, 200 on token replay      |
//! | GET    | /api/coverage/{id}/selections          |                                   |
//!
//! Errors are `{"code", "message", "detail"}`.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;
use ubrl_core::envs::environments;
use ubrl_core::mdp::{discounted_return, simulate_episode};
use ubrl_core::solver::{evaluate, solve_coverage_set};
use ubrl_core::store::{locate, query_set, RunMeta, Store};
use ubrl_core::{decimal, Criterion, Error, GridSpec, Mdp, Solver};

use crate::problem;

#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: Value::Null }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (status, code, detail) = match &e {
            Error::InvalidId(id) => (StatusCode::BAD_REQUEST, "invalid_id", json!({ "id": id })),
            Error::Decimal(text) => (StatusCode::BAD_REQUEST, "bad_request", json!({ "value": text })),
            Error::NotFound { what, id } => (StatusCode::NOT_FOUND, "not_found", json!({ "what": what, "id": id })),
            Error::OutOfRange { value, lo, hi } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                "out_of_range",
                json!({ "value": decimal::format(*value), "lo": decimal::format(*lo), "hi": decimal::format(*hi) }),
            ),
            Error::OffGrid(value) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "off_grid", json!({ "value": decimal::format(*value) }))
            }
            Error::Io(_) | Error::Conflict(_) | Error::StorageFull(_) | Error::Csv(_) => {
                tracing::error!("{message}");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", Value::Null)
            }
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", Value::Null),
        };
        Self { status, code, message, detail }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum JobStatus {
    Running,
    Done { coverage_id: String },
    Failed { error: ApiErrorBody },
}

#[derive(Clone, Debug, Serialize)]
pub struct ApiErrorBody {
    code: &'static str,
    message: String,
}

pub struct AppState {
    store: Store,
    jobs: Mutex<HashMap<String, JobStatus>>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self { store, jobs: Mutex::new(HashMap::new()), next_job: AtomicU64::new(1) }
    }

    fn set_job(&self, id: &str, status: JobStatus) {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(id.to_string(), status);
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/environments", get(list_environments))
        .route("/solve", post(submit_solve))
        .route("/jobs/{id}", get(job_status))
        .route("/coverage", get(list_coverage))
        .route("/coverage/{id}", get(get_coverage))
        .route("/coverage/{id}/what-if", get(what_if))
        .route("/coverage/{id}/rollout", post(rollout))
        .route("/coverage/{id}/selection", post(select))
        .route("/coverage/{id}/selections", get(list_selections))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state);
    let app = Router::new().nest("/api", api);
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(TraceLayer::new_for_http())
}

pub async fn serve(addr: SocketAddr, store: Store, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let app = router(Arc::new(AppState::new(store)), static_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn list_environments() -> Json<Value> {
    Json(json!(environments()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    /// Shipped environment; exactly one of `env` and `mdp`.
    #[serde(default)]
    env: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, String>,
    /// Inline MDP in the same JSON form `ubrl env make` writes.
    #[serde(default)]
    mdp: Option<Value>,
    grid: GridSpec,
    #[serde(default)]
    criterion: Option<Criterion>,
    #[serde(default)]
    solver: Option<Solver>,
}

async fn submit_solve(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SolveRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    let (mdp, mdp_ref) = match (&req.env, &req.mdp) {
        (Some(name), None) => problem::shipped(name, &req.params)?,
        (None, Some(raw)) => {
            let mdp = Mdp::from_json(&raw.to_string())?;
            let report = mdp.validate();
            if !report.is_ok() {
                return Err(Error::InvalidMdp(report.violations.join("; ")).into());
            }
            (mdp.clone(), ubrl_core::MdpRef::custom(&mdp))
        }
        _ => return Err(ApiError::bad_request("give exactly one of `env` and `mdp`")),
    };
    let grid = req.grid.build()?;
    let criterion = req.criterion.unwrap_or_else(|| problem::default_criterion(grid.family()));
    let solver = req.solver.unwrap_or_else(|| problem::default_solver(criterion, &grid, 0.0));
    if solver.is_learner() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "unprocessable",
            format!("{} is a learner; train with the command line", solver.name()),
        ));
    }

    let job = format!("job-{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    state.set_job(&job, JobStatus::Running);
    let config = json!({ "command": "solve", "grid": grid.to_spec(), "criterion": criterion, "solver": solver });
    let worker = state.clone();
    let job_id = job.clone();
    tokio::task::spawn_blocking(move || {
        let result = solve_coverage_set(&mdp, &grid, criterion, solver)
            .map(|set| set.with_mdp_ref(mdp_ref))
            .and_then(|set| worker.store.save_coverage_set(&set, Some(&mdp), Some(&config)));
        let status = match result {
            Ok(coverage_id) => JobStatus::Done { coverage_id },
            Err(e) => {
                let e = ApiError::from(e);
                JobStatus::Failed { error: ApiErrorBody { code: e.code, message: e.message } }
            }
        };
        worker.set_job(&job_id, status);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job, "status": format!("/api/jobs/{job}") }))))
}

async fn job_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let jobs = state.jobs.lock().unwrap_or_else(|e| e.into_inner());
    let status = jobs.get(&id).ok_or_else(|| ApiError::from(Error::NotFound { what: "job", id: id.clone() }))?;
    let mut body = json!(status);
    body["job"] = json!(id);
    Ok(Json(body))
}

async fn list_coverage(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<RunMeta>>> {
    let metas = state.store.list()?.iter().map(|id| state.store.load_meta(id)).collect::<Result<Vec<_>, _>>()?;
    Ok(Json(metas))
}

async fn get_coverage(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let raw = state.store.load_raw(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], raw).into_response())
}

fn param_query(query: &HashMap<String, String>) -> ApiResult<f64> {
    let text = query.get("param").ok_or_else(|| ApiError::bad_request("missing query parameter `param`"))?;
    Ok(decimal::parse(text)?)
}

fn stored_mdp(state: &AppState, id: &str) -> ApiResult<Mdp> {
    state.store.load_mdp(id)?.ok_or_else(|| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unprocessable", "no MDP is stored with this coverage set")
    })
}

async fn what_if(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Json<Value>> {
    let param = param_query(&query)?;
    let set = state.store.load(&id)?;
    let mdp = stored_mdp(&state, &id)?;
    let found = query_set(&set, param)?;
    let spec = set.grid[found.index].with_param(param);
    let at_param = evaluate(&mdp, &found.entry.policy, &spec, set.criterion)?;
    Ok(Json(json!({
        "param": decimal::format(param),
        "grid_index": found.index,
        "grid_param": decimal::format(found.entry.param),
        "nearest": found.nearest,
        "policy": found.entry.policy,
        "evaluation": at_param,
        "stored": found.record,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutRequest {
    #[serde(with = "decimal")]
    param: f64,
    #[serde(default)]
    seed: u64,
}

async fn rollout(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<RolloutRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let set = state.store.load(&id)?;
    let mdp = stored_mdp(&state, &id)?;
    let grid: Vec<f64> = set.entries.iter().map(|e| e.param).collect();
    let (index, nearest) = locate(&grid, req.param)?;
    let trajectory = simulate_episode(&mdp, &set.entries[index].policy, req.seed)?;
    let ret = discounted_return(&trajectory, mdp.gamma);
    Ok(Json(json!({
        "grid_index": index,
        "grid_param": decimal::format(grid[index]),
        "nearest": nearest,
        "seed": req.seed,
        "trajectory": trajectory,
        "return": decimal::format(ret[0]),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRequest {
    #[serde(with = "decimal")]
    param: f64,
    #[serde(default)]
    note: String,
    #[serde(default)]
    token: Option<String>,
}

async fn select(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<SelectionRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    let worker = state.clone();
    let (record, created) = tokio::task::spawn_blocking(move || {
        worker.store.record_selection(&id, req.param, &req.note, req.token.as_deref())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!(record))))
}

async fn list_selections(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(state.store.list_selections(&id)?)))
}
