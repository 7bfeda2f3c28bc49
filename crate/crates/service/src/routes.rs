use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use dna::export::{search_document, to_canonical_json, DiffLayer, Environment, OptionRecord, TrajectoryRecord};
use dna::search::{SearchConfig, SolverMode};
use dna::sim::{sample_trajectories, simulate_plan, SimConfig, SimReport};
use dna::GridState;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::jobs::{Job, JobStatus, JobView};
use crate::AppState;

pub const MAX_SAMPLE_TRAJECTORIES: usize = 20;
pub const ROLLOUT_SCHEMA: &str = "dna.rollout/1";

type Shared = State<Arc<AppState>>;

pub(crate) fn api() -> Router<Arc<AppState>> {
    Router::new()
        .route("/envs", get(list_envs))
        .route("/env/{id}", get(get_env))
        .route("/search", post(post_search))
        .route("/search/{job}", get(get_search))
        .route("/search/{job}/result", get(get_search_result))
        .route("/rollout", post(post_rollout))
        .route("/option/{id}/diff/{other}", get(get_diff))
}

pub(crate) fn json_text<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match to_canonical_json(value) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::BadRequest(format!("worker failed: {e}")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvSummary {
    pub id: String,
    pub shape: Vec<usize>,
    pub gamma: f64,
    pub start: Vec<i64>,
}

async fn list_envs(State(state): Shared) -> Response {
    let envs: Vec<EnvSummary> = state
        .envs
        .values()
        .map(|e| EnvSummary {
            id: e.id.clone(),
            shape: e.mdp.shape().extents().to_vec(),
            gamma: e.mdp.gamma(),
            start: e.mdp.start_state().coords().to_vec(),
        })
        .collect();
    json_text(StatusCode::OK, &envs)
}

/// Grid, tiles and the benchmark heatmap of one environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvView {
    pub id: String,
    pub environment: Environment,
    pub shape: Vec<usize>,
    pub start: Vec<i64>,
    /// `V*` in state-id order.
    pub values: Vec<f64>,
    /// Greedy benchmark action per state.
    pub policy: Vec<String>,
}

fn find_env(state: &AppState, id: &str) -> Result<Arc<crate::LoadedEnv>, ApiError> {
    state
        .env(id)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("unknown environment {id:?}")))
}

async fn get_env(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let env = find_env(&state, &id)?;
    let view = EnvView {
        id: env.id.clone(),
        environment: Environment::from_mdp(&env.mdp),
        shape: env.mdp.shape().extents().to_vec(),
        start: env.mdp.start_state().coords().to_vec(),
        values: env.bench.values.0.clone(),
        policy: env.bench.policy.0.iter().map(|a| a.name()).collect(),
    };
    Ok(json_text(StatusCode::OK, &view))
}

/// Body of `POST /search`. `d` and `spacing` default to the environment's
/// configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub env: String,
    pub start: Vec<i64>,
    pub epsilon: f64,
    pub cells: usize,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub spacing: Option<usize>,
    #[serde(default)]
    pub mode: SolverMode,
    /// Learner seed, used only when `mode` is Q-learning.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Serialize)]
struct JobCreated {
    job: String,
    status: JobStatus,
}

async fn post_search(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: SearchRequest = parse_body(&body)?;
    let env = find_env(&state, &req.env)?;
    let cfg = env.mdp.config();
    let mut query = SearchConfig::new(
        GridState::new(req.start.clone()),
        req.epsilon,
        req.cells,
        req.d.unwrap_or(cfg.cell_d),
        req.spacing.unwrap_or(cfg.cell_spacing),
    );
    query.mode = req.mode;
    if query.mode == SolverMode::QLearning {
        query.qlearn.seed = req.seed;
    }
    query.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let start = env
        .mdp
        .id(&query.start)
        .map_err(|e| ApiError::BadRequest(e.to_string()))?;
    if env.bench.values[start] <= 0.0 {
        return Err(ApiError::Unprocessable(format!(
            "V*(start) is zero at {:?}; no option can be compared against it",
            req.start
        )));
    }
    let id = state.jobs.create(&env.id, query.clone());
    let worker_state = state.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || run_job(&worker_state, &job_id, &env, &query));
    Ok(json_text(
        StatusCode::ACCEPTED,
        &JobCreated {
            job: id,
            status: JobStatus::Queued,
        },
    ))
}

fn run_job(state: &AppState, id: &str, env: &crate::LoadedEnv, query: &SearchConfig) {
    state.jobs.advance(id, JobStatus::Running);
    let outcome = search_document(&env.mdp, query).and_then(|doc| {
        let text = to_canonical_json(&doc)?;
        Ok((doc, text))
    });
    if let (Ok((_, text)), Some(dir)) = (&outcome, &state.persist) {
        // Persistence is best effort; the in-memory result stays authoritative.
        let _ = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(format!("job-{id}.json")), text));
    }
    state.jobs.finish(id, outcome.map_err(|e| e.to_string()));
}

fn find_job(state: &AppState, id: &str) -> Result<Job, ApiError> {
    state
        .jobs
        .get(id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown job {id:?}")))
}

fn finished_job(state: &AppState, id: &str) -> Result<Job, ApiError> {
    let job = find_job(state, id)?;
    match job.status {
        JobStatus::Done => Ok(job),
        JobStatus::Failed => Err(ApiError::Conflict(format!(
            "job {id} failed: {}",
            job.error.as_deref().unwrap_or("unknown error")
        ))),
        status => Err(ApiError::Conflict(format!("job {id} is {status:?}, not done"))),
    }
}

async fn get_search(State(state): Shared, Path(job): Path<String>) -> Result<Response, ApiError> {
    let job = find_job(&state, &job)?;
    Ok(json_text(StatusCode::OK, &JobView::from(&job)))
}

/// The search document alone, byte-identical to the command line's output.
async fn get_search_result(State(state): Shared, Path(job): Path<String>) -> Result<Response, ApiError> {
    let job = finished_job(&state, &job)?;
    let text = job.canonical.expect("done jobs carry their document");
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], text.as_str().to_owned()).into_response())
}

/// Looks an option up by id, or by rank when `key` is a number.
fn find_option<'a>(job: &'a Job, key: &str) -> Result<&'a OptionRecord, ApiError> {
    let doc = job.result.as_ref().expect("done jobs carry their document");
    doc.options
        .iter()
        .find(|o| o.id == key)
        .or_else(|| key.parse::<usize>().ok().and_then(|rank| doc.options.get(rank)))
        .ok_or_else(|| ApiError::NotFound(format!("job {} has no option {key:?}", job.id)))
}

/// Body of `POST /rollout`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutRequest {
    pub job: String,
    /// Option id, or its rank in the job's option list.
    pub option: String,
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub step_cap: Option<usize>,
    /// Sample trajectories to return, at most [`MAX_SAMPLE_TRAJECTORIES`].
    #[serde(default = "default_samples")]
    pub trajectories: usize,
}

fn default_samples() -> usize {
    MAX_SAMPLE_TRAJECTORIES
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RolloutResponse {
    pub schema: String,
    pub option: String,
    pub report: SimReport,
    pub trajectories: Vec<TrajectoryRecord>,
}

async fn post_rollout(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: RolloutRequest = parse_body(&body)?;
    if req.n == 0 {
        return Err(ApiError::BadRequest("n must be at least 1".into()));
    }
    let job = finished_job(&state, &req.job)?;
    let record = find_option(&job, &req.option)?.clone();
    let env = find_env(&state, &job.env)?;
    let response = blocking(move || -> Result<RolloutResponse, ApiError> {
        let plan = record.to_plan(&env.mdp)?;
        let cfg = SimConfig {
            n: req.n,
            base_seed: req.seed,
            step_cap: req.step_cap,
        };
        let report = simulate_plan(&env.mdp, &plan, &env.bench.policy, &cfg)?;
        let count = req.trajectories.min(MAX_SAMPLE_TRAJECTORIES);
        let trajectories = sample_trajectories(&env.mdp, &plan, &env.bench.policy, &cfg, count)?
            .iter()
            .map(|t| TrajectoryRecord::new(&env.mdp, t))
            .collect();
        Ok(RolloutResponse {
            schema: ROLLOUT_SCHEMA.into(),
            option: record.id.clone(),
            report,
            trajectories,
        })
    })
    .await??;
    Ok(json_text(StatusCode::OK, &response))
}

#[derive(Deserialize)]
struct DiffQuery {
    job: Option<String>,
}

async fn get_diff(
    State(state): Shared,
    Path((id, other)): Path<(String, String)>,
    Query(q): Query<DiffQuery>,
) -> Result<Response, ApiError> {
    let job_id = q
        .job
        .ok_or_else(|| ApiError::BadRequest("the job query parameter is required".into()))?;
    let job = finished_job(&state, &job_id)?;
    let diff = DiffLayer::new(find_option(&job, &id)?, find_option(&job, &other)?);
    Ok(json_text(StatusCode::OK, &diff))
}
