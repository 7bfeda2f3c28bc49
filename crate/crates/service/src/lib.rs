//! HTTP API over environments, corridor searches and rollouts.
//!
//! Every route is mounted twice, under `/api` and `/api/v1`. Bodies are the
//! same canonical JSON documents the command line writes, so a search
//! fetched from `/api/search/{job}/result` is byte-identical to `dna search`
//! on the same inputs.

mod error;
mod jobs;
mod routes;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::Router;
use dna::solver::Benchmark;
use dna::{GridConfig, GridMdp};
use tower_http::cors::{Any, CorsLayer};

pub use error::ApiError;
pub use jobs::{Job, JobStatus, JobView};
pub use routes::{EnvSummary, EnvView, RolloutRequest, RolloutResponse, SearchRequest, MAX_SAMPLE_TRAJECTORIES};

/// A loaded map with its benchmark solution.
pub struct LoadedEnv {
    pub id: String,
    pub mdp: GridMdp,
    pub bench: Benchmark,
}

impl LoadedEnv {
    pub fn new(id: impl Into<String>, mdp: GridMdp) -> dna::Result<Self> {
        let bench = Benchmark::solve(&mdp)?;
        Ok(Self {
            id: id.into(),
            mdp,
            bench,
        })
    }
}

/// Shared server state: read-only environments plus the job registry.
pub struct AppState {
    envs: BTreeMap<String, Arc<LoadedEnv>>,
    jobs: jobs::Registry,
    persist: Option<PathBuf>,
}

impl AppState {
    pub fn new(envs: Vec<LoadedEnv>) -> Self {
        Self {
            envs: envs.into_iter().map(|e| (e.id.clone(), Arc::new(e))).collect(),
            jobs: jobs::Registry::default(),
            persist: None,
        }
    }

    /// Writes each finished search to `dir/job-<id>.json`.
    pub fn with_persistence(mut self, dir: impl Into<PathBuf>) -> Self {
        self.persist = Some(dir.into());
        self
    }

    pub fn env(&self, id: &str) -> Option<&Arc<LoadedEnv>> {
        self.envs.get(id)
    }

    pub fn env_ids(&self) -> impl Iterator<Item = &str> {
        self.envs.keys().map(String::as_str)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Map { path: PathBuf, source: dna::Error },
    #[error("{0}: no *.txt maps found")]
    Empty(PathBuf),
}

/// Loads every `<id>.txt` in `dir`, with `<id>.json` as its configuration
/// when present and the defaults otherwise.
pub fn load_envs(dir: &Path) -> Result<Vec<LoadedEnv>, LoadError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| LoadError::Io { path, source }
    };
    let mut maps: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    maps.sort();
    if maps.is_empty() {
        return Err(LoadError::Empty(dir.to_path_buf()));
    }
    let mut envs = Vec::with_capacity(maps.len());
    for path in maps {
        let text = std::fs::read_to_string(&path).map_err(io(&path))?;
        let config_path = path.with_extension("json");
        let config = match std::fs::read_to_string(&config_path) {
            Ok(json) => GridConfig::from_json(&json).map_err(|source| LoadError::Map {
                path: config_path.clone(),
                source,
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => GridConfig::default(),
            Err(source) => return Err(LoadError::Io { path: config_path, source }),
        };
        let map_err = |source| LoadError::Map {
            path: path.clone(),
            source,
        };
        let mdp = GridMdp::from_text(&text, config).map_err(map_err)?;
        let id = path.file_stem().expect("map files have a stem").to_string_lossy().into_owned();
        envs.push(LoadedEnv::new(id, mdp).map_err(map_err)?);
    }
    Ok(envs)
}

/// The API routes under both prefixes, with permissive CORS for the UI.
pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any);
    Router::new()
        .nest("/api", routes::api())
        .nest("/api/v1", routes::api())
        .layer(cors)
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
