//! HTTP/JSON front end for the simulation engine.
//!
//! Runs live in memory for the life of the process. A run with remote agents
//! gets its own TCP listener speaking the wire protocol; the run starts once
//! every named agent has registered there.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};

use jade_api::{
    Bundle, Catalog, GenerateRequest, GenerateResponse, Health, RenderRequest, RenderResponse, ReplayRequest,
    RunRequest, RunState, RunStatus, ValidateResponse, Verdict,
};
use jade_core::env::wire::run_with_remote;
use jade_core::env::{load_config, render_trace, replay, run, EnvError, RunOptions, RunReport};
use jade_core::scenarios::{builtin_behaviors, generate, POLICIES};

mod error;

pub use error::ApiError;

/// Logs of long runs are tens of megabytes.
const BODY_LIMIT: usize = 256 << 20;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Address remote-agent listeners bind to.
    pub wire_host: IpAddr,
    /// Registration and per-tick timeout for remote agents, unless a request says otherwise.
    pub attach_timeout: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            wire_host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            attach_timeout: Duration::from_secs(30),
        }
    }
}

struct Job {
    status: RunStatus,
    log: Option<String>,
}

struct AppState {
    config: ServerConfig,
    next_id: AtomicU64,
    runs: Mutex<BTreeMap<u64, Job>>,
}

impl AppState {
    fn status(&self, id: u64) -> Result<RunStatus, ApiError> {
        let runs = self.runs.lock().unwrap();
        runs.get(&id).map(|j| j.status.clone()).ok_or(ApiError::NoRun(id))
    }

    fn complete(&self, id: u64, result: Result<(RunReport, String), EnvError>) -> RunStatus {
        let mut runs = self.runs.lock().unwrap();
        let job = runs.get_mut(&id).expect("jobs are never removed");
        match result {
            Ok((report, log)) => {
                tracing::info!(id, ticks = report.ticks, reason = %report.stop_reason, "run finished");
                job.status.state = RunState::Finished;
                job.status.report = Some(report);
                job.log = Some(log);
            }
            Err(e) => {
                tracing::warn!(id, error = %e, "run failed");
                job.status.state = RunState::Failed;
                job.status.error = Some(e.to_string());
            }
        }
        job.status.clone()
    }
}

pub fn router(config: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        config,
        next_id: AtomicU64::new(1),
        runs: Mutex::new(BTreeMap::new()),
    });
    Router::new()
        .route("/health", get(health))
        .route("/v1/validate", post(validate))
        .route("/v1/runs", post(start_run).get(list_runs))
        .route("/v1/runs/{id}", get(run_status))
        .route("/v1/runs/{id}/log", get(run_log))
        .route("/v1/replay", post(replay_log))
        .route("/v1/render", post(render))
        .route("/v1/scenarios", get(catalog))
        .route("/v1/scenarios/generate", post(generate_config))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, config: ServerConfig) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(config)).await
}

type Shared = State<Arc<AppState>>;

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn catalog() -> Json<Catalog> {
    Json(Catalog {
        scenarios: generate::GENERATORS.iter().map(|s| s.to_string()).collect(),
        behaviors: builtin_behaviors().iter().map(|(n, _)| n.to_string()).collect(),
        policies: POLICIES.iter().map(|s| s.to_string()).collect(),
    })
}

async fn validate(Json(bundle): Json<Bundle>) -> Json<ValidateResponse> {
    Json(match load_config(&bundle.config, &bundle.assets) {
        Ok(cfg) => ValidateResponse {
            valid: true,
            digest: Some(format!("{:016x}", cfg.digest)),
            agents: cfg.agents.iter().map(|a| a.name.clone()).collect(),
            scenario: cfg.scenario.as_ref().map(|s| s.name.clone()),
            diagnostics: Vec::new(),
            warnings: cfg.warnings,
        },
        Err(diagnostics) => ValidateResponse {
            valid: false,
            digest: None,
            agents: Vec::new(),
            scenario: None,
            diagnostics,
            warnings: Vec::new(),
        },
    })
}

async fn start_run(State(st): Shared, Json(req): Json<RunRequest>) -> Result<(StatusCode, Json<RunStatus>), ApiError> {
    let cfg = load_config(&req.bundle.config, &req.bundle.assets).map_err(ApiError::Config)?;
    let remote: BTreeSet<String> = req.remote.iter().cloned().collect();
    if let Some(name) = remote.iter().find(|n| !cfg.agents.iter().any(|a| &a.name == *n)) {
        return Err(ApiError::BadRequest(format!("no agent named `{name}` in the config")));
    }
    let listener = if remote.is_empty() {
        None
    } else {
        let l = std::net::TcpListener::bind(SocketAddr::new(st.config.wire_host, 0))
            .map_err(|e| ApiError::Internal(format!("cannot open a wire listener: {e}")))?;
        Some(l)
    };
    let wire_addr = match &listener {
        Some(l) => Some(
            l.local_addr()
                .map_err(|e| ApiError::Internal(e.to_string()))?
                .to_string(),
        ),
        None => None,
    };
    let id = st.next_id.fetch_add(1, Ordering::Relaxed);
    let status = RunStatus {
        id,
        state: RunState::Running,
        remote: remote.iter().cloned().collect(),
        wire_addr,
        report: None,
        error: None,
    };
    st.runs.lock().unwrap().insert(
        id,
        Job {
            status: status.clone(),
            log: None,
        },
    );
    tracing::info!(id, agents = cfg.agents.len(), remote = remote.len(), wire = ?status.wire_addr, "run started");

    let timeout = req
        .attach_timeout_secs
        .map(Duration::from_secs)
        .unwrap_or(st.config.attach_timeout);
    let options = RunOptions {
        seed: req.seed,
        max_ticks: req.max_ticks,
        remote,
    };
    let job = tokio::task::spawn_blocking(move || match listener {
        Some(l) => run_with_remote(&cfg, &options, &l, timeout),
        None => run(&cfg, &options),
    });
    let finish = {
        let st = st.clone();
        async move {
            let result = job
                .await
                .unwrap_or_else(|e| Err(EnvError::Remote(format!("run task died: {e}"))));
            st.complete(id, result)
        }
    };
    if req.wait && status.remote.is_empty() {
        Ok((StatusCode::OK, Json(finish.await)))
    } else {
        tokio::spawn(finish);
        Ok((StatusCode::ACCEPTED, Json(status)))
    }
}

async fn list_runs(State(st): Shared) -> Json<Vec<RunStatus>> {
    let runs = st.runs.lock().unwrap();
    Json(runs.values().map(|j| j.status.clone()).collect())
}

async fn run_status(State(st): Shared, Path(id): Path<u64>) -> Result<Json<RunStatus>, ApiError> {
    st.status(id).map(Json)
}

async fn run_log(State(st): Shared, Path(id): Path<u64>) -> Result<impl IntoResponse, ApiError> {
    let runs = st.runs.lock().unwrap();
    let job = runs.get(&id).ok_or(ApiError::NoRun(id))?;
    let log = job.log.clone().ok_or(ApiError::NotFinished(id))?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], log))
}

async fn replay_log(Json(req): Json<ReplayRequest>) -> Result<Json<Verdict>, ApiError> {
    let cfg = load_config(&req.bundle.config, &req.bundle.assets).map_err(ApiError::Config)?;
    let verdict = tokio::task::spawn_blocking(move || replay(&req.log, &cfg))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(verdict))
}

async fn render(Json(req): Json<RenderRequest>) -> Result<Json<RenderResponse>, ApiError> {
    let documents = tokio::task::spawn_blocking(move || render_trace(&req.log, req.mode))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(RenderResponse { documents }))
}

async fn generate_config(Json(req): Json<GenerateRequest>) -> Result<Json<GenerateResponse>, ApiError> {
    let config = generate::generate(&req.scenario, req.seed, &req.params)?;
    Ok(Json(GenerateResponse { config }))
}
