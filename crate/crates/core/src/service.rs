//! HTTP API over the run store and executor.
//!
//! Each run is driven by at most one background task at a time. Mutating
//! requests are serialized through a single lock and refused with 409 while a
//! driver is active, so the executor stays the only writer of a manifest.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, watch};
use tokio_stream::wrappers::ReceiverStream;

use crate::artifact::{sniff_media_kind, ArtifactId, MediaKind};
use crate::canonical;
use crate::engine::{Engine, EngineError, ErrorKind};
use crate::eval::PerturbationSpec;
use crate::executor::{ChainRun, ExecError, Intervention, Observer, RunStatus, StepEvent};
use crate::planner::ChainPlan;
use crate::runstore::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("server error: {0}")]
    Serve(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn status(&self) -> StatusCode {
        status_of(self.code)
    }
}

pub fn status_of(code: ErrorKind) -> StatusCode {
    match code {
        ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::InvalidInput => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorKind::Conflict => StatusCode::CONFLICT,
        ErrorKind::BackendFailure => StatusCode::BAD_GATEWAY,
        ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let detail = e
            .violations()
            .map(|v| serde_json::to_value(v).unwrap_or_default());
        Self {
            code: e.kind(),
            message: e.to_string(),
            detail,
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        EngineError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        json(status, &self)
    }
}

fn json<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match canonical::to_string(body) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            ErrorKind::InvalidInput,
            format!("malformed request body: {e}"),
        )
    })
}

type ApiResult = Result<Response, ApiError>;

/// What subscribers of a run hear: step transitions, then the status the
/// run settled in when its driver stopped.
#[derive(Clone, Debug)]
enum Push {
    Step(StepEvent),
    Idle(RunStatus),
}

struct Driver {
    stop: Arc<AtomicBool>,
    done: watch::Receiver<bool>,
}

pub struct ServiceState {
    engine: Arc<Engine>,
    drivers: Mutex<HashMap<String, Driver>>,
    channels: Mutex<HashMap<String, broadcast::Sender<Push>>>,
    mutate: tokio::sync::Mutex<()>,
    token: Option<String>,
}

impl ServiceState {
    pub fn new(engine: Arc<Engine>, token: Option<String>) -> Arc<Self> {
        Arc::new(Self {
            engine,
            drivers: Mutex::new(HashMap::new()),
            channels: Mutex::new(HashMap::new()),
            mutate: tokio::sync::Mutex::new(()),
            token,
        })
    }

    fn channel(&self, run_id: &str) -> broadcast::Sender<Push> {
        self.channels
            .lock()
            .unwrap()
            .entry(run_id.to_string())
            .or_insert_with(|| broadcast::channel(256).0)
            .clone()
    }

    fn is_driving(&self, run_id: &str) -> bool {
        self.drivers.lock().unwrap().contains_key(run_id)
    }

    fn busy(&self, run_id: &str) -> Result<(), ApiError> {
        if self.is_driving(run_id) {
            return Err(ApiError::new(
                ErrorKind::Conflict,
                format!("run {run_id} is executing; pause it first"),
            ));
        }
        Ok(())
    }

    /// Starts a background task that executes the run (one step in step
    /// mode) and reports progress to subscribers.
    fn spawn_driver(self: &Arc<Self>, run: ChainRun) {
        let run_id = run.run_id.clone();
        let stop = Arc::new(AtomicBool::new(false));
        let (done_tx, done_rx) = watch::channel(false);
        self.drivers.lock().unwrap().insert(
            run_id.clone(),
            Driver {
                stop: stop.clone(),
                done: done_rx,
            },
        );
        let sender = self.channel(&run_id);
        let state = self.clone();
        tokio::task::spawn_blocking(move || {
            let tx = sender.clone();
            let observer: Observer = Arc::new(move |ev: &StepEvent| {
                let _ = tx.send(Push::Step(ev.clone()));
            });
            let mut run = run;
            let outcome = state
                .engine
                .executor(Some(&run.backend_profile))
                .map_err(ApiError::from)
                .and_then(|exec| {
                    exec.with_observer(observer)
                        .with_stop_flag(stop)
                        .resume(&mut run)
                        .map_err(|e| ApiError::from(EngineError::from(e)))
                });
            if let Err(e) = outcome {
                tracing::warn!(run_id = %run.run_id, error = %e.message, "run driver stopped");
            }
            state.drivers.lock().unwrap().remove(&run.run_id);
            let _ = sender.send(Push::Idle(run.status));
            let _ = done_tx.send(true);
        });
    }

    /// Asks the driver of `run_id`, if any, to stop after its current step
    /// and waits for it.
    async fn stop_driver(&self, run_id: &str) {
        let done = {
            let drivers = self.drivers.lock().unwrap();
            drivers.get(run_id).map(|d| {
                d.stop.store(true, Ordering::SeqCst);
                d.done.clone()
            })
        };
        if let Some(mut done) = done {
            let _ = done.wait_for(|d| *d).await;
        }
    }

    /// Stops every driver; in-flight steps finish and are checkpointed.
    pub async fn drain(&self) {
        let ids: Vec<String> = self.drivers.lock().unwrap().keys().cloned().collect();
        for id in ids {
            self.stop_driver(&id).await;
        }
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorKind::Internal, e.to_string()))?
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/runs", post(create_run).get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/events", get(stream_events))
        .route("/runs/{id}/pause", post(pause_run))
        .route("/runs/{id}/resume", post(resume_run))
        .route("/runs/{id}/interventions", post(intervene))
        .route("/runs/{id}/eval/readability", post(eval_readability))
        .route("/runs/{id}/eval/causal", post(eval_causal))
        .route("/artifacts/{hash}", get(get_artifact))
        .route("/reports/{run_id}/{metric}", get(get_report))
        .fallback(|| async { ApiError::new(ErrorKind::NotFound, "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route(
            "/healthz",
            get(|| async { json(StatusCode::OK, &serde_json::json!({"status": "ok"})) }),
        )
        .with_state(state)
}

async fn require_token(
    State(state): State<Arc<ServiceState>>,
    request: Request,
    next: Next,
) -> Response {
    if let Some(token) = &state.token {
        let expected = format!("Bearer {token}");
        let given = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return (
                StatusCode::UNAUTHORIZED,
                [(header::WWW_AUTHENTICATE, "Bearer")],
            )
                .into_response();
        }
    }
    next.run(request).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRun {
    #[serde(default)]
    plan: Option<ChainPlan>,
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    profile: Option<String>,
    #[serde(default)]
    step_mode: bool,
}

#[derive(Debug, Serialize)]
struct RunCreated<'a> {
    run_id: &'a str,
    status: RunStatus,
    steps_total: u32,
}

async fn create_run(State(state): State<Arc<ServiceState>>, body: Bytes) -> ApiResult {
    let req: CreateRun = parse_body(&body)?;
    let engine = state.engine.clone();
    let run = blocking(move || {
        let plan = match (req.plan, req.prompt) {
            (Some(plan), None) => plan,
            (None, Some(prompt)) => engine.plan(&prompt, req.profile.as_deref())?,
            _ => {
                return Err(ApiError::new(
                    ErrorKind::InvalidInput,
                    "exactly one of `plan` or `prompt` is required",
                ))
            }
        };
        let (name, _) = engine.backends(req.profile.as_deref())?;
        let exec = engine.executor(Some(&name))?;
        exec.create_run(plan, &name, req.step_mode)
            .map_err(|e| ApiError::from(EngineError::from(e)))
    })
    .await?;
    let _guard = state.mutate.lock().await;
    let body = RunCreated {
        run_id: &run.run_id,
        status: run.status,
        steps_total: run.plan.len(),
    };
    let response = json(StatusCode::CREATED, &body);
    state.spawn_driver(run);
    Ok(response)
}

async fn list_runs(
    State(state): State<Arc<ServiceState>>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult {
    let filter = match query.get("status") {
        Some(s) => Some(RunStatus::parse(s).ok_or_else(|| {
            ApiError::new(ErrorKind::InvalidInput, format!("unknown status {s:?}"))
        })?),
        None => None,
    };
    let engine = state.engine.clone();
    let runs = blocking(move || Ok(engine.store().list_runs(filter)?)).await?;
    Ok(json(StatusCode::OK, &runs))
}

async fn get_run(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult {
    let engine = state.engine.clone();
    let run = blocking(move || Ok(engine.store().load_run(&id)?)).await?;
    Ok(json(StatusCode::OK, &run))
}

fn sse_step(ev: &StepEvent) -> Event {
    Event::default()
        .event("step")
        .id(ev.seq.to_string())
        .data(canonical::to_line(ev).unwrap_or_default().trim_end())
}

async fn stream_events(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
) -> ApiResult {
    // Subscribe before reading the manifest so nothing falls between the
    // replay and the live tail; duplicates are dropped by `seq`.
    let mut live = state.channel(&id).subscribe();
    let driving = state.is_driving(&id);
    let engine = state.engine.clone();
    let lookup = id.clone();
    let run = blocking(move || Ok(engine.store().load_run(&lookup)?)).await;
    let run = match run {
        Ok(run) => run,
        Err(e) => {
            if !driving {
                state.channels.lock().unwrap().remove(&id);
            }
            return Err(e);
        }
    };
    let (tx, rx) = mpsc::channel::<Result<Event, std::convert::Infallible>>(64);
    tokio::spawn(async move {
        let mut last_seq: Option<u64> = None;
        for ev in &run.events {
            if tx.send(Ok(sse_step(ev))).await.is_err() {
                return;
            }
            last_seq = Some(ev.seq);
        }
        let status_event = |s: RunStatus| Event::default().event("status").data(s.as_str());
        if !driving {
            let _ = tx.send(Ok(status_event(run.status))).await;
            return;
        }
        loop {
            match live.recv().await {
                Ok(Push::Step(ev)) => {
                    if last_seq.is_some_and(|s| ev.seq <= s) {
                        continue;
                    }
                    last_seq = Some(ev.seq);
                    if tx.send(Ok(sse_step(&ev))).await.is_err() {
                        return;
                    }
                }
                Ok(Push::Idle(status)) => {
                    let _ = tx.send(Ok(status_event(status))).await;
                    return;
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(run_id = %run.run_id, skipped = n, "event subscriber lagged");
                }
                Err(broadcast::error::RecvError::Closed) => return,
            }
        }
    });
    Ok(Sse::new(ReceiverStream::new(rx))
        .keep_alive(KeepAlive::default())
        .into_response())
}

async fn pause_run(State(state): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult {
    let _guard = state.mutate.lock().await;
    state.stop_driver(&id).await;
    let engine = state.engine.clone();
    let run = blocking(move || Ok(engine.pause(&id)?)).await?;
    Ok(json(StatusCode::OK, &run))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResumeRequest {
    #[serde(default)]
    retry_failed: bool,
}

async fn resume_run(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let req: ResumeRequest = if body.is_empty() {
        ResumeRequest::default()
    } else {
        parse_body(&body)?
    };
    let _guard = state.mutate.lock().await;
    state.busy(&id)?;
    let engine = state.engine.clone();
    let run = blocking(move || {
        let mut run = engine.load_run(&id)?;
        let conflict = |e: ExecError| ApiError::from(EngineError::from(e));
        if let Some(failed) = run.failed_step() {
            if !req.retry_failed {
                return Err(conflict(ExecError::PriorStepFailed(failed.index)));
            }
            engine
                .executor(Some(&run.backend_profile))?
                .retry_failed(&mut run)
                .map_err(conflict)?;
        }
        if run.cursor() > run.plan.len() {
            return Err(conflict(ExecError::NoMoreSteps));
        }
        run.status = RunStatus::Running;
        engine.store().save_run(&run)?;
        Ok(run)
    })
    .await?;
    let response = json(StatusCode::ACCEPTED, &crate::runstore::RunSummary::of(&run));
    state.spawn_driver(run);
    Ok(response)
}

async fn intervene(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let iv: Intervention = parse_body(&body)?;
    let _guard = state.mutate.lock().await;
    state.busy(&id)?;
    let engine = state.engine.clone();
    let run = blocking(move || Ok(engine.intervene(&id, iv)?)).await?;
    Ok(json(StatusCode::OK, &run))
}

async fn eval_readability(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
) -> ApiResult {
    let engine = state.engine.clone();
    let report = blocking(move || Ok(engine.eval_readability(&id)?)).await?;
    Ok(json(StatusCode::OK, &report))
}

async fn eval_causal(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let spec: PerturbationSpec = parse_body(&body)?;
    let engine = state.engine.clone();
    let outcome = blocking(move || {
        let run = engine.store().load_run(&id)?;
        Ok(engine.eval_causal_spec(&run, &spec)?)
    })
    .await?;
    Ok(json(StatusCode::OK, &outcome))
}

async fn get_artifact(
    State(state): State<Arc<ServiceState>>,
    Path(hash): Path<String>,
) -> ApiResult {
    let (hash, as_png) = match hash.strip_suffix(".png") {
        Some(h) => (h.to_string(), true),
        None => (hash, false),
    };
    let id = ArtifactId::parse(&hash)
        .ok_or_else(|| ApiError::new(ErrorKind::NotFound, format!("artifact {hash} not found")))?;
    let engine = state.engine.clone();
    let (bytes, content_type) = blocking(move || {
        let bytes = engine.store().get_blob(&id)?;
        Ok(match (sniff_media_kind(&bytes), as_png) {
            (MediaKind::RasterPng, _) => (bytes, "image/png"),
            (MediaKind::SceneDocument, false) => (bytes, "application/json"),
            (MediaKind::SceneDocument, true) => {
                let scene = canonical::from_slice(&bytes).map_err(|e| {
                    ApiError::new(ErrorKind::Internal, format!("stored scene unreadable: {e}"))
                })?;
                (crate::raster::render_png(&scene), "image/png")
            }
        })
    })
    .await?;
    let mut response = (StatusCode::OK, bytes).into_response();
    let headers = response.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type));
    headers.insert(
        header::CACHE_CONTROL,
        HeaderValue::from_static("public, max-age=31536000, immutable"),
    );
    if let Ok(etag) = HeaderValue::from_str(&format!("\"{hash}\"")) {
        headers.insert(header::ETAG, etag);
    }
    Ok(response)
}

async fn get_report(
    State(state): State<Arc<ServiceState>>,
    Path((run_id, metric)): Path<(String, String)>,
) -> ApiResult {
    let engine = state.engine.clone();
    let report = blocking(move || Ok(engine.store().load_report(&run_id, &metric)?)).await?;
    Ok(json(StatusCode::OK, &report))
}

/// A bound, not yet serving, API server.
pub struct Server {
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
}

impl Server {
    /// Binds the listener and settles runs a previous process left running.
    pub async fn bind(engine: Arc<Engine>, addr: &str) -> Result<Self, ServiceError> {
        let settings = &engine.config().service;
        let token = match &settings.api_token_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ServiceError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind {
                addr: addr.to_string(),
                source,
            })?;
        let recover = engine.clone();
        tokio::task::spawn_blocking(move || {
            let running = recover
                .store()
                .list_runs(Some(RunStatus::Running))
                .unwrap_or_default();
            for summary in running {
                if let Err(e) = recover.load_run(&summary.run_id) {
                    tracing::warn!(run_id = %summary.run_id, %e, "could not recover run");
                }
            }
        })
        .await
        .map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(Self {
            listener,
            state: ServiceState::new(engine, token),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServiceError> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves until `shutdown` resolves, then stops accepting requests and
    /// lets every in-flight step finish.
    pub async fn run(
        self,
        shutdown: impl Future<Output = ()> + Send + 'static,
    ) -> Result<(), ServiceError> {
        let app = router(self.state.clone());
        tracing::info!(addr = ?self.listener.local_addr().ok(), "serving");
        axum::serve(self.listener, app)
            .with_graceful_shutdown(shutdown)
            .await?;
        self.state.drain().await;
        Ok(())
    }
}

/// Serves on the configured address until Ctrl-C.
pub async fn serve(engine: Arc<Engine>, addr: Option<&str>) -> Result<(), ServiceError> {
    let addr = addr.unwrap_or(&engine.config().service.bind).to_string();
    let server = Server::bind(engine, &addr).await?;
    server
        .run(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
