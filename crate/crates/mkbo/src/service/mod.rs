//! HTTP/JSON session service.
//!
//! Sessions are event-sourced: each accepted command appends one line to
//! `DATA_DIR/sessions/{id}.jsonl` (fsynced) before the response is sent.
//! Sessions are loaded lazily by replaying their log. Commands on one
//! session are serialized by a per-session mutex; different sessions run
//! concurrently on the blocking pool.

pub mod api;
pub mod record;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use api::{parse_json, ApiError, CreateRequest, CreatedResponse, DatasetResponse, Observation};
use record::SessionRecord;
use store::{new_id, valid_id, Event, EventLog};

type Slot = Arc<Mutex<Option<SessionRecord>>>;

pub struct AppState {
    log: EventLog,
    datasets: PathBuf,
    slots: Mutex<HashMap<String, Slot>>,
}

impl AppState {
    pub fn open(data_dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let data_dir = data_dir.into();
        let datasets = data_dir.join("datasets");
        std::fs::create_dir_all(&datasets)?;
        Ok(Self {
            log: EventLog::open(data_dir.join("sessions"))?,
            datasets,
            slots: Mutex::new(HashMap::new()),
        })
    }

    fn slot(&self, id: &str) -> Slot {
        let mut slots = self.slots.lock().unwrap_or_else(|p| p.into_inner());
        slots.entry(id.to_string()).or_default().clone()
    }

    fn forget(&self, id: &str) {
        self.slots.lock().unwrap_or_else(|p| p.into_inner()).remove(id);
    }

    /// Run `f` on the session under its lock, persisting the returned event.
    /// If persisting fails the in-memory state is dropped, so the next access
    /// replays the log as it is on disk.
    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut SessionRecord) -> Result<(T, Option<Event>), ApiError>,
    ) -> Result<T, ApiError> {
        if !valid_id(id) {
            return Err(ApiError::not_found("session"));
        }
        let slot = self.slot(id);
        let mut guard: MutexGuard<'_, Option<SessionRecord>> = match slot.lock() {
            Ok(g) => g,
            Err(poisoned) => {
                let mut g = poisoned.into_inner();
                *g = None;
                slot.clear_poison();
                g
            }
        };
        if guard.is_none() {
            let events = self.log.read(id).map_err(|e| ApiError::internal(e.to_string()))?;
            let Some(events) = events else {
                drop(guard);
                self.forget(id);
                return Err(ApiError::not_found("session"));
            };
            let record = SessionRecord::replay(&events).map_err(ApiError::internal)?;
            *guard = Some(record);
        }
        let record = guard.as_mut().expect("loaded above");
        let (out, event) = f(record)?;
        if let Some(event) = event {
            if let Err(e) = self.log.append(id, &event) {
                log::error!("session {id}: persisting event failed: {e}");
                *guard = None;
                return Err(ApiError::internal("could not persist the event"));
            }
        }
        Ok(out)
    }

    fn create(&self, request: CreateRequest) -> Result<CreatedResponse, ApiError> {
        let id = new_id();
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let (record, event) = SessionRecord::create(id.clone(), now, request, &self.datasets)?;
        self.log
            .create(&id, &event)
            .map_err(|e| ApiError::internal(format!("could not persist the session: {e}")))?;
        let response = CreatedResponse {
            id: id.clone(),
            status: record.status,
            kernel: record.provenance.clone(),
        };
        *self.slot(&id).lock().unwrap_or_else(|p| p.into_inner()) = Some(record);
        Ok(response)
    }

    fn upload(&self, body: &[u8]) -> Result<DatasetResponse, ApiError> {
        let data = crate::data::read_dataset_csv(body).map_err(|e| ApiError::invalid("body", e.to_string()))?;
        let id = new_id();
        let path = self.datasets.join(format!("{id}.csv"));
        std::fs::write(&path, body)
            .and_then(|_| std::fs::File::open(&path)?.sync_all())
            .map_err(|e| ApiError::internal(format!("could not store the dataset: {e}")))?;
        Ok(DatasetResponse {
            id,
            rows: data.len(),
            dimension: data.dimension().unwrap_or(0),
        })
    }
}

/// Run blocking session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ApiError::internal(format!("worker failed: {e}"))))
}

type AppResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

async fn create_session(State(app): Shared, body: Bytes) -> AppResult<(StatusCode, Json<CreatedResponse>)> {
    let request: CreateRequest = parse_json(&body)?;
    let out = blocking(move || app.create(request)).await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_session(State(app): Shared, Path(id): Path<String>) -> AppResult<Json<api::SessionView>> {
    let view = blocking(move || app.with_session(&id, |r| Ok((r.view(), None)))).await?;
    Ok(Json(view))
}

async fn get_suggestion(State(app): Shared, Path(id): Path<String>) -> AppResult<Json<api::SuggestionResponse>> {
    let s = blocking(move || app.with_session(&id, |r| r.suggest())).await?;
    Ok(Json(s))
}

async fn post_observation(
    State(app): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Json<api::ObservationResponse>> {
    let key = match headers.get("idempotency-key") {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ApiError::invalid("Idempotency-Key", "header must be visible ASCII"))?
                .to_string(),
        ),
        None => None,
    };
    let obs: Observation = parse_json(&body)?;
    let out = blocking(move || app.with_session(&id, |r| r.observe(obs, key))).await?;
    Ok(Json(out))
}

async fn get_trace(State(app): Shared, Path(id): Path<String>) -> AppResult<Response> {
    let body = blocking(move || app.with_session(&id, |r| Ok((r.trace_jsonl(), None)))).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn close_session(State(app): Shared, Path(id): Path<String>) -> AppResult<Json<api::CloseSummary>> {
    let s = blocking(move || app.with_session(&id, |r| Ok(r.close()))).await?;
    Ok(Json(s))
}

async fn upload_dataset(State(app): Shared, body: Bytes) -> AppResult<(StatusCode, Json<DatasetResponse>)> {
    let out = blocking(move || app.upload(&body)).await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn fallback() -> ApiError {
    ApiError::not_found("route")
}

/// The REST API, optionally serving a static console under `/console`.
pub fn router(state: Arc<AppState>, console: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/suggestion", get(get_suggestion))
        .route("/v1/sessions/{id}/observations", post(post_observation))
        .route("/v1/sessions/{id}/trace", get(get_trace))
        .route("/v1/sessions/{id}/close", post(close_session))
        .route("/v1/datasets", post(upload_dataset));
    if let Some(dir) = console {
        app = app.nest_service("/console", ServeDir::new(dir));
    }
    app.fallback(fallback)
        .layer(DefaultBodyLimit::max(16 << 20))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub console: Option<PathBuf>,
}

pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::open(&cfg.data_dir)?);
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    log::info!(
        "listening on {} (data in {})",
        listener.local_addr()?,
        cfg.data_dir.display()
    );
    axum::serve(listener, router(state, cfg.console))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
