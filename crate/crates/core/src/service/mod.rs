//! REST service over the session engine.
//!
//! Every error body is `{"error": {"code": "...", "message": "..."}}`.
//! Validation failures map to 422 (404 for unknown ids), a session that is
//! propagating answers 409, and malformed requests get 400. Request and
//! response shapes are described in `docs/api.md`.

mod config;

use std::collections::HashMap;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backend::{ExternalBackend, Polarity, PromptPoint};
use crate::dataset::VideoDataset;
use crate::error::{Error, Result};
use crate::mask::Rle;
use crate::session::{
    self, export_masks, palette_color, save_session, visualize, BackendRegistry, ExportEntry, ObjectStatus,
    Session,
};

pub use config::{
    ServiceConfig, ENV_ADAPTER_SOCKET, ENV_BACKEND, ENV_DATASET_ROOT, ENV_EXPORT_ROOT, ENV_PORT, ENV_SESSION_DIR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Propagation,
    Training,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobProgress {
    pub done: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: JobProgress,
    pub error: Option<String>,
    pub session_id: Option<String>,
}

/// An engine error on its way to an HTTP response.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }
}

pub fn status_for(err: &Error) -> StatusCode {
    match err {
        Error::Validation { code, .. } if code.starts_with("unknown_") && *code != "unknown_class_id" => {
            StatusCode::NOT_FOUND
        }
        Error::Validation { .. } | Error::Scene(_) | Error::Migration { .. } | Error::Parse { .. } => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => StatusCode::NOT_FOUND,
        Error::Busy(_) | Error::State(_) => StatusCode::CONFLICT,
        Error::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::Protocol(_) => StatusCode::BAD_GATEWAY,
        Error::Io { .. } | Error::Image { .. } | Error::NonFiniteLoss { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let status = status_for(&err);
        if status.is_server_error() {
            log::error!("{err}");
        }
        Self::new(status, err.code(), err.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), "invalid_body", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

type SharedSession = Arc<Mutex<Session>>;

pub struct AppState {
    pub config: ServiceConfig,
    pub registry: BackendRegistry,
    sessions: RwLock<HashMap<String, SharedSession>>,
    jobs: RwLock<HashMap<String, Arc<Mutex<JobStatus>>>>,
}

impl AppState {
    /// Registers `reference`, plus `external` when an adapter socket is configured.
    pub fn new(config: ServiceConfig) -> Self {
        let mut registry = BackendRegistry::with_reference();
        if let Some(sock) = &config.adapter_socket {
            let timeout = Duration::from_millis(config.adapter_timeout_ms);
            registry.register("external", Arc::new(ExternalBackend::new(sock.clone(), timeout)));
        }
        Self::with_registry(config, registry)
    }

    pub fn with_registry(config: ServiceConfig, registry: BackendRegistry) -> Self {
        Self {
            config,
            registry,
            sessions: RwLock::new(HashMap::new()),
            jobs: RwLock::new(HashMap::new()),
        }
    }

    /// Reloads every `*.json` session in the session directory.
    pub fn restore_sessions(&self) -> Result<usize> {
        let Some(dir) = &self.config.session_dir else { return Ok(0) };
        if !dir.is_dir() {
            return Ok(0);
        }
        let mut n = 0;
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            match session::load_session(&path, &self.registry) {
                Ok(s) => {
                    self.insert_session(s);
                    n += 1;
                }
                Err(e) => log::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(n)
    }

    pub fn insert_session(&self, s: Session) -> SharedSession {
        let id = s.session_id.clone();
        let shared = Arc::new(Mutex::new(s));
        self.sessions.write().unwrap().insert(id, shared.clone());
        shared
    }

    pub fn session(&self, id: &str) -> Result<SharedSession> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::validation("unknown_session", format!("no session {id}")))
    }

    pub fn job(&self, id: &str) -> Result<JobStatus> {
        let jobs = self.jobs.read().unwrap();
        let job = jobs
            .get(id)
            .ok_or_else(|| Error::validation("unknown_job", format!("no job {id}")))?;
        let status = job.lock().unwrap().clone();
        Ok(status)
    }

    fn persist(&self, s: &Session) {
        if let Some(dir) = &self.config.session_dir {
            if let Err(e) = save_session(s, &session::session_file_path(dir, &s.session_id)) {
                log::error!("saving session {}: {e}", s.session_id);
            }
        }
    }

    /// Resolves a client-supplied video path below the dataset root.
    fn video_path(&self, rel: &str) -> Result<PathBuf> {
        let p = FsPath::new(rel);
        if p.is_absolute() || p.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(Error::validation(
                "invalid_video_path",
                format!("{rel:?} must be a relative path inside the dataset root"),
            ));
        }
        Ok(self.config.dataset_root.join(p))
    }
}

/// Runs `f` on the locked session off the async executor.
async fn with_session<R: Send + 'static>(
    state: &Arc<AppState>,
    id: &str,
    f: impl FnOnce(&AppState, &mut Session) -> Result<R> + Send + 'static,
) -> ApiResult<R> {
    let shared = state.session(id)?;
    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = shared.lock().unwrap();
        f(&state, &mut s)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(ApiError::from)
}

fn index(raw: &str, what: &str) -> ApiResult<usize> {
    raw.parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "invalid_path_parameter", format!("{what} {raw:?} is not an index")))
}

fn object_id(raw: &str) -> ApiResult<u32> {
    raw.parse().map_err(|_| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_path_parameter", format!("object id {raw:?} is not a number"))
    })
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub video: String,
    pub backend: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct CreateObject {
    pub frame: usize,
    pub class_id: u32,
    pub class_name: String,
}

#[derive(Debug, Deserialize)]
pub struct AddPoint {
    pub frame: usize,
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

#[derive(Debug, Deserialize)]
pub struct Reannotate {
    pub frame: usize,
}

#[derive(Debug, Default, Deserialize)]
pub struct Restart {
    pub object_id: Option<u32>,
}

#[derive(Debug, Deserialize)]
pub struct Export {
    #[serde(default = "default_true")]
    pub merged: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VideoView {
    pub video_id: String,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FrameMaskView {
    pub frame: usize,
    pub mask: Rle,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ObjectView {
    pub object_id: u32,
    pub class_id: u32,
    pub class_name: String,
    pub anchor_frame: usize,
    pub color: [u8; 3],
    pub status: ObjectStatus,
    pub prompts: Vec<PromptPoint>,
    pub previews: Vec<FrameMaskView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub revision: u64,
    pub busy: bool,
    pub backend: String,
    pub video: VideoView,
    pub objects: Vec<ObjectView>,
    /// Frames that have propagated masks.
    pub propagated_frames: Vec<usize>,
}

impl SessionView {
    pub fn of(s: &Session) -> Self {
        let v = s.video();
        Self {
            session_id: s.session_id.clone(),
            revision: s.revision(),
            busy: s.is_busy(),
            backend: s.backend_name().to_string(),
            video: VideoView {
                video_id: v.video_id.clone(),
                frames: v.frame_count(),
                width: v.width(),
                height: v.height(),
                fps: v.fps,
            },
            objects: s
                .objects()
                .values()
                .map(|o| ObjectView {
                    object_id: o.object_id,
                    class_id: o.class_id,
                    class_name: o.class_name.clone(),
                    anchor_frame: o.anchor_frame,
                    color: palette_color(o.object_id),
                    status: o.status,
                    prompts: o.prompts.clone(),
                    previews: o
                        .preview_masks
                        .iter()
                        .map(|(&frame, m)| FrameMaskView { frame, mask: m.to_rle() })
                        .collect(),
                })
                .collect(),
            propagated_frames: s
                .propagation()
                .map(|p| {
                    let mut f: Vec<usize> = p.masks.keys().map(|(f, _)| *f).collect();
                    f.dedup();
                    f
                })
                .unwrap_or_default(),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/objects", post(add_object))
        .route("/sessions/{id}/objects/{oid}/points", post(add_point))
        .route("/sessions/{id}/objects/{oid}/reannotate", post(reannotate))
        .route("/sessions/{id}/restart", post(restart))
        .route("/sessions/{id}/propagate", post(propagate))
        .route("/sessions/{id}/masks/{frame}", get(frame_masks))
        .route("/sessions/{id}/frames/{frame}", get(frame_png))
        .route("/sessions/{id}/composite/{frame}", get(composite_png))
        .route("/sessions/{id}/export", post(export))
        .route("/jobs/{jid}", get(get_job))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: std::result::Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let backend_name = req.backend.unwrap_or_else(|| state.config.backend.clone());
    let backend = state.registry.get(&backend_name)?;
    let path = state.video_path(&req.video)?;
    let video = tokio::task::spawn_blocking(move || VideoDataset::load(&path))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let s = Session::new(Arc::new(video), backend_name, backend);
    state.persist(&s);
    let view = SessionView::of(&s);
    state.insert_session(s);
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    // Reads go through the same lock; propagation runs without holding it.
    Ok(Json(with_session(&state, &id, |_, s| Ok(SessionView::of(s))).await?))
}

async fn add_object(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: std::result::Result<Json<CreateObject>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let out = with_session(&state, &id, move |st, s| {
        let object_id = s.add_object(req.frame, req.class_id, &req.class_name)?;
        st.persist(s);
        Ok(json!({ "object_id": object_id, "revision": s.revision(), "color": palette_color(object_id) }))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(out)))
}

async fn add_point(
    State(state): State<Arc<AppState>>,
    Path((id, oid)): Path<(String, String)>,
    body: std::result::Result<Json<AddPoint>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(req) = body?;
    let oid = object_id(&oid)?;
    let out = with_session(&state, &id, move |st, s| {
        let mask = s.add_point(oid, req.frame, req.x, req.y, req.polarity)?.to_rle();
        st.persist(s);
        Ok(json!({ "object_id": oid, "frame": req.frame, "revision": s.revision(), "mask": mask }))
    })
    .await?;
    Ok(Json(out))
}

async fn reannotate(
    State(state): State<Arc<AppState>>,
    Path((id, oid)): Path<(String, String)>,
    body: std::result::Result<Json<Reannotate>, JsonRejection>,
) -> ApiResult<Json<serde_json::Value>> {
    let Json(req) = body?;
    let oid = object_id(&oid)?;
    let out = with_session(&state, &id, move |st, s| {
        s.reannotate(oid, req.frame)?;
        st.persist(s);
        Ok(json!({ "revision": s.revision() }))
    })
    .await?;
    Ok(Json(out))
}

async fn restart(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<Restart>>,
) -> ApiResult<Json<serde_json::Value>> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let out = with_session(&state, &id, move |st, s| {
        s.restart(req.object_id)?;
        st.persist(s);
        Ok(json!({ "revision": s.revision() }))
    })
    .await?;
    Ok(Json(out))
}

async fn propagate(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let shared = state.session(&id)?;
    let (job, total) = with_session(&state, &id, |_, s| {
        let job = s.begin_propagation()?;
        let total = job.total_frames();
        Ok((job, total))
    })
    .await?;
    let job_id = uuid::Uuid::new_v4().to_string();
    let status = Arc::new(Mutex::new(JobStatus {
        job_id: job_id.clone(),
        kind: JobKind::Propagation,
        state: JobState::Running,
        progress: JobProgress { done: 0, total },
        error: None,
        session_id: Some(id.clone()),
    }));
    state.jobs.write().unwrap().insert(job_id.clone(), status.clone());
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let report = |done: usize, total: usize| {
            status.lock().unwrap().progress = JobProgress { done, total };
        };
        let outcome = job.run(&report);
        let mut s = shared.lock().unwrap();
        let finished = s.finish_propagation(outcome).map(|_| ());
        let mut js = status.lock().unwrap();
        match finished {
            Ok(()) => {
                js.state = JobState::Done;
                js.progress.done = js.progress.total;
                st.persist(&s);
            }
            Err(e) => {
                log::warn!("propagation job {} failed: {e}", js.job_id);
                js.state = JobState::Failed;
                js.error = Some(format!("{}: {e}", e.code()));
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

async fn get_job(State(state): State<Arc<AppState>>, Path(jid): Path<String>) -> ApiResult<Json<JobStatus>> {
    Ok(Json(state.job(&jid)?))
}

async fn frame_masks(
    State(state): State<Arc<AppState>>,
    Path((id, frame)): Path<(String, String)>,
) -> ApiResult<Json<serde_json::Value>> {
    let frame = index(&frame, "frame")?;
    let out = with_session(&state, &id, move |_, s| {
        s.video().check_frame(frame)?;
        let masks: Vec<_> = s
            .objects()
            .keys()
            .filter_map(|&oid| s.object_mask(frame, oid).map(|m| json!({ "object_id": oid, "mask": m.to_rle() })))
            .collect();
        Ok(json!({ "frame": frame, "revision": s.revision(), "masks": masks }))
    })
    .await?;
    Ok(Json(out))
}

fn png_response(img: &RgbImage) -> ApiResult<Response> {
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "image_error", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes.into_inner()).into_response())
}

async fn frame_png(
    State(state): State<Arc<AppState>>,
    Path((id, frame)): Path<(String, String)>,
) -> ApiResult<Response> {
    let frame = index(&frame, "frame")?;
    let video = with_session(&state, &id, |_, s| Ok(s.video().clone())).await?;
    let img = tokio::task::spawn_blocking(move || video.frame(frame))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    png_response(&img)
}

async fn composite_png(
    State(state): State<Arc<AppState>>,
    Path((id, frame)): Path<(String, String)>,
) -> ApiResult<Response> {
    let frame = index(&frame, "frame")?;
    let composite = with_session(&state, &id, move |_, s| visualize(s, frame)).await?;
    let mut resp = png_response(&composite.image)?;
    if let Ok(v) = serde_json::to_string(&composite.legend)?.parse() {
        resp.headers_mut().insert("x-legend", v);
    }
    Ok(resp)
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

async fn export(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<Export>>,
) -> ApiResult<Json<serde_json::Value>> {
    let merged = body.is_none_or(|Json(e)| e.merged);
    let out = with_session(&state, &id, move |st, s| {
        let dir = st.config.export_root.join(&s.session_id);
        let manifest = export_masks(s, &dir, merged)?;
        let files: Vec<&ExportEntry> = manifest.entries.iter().collect();
        Ok(json!({
            "dir": dir,
            "manifest": dir.join(session::MANIFEST_FILE),
            "files": files,
            "revision": s.revision(),
        }))
    })
    .await?;
    Ok(Json(out))
}

/// Binds the configured address and serves until the process exits.
pub async fn serve(state: Arc<AppState>) -> Result<()> {
    let addr = format!("{}:{}", state.config.host, state.config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| Error::io(PathBuf::from(&addr), e))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io(PathBuf::from(addr), e))
}
