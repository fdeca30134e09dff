//! HTTP front end for a [`Hub`].

use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;
use std::thread;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::oneshot;

use super::{parse_multipart, ControlMessage, Hub, PublishedView, SessionSummary};
use crate::error::TransportError;

const MAX_BODY: usize = 64 * 1024 * 1024;

#[derive(Clone)]
struct AppState {
    hub: Arc<Hub>,
    ui_dir: Option<Arc<PathBuf>>,
}

fn error_response(err: &TransportError) -> Response {
    let (status, body) = match err {
        TransportError::StaleSeq { seq, last } => (
            StatusCode::CONFLICT,
            json!({"error": "stale_seq", "seq": seq, "last": last}),
        ),
        TransportError::MalformedPacket(m) => (
            StatusCode::BAD_REQUEST,
            json!({"error": "malformed_packet", "message": m}),
        ),
        TransportError::UnknownSession(id) => (
            StatusCode::NOT_FOUND,
            json!({"error": "unknown_session", "session_id": id}),
        ),
        other => (
            StatusCode::INTERNAL_SERVER_ERROR,
            json!({"error": "internal", "message": other.to_string()}),
        ),
    };
    (status, Json(body)).into_response()
}

async fn ingest(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    let hub = app.hub.clone();
    let work = tokio::task::spawn_blocking(move || {
        let packet = parse_multipart(&content_type, body)?;
        if packet.meta.session_id != id {
            return Err(TransportError::MalformedPacket(format!(
                "meta session `{}` does not match path `{id}`",
                packet.meta.session_id
            )));
        }
        hub.ingest(packet)
    });
    match work.await {
        Ok(Ok(view)) => Json(json!({"seq": view.seq})).into_response(),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&TransportError::Connection(e.to_string())),
    }
}

fn jpeg_response(view: &PublishedView, bytes: Bytes) -> Response {
    let mut resp = bytes.into_response();
    let h = resp.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/jpeg"));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    h.insert("x-seq", HeaderValue::from(view.seq));
    h.insert("x-staleness-ms", HeaderValue::from(view.staleness_ms()));
    resp
}

async fn latest(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.hub.get_latest(&id) {
        Ok(v) => jpeg_response(&v, v.jpeg.clone()),
        Err(e) => error_response(&e),
    }
}

async fn preview(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.hub.get_latest(&id) {
        Ok(v) => jpeg_response(&v, v.preview.clone()),
        Err(e) => error_response(&e),
    }
}

async fn meta(State(app): State<AppState>, Path(id): Path<String>) -> Response {
    match app.hub.get_latest(&id) {
        Ok(v) => Json(v.meta()).into_response(),
        Err(e) => error_response(&e),
    }
}

async fn control(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let result = ControlMessage::parse(&body).and_then(|msg| app.hub.control(&id, msg));
    match result {
        Ok(()) => (StatusCode::ACCEPTED, Json(json!({"queued": true}))).into_response(),
        Err(e) => error_response(&e),
    }
}

async fn sessions(State(app): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(app.hub.sessions())
}

fn content_type_for(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn ui_file(State(app): State<AppState>, path: Option<Path<String>>) -> Response {
    let Some(root) = app.ui_dir.clone() else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let rel = path.map(|Path(p)| p).unwrap_or_default();
    let rel = if rel.is_empty() { "index.html".to_string() } else { rel };
    let rel = PathBuf::from(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let full = root.join(&rel);
    match tokio::fs::read(&full).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type_for(&full))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// All transport endpoints; `ui_dir`, if given, is served under `/ui/`.
pub fn router(hub: Arc<Hub>, ui_dir: Option<PathBuf>) -> Router {
    let state = AppState {
        hub,
        ui_dir: ui_dir.map(Arc::new),
    };
    Router::new()
        .route("/ingest/:id", post(ingest))
        .route("/view/:id/latest.jpg", get(latest))
        .route("/view/:id/preview.jpg", get(preview))
        .route("/view/:id/meta", get(meta))
        .route("/control/:id", post(control))
        .route("/sessions", get(sessions))
        .route("/ui", get(ui_file))
        .route("/ui/", get(ui_file))
        .route("/ui/*path", get(ui_file))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    hub: Arc<Hub>,
    ui_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(hub, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    hub: Arc<Hub>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn spawn(addr: SocketAddr, hub: Arc<Hub>, ui_dir: Option<PathBuf>) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let served = hub.clone();
        let thread = thread::Builder::new()
            .name("roicast-server".into())
            .spawn(move || {
                runtime.block_on(serve(listener, served, ui_dir, async {
                    let _ = stopped.await;
                }))
            })?;
        Ok(Self {
            addr,
            hub,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}
