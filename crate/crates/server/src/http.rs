//! HTTP binding. Every request and response body is a wire envelope.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;

use macarons_core::protocol::{decode, encode, DeviceCyclePhase, ErrorCode, Message};

use crate::error::ServerError;
use crate::service::{ControlServer, ServerOptions};

type App = State<Arc<ControlServer>>;

struct Wire(Message);

impl IntoResponse for Wire {
    fn into_response(self) -> Response {
        ([(header::CONTENT_TYPE, "application/json")], encode(&self.0)).into_response()
    }
}

impl IntoResponse for ServerError {
    fn into_response(self) -> Response {
        let status = match self.code {
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Validation | ErrorCode::Protocol => StatusCode::BAD_REQUEST,
            ErrorCode::Conflict | ErrorCode::VersionRegression => StatusCode::CONFLICT,
            ErrorCode::Integrity => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Storage => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Wire(Message::Error(self.body()))).into_response()
    }
}

type Reply = Result<Wire, ServerError>;

fn body(bytes: &[u8]) -> Result<Message, ServerError> {
    decode(bytes).map_err(|e| ServerError::new(ErrorCode::Protocol, e.to_string()))
}

fn unexpected(got: &Message, want: &str) -> ServerError {
    ServerError::new(ErrorCode::Protocol, format!("expected a {want} body, got {}", got.type_name()))
}

macro_rules! expect {
    ($bytes:expr, $variant:ident, $want:literal) => {
        match body(&$bytes)? {
            Message::$variant(x) => x,
            other => return Err(unexpected(&other, $want)),
        }
    };
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

async fn register(State(s): App, b: Bytes) -> Reply {
    let req = expect!(b, RegistrationRequest, "registration_request");
    blocking(move || s.register_device(&req)).await.map(|d| Wire(Message::DeviceRecord(Box::new(d))))
}

async fn list_devices(State(s): App) -> Reply {
    s.devices().map(|d| Wire(Message::DeviceList(d)))
}

async fn get_device(State(s): App, UrlPath(id): UrlPath<String>) -> Reply {
    s.device(&id).map(|d| Wire(Message::DeviceRecord(Box::new(d))))
}

async fn get_config(State(s): App, UrlPath(id): UrlPath<String>) -> Reply {
    s.config(&id).map(|c| Wire(Message::Config(c)))
}

async fn put_config(State(s): App, UrlPath(id): UrlPath<String>, b: Bytes) -> Reply {
    let values = expect!(b, Config, "config");
    s.set_config(&id, &values).map(|c| Wire(Message::Config(c)))
}

async fn stage_update(State(s): App, UrlPath(id): UrlPath<String>, b: Bytes) -> Reply {
    let bundle = expect!(b, UpdateBundle, "update_bundle");
    blocking(move || s.stage_update(&id, &bundle)).await.map(|()| Wire(Message::Ack))
}

#[derive(Deserialize)]
struct PhaseQuery {
    phase: Option<String>,
}

async fn poll_update(State(s): App, UrlPath(id): UrlPath<String>, Query(q): Query<PhaseQuery>) -> Reply {
    let raw = q.phase.ok_or_else(|| ServerError::new(ErrorCode::Protocol, "missing phase parameter"))?;
    let phase = DeviceCyclePhase::parse(&raw)
        .ok_or_else(|| ServerError::new(ErrorCode::Protocol, format!("unknown phase `{raw}`")))?;
    blocking(move || s.poll_update(&id, phase)).await.map(|u| Wire(Message::UpdatePoll(u)))
}

async fn ack_update(State(s): App, UrlPath(id): UrlPath<String>, b: Bytes) -> Reply {
    let ack = expect!(b, UpdateAck, "update_ack");
    s.ack_update(&id, &ack.version).map(|d| Wire(Message::DeviceRecord(Box::new(d))))
}

async fn push_readings(State(s): App, UrlPath(id): UrlPath<String>, b: Bytes) -> Reply {
    let readings = match body(&b)? {
        Message::Reading(r) => vec![r],
        Message::Readings(rs) => rs,
        other => return Err(unexpected(&other, "reading or readings")),
    };
    blocking(move || s.push_readings(&id, &readings)).await.map(|()| Wire(Message::Ack))
}

#[derive(Deserialize)]
struct RangeQuery {
    from: Option<f64>,
    to: Option<f64>,
}

async fn get_readings(State(s): App, UrlPath(id): UrlPath<String>, Query(q): Query<RangeQuery>) -> Reply {
    blocking(move || s.readings(&id, q.from, q.to)).await.map(|r| Wire(Message::Readings(r)))
}

async fn upload_script(State(s): App, b: Bytes) -> Reply {
    let script = expect!(b, Script, "script");
    s.upload_script(&script).map(|r| Wire(Message::ScriptRecord(r)))
}

async fn list_scripts(State(s): App) -> Reply {
    s.scripts().map(|r| Wire(Message::ScriptList(r)))
}

async fn run_script(State(s): App, UrlPath(id): UrlPath<String>) -> Reply {
    s.run_script(&id).map(|j| Wire(Message::Job(j)))
}

async fn get_job(State(s): App, UrlPath(id): UrlPath<String>) -> Reply {
    s.job(&id).map(|j| Wire(Message::Job(j)))
}

#[derive(Deserialize)]
struct HoldQuery {
    hold: Option<f64>,
}

async fn poll_command(State(s): App, UrlPath(id): UrlPath<String>, Query(q): Query<HoldQuery>) -> Reply {
    let hold = match q.hold {
        Some(h) if h.is_finite() && h >= 0.0 => Some(Duration::from_secs_f64(h)),
        Some(_) => return Err(ServerError::validation("hold must be a non-negative number of seconds")),
        None => None,
    };
    s.poll_command(&id, hold).await.map(|c| Wire(Message::CommandPoll(c)))
}

async fn post_result(State(s): App, UrlPath(id): UrlPath<String>, b: Bytes) -> Reply {
    let result = expect!(b, CommandResult, "command_result");
    if result.command_id != id {
        return Err(ServerError::validation(format!("result for {} posted to {id}", result.command_id)));
    }
    s.post_result(&result).map(|()| Wire(Message::Ack))
}

async fn get_farm(State(s): App) -> Reply {
    s.farm_layout().map(|l| Wire(Message::FarmLayout(Box::new(l))))
}

async fn put_farm(State(s): App, b: Bytes) -> Reply {
    let layout = expect!(b, FarmLayout, "farm_layout");
    s.set_farm_layout(&layout).map(|()| Wire(Message::FarmLayout(layout)))
}

async fn request_move(State(s): App, b: Bytes) -> Reply {
    let req = expect!(b, MoveRequest, "move_request");
    blocking(move || s.request_move(&req)).await.map(|j| Wire(j.map_or(Message::Ack, Message::Job)))
}

async fn fallback() -> ServerError {
    ServerError::not_found("route")
}

pub fn router(server: Arc<ControlServer>) -> Router {
    Router::new()
        .route("/api/devices/register", post(register))
        .route("/api/devices", get(list_devices))
        .route("/api/devices/{id}", get(get_device))
        .route("/api/devices/{id}/config", get(get_config).put(put_config))
        .route("/api/devices/{id}/update", post(stage_update).get(poll_update))
        .route("/api/devices/{id}/update/ack", post(ack_update))
        .route("/api/devices/{id}/readings", post(push_readings).get(get_readings))
        .route("/api/devices/{id}/commands", get(poll_command))
        .route("/api/commands/{id}/result", post(post_result))
        .route("/api/scripts", post(upload_script).get(list_scripts))
        .route("/api/scripts/{id}/run", post(run_script))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/farm", get(get_farm).put(put_farm))
        .route("/api/farm/moves", post(request_move))
        .fallback(fallback)
        .with_state(server)
}

/// Serves until the listener fails or the task is dropped.
pub async fn serve(server: Arc<ControlServer>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(server)).await
}

/// A server on its own runtime, for tests and embedding.
pub struct ServerThread {
    runtime: Option<tokio::runtime::Runtime>,
    addr: SocketAddr,
}

impl ServerThread {
    pub fn start(db: impl AsRef<Path>, addr: &str, options: ServerOptions) -> std::io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let server = runtime
            .block_on(async { ControlServer::open(db, options) })
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        Self::start_with(runtime, server, addr)
    }

    pub fn start_with(
        runtime: tokio::runtime::Runtime,
        server: Arc<ControlServer>,
        addr: &str,
    ) -> std::io::Result<Self> {
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        runtime.spawn(async move {
            if let Err(e) = serve(server, listener).await {
                tracing::error!(error = %e, "server stopped");
            }
        });
        Ok(ServerThread { runtime: Some(runtime), addr })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops abruptly, abandoning in-flight requests and jobs.
    pub fn kill(mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

impl Drop for ServerThread {
    fn drop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}
