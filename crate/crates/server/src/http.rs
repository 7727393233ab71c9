//! WebSocket endpoint and the HTTP/JSON API.

use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use mirrorboard_core::gaze::{AnalysisConfig, GazeLog};
use mirrorboard_core::session::{mirror_pose, AvatarPose, BoardPlane, SessionConfig, SessionState};
use mirrorboard_core::wire::decode_flake;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{mpsc, oneshot};

use crate::router_task::{Cmd, WRITER_DEPTH};
use crate::tcp::NEXT_CONN;

#[derive(Clone)]
pub(crate) struct AppState {
    pub cmds: mpsc::Sender<Cmd>,
    pub manual: bool,
}

pub(crate) fn app(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/api/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/api/stats", get(stats))
        .route("/api/tick", post(tick))
        .route("/api/mirror", post(mirror))
        .route("/api/visible", post(visible))
        .route("/api/analyze", post(analyze))
        .with_state(state)
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(json!({"error": message.to_string()}))).into_response()
}

async fn stats(State(s): State<AppState>) -> Response {
    let (tx, rx) = oneshot::channel();
    if s.cmds.send(Cmd::Stats { reply: tx }).await.is_err() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "relay stopped");
    }
    match rx.await {
        Ok(st) => Json(st).into_response(),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "relay stopped"),
    }
}

async fn tick(State(s): State<AppState>) -> Response {
    if !s.manual {
        return error(StatusCode::CONFLICT, "relay ticks on its own clock");
    }
    let (tx, rx) = oneshot::channel();
    if s.cmds.send(Cmd::Tick { reply: Some(tx) }).await.is_err() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "relay stopped");
    }
    match rx.await {
        Ok(r) => Json(r).into_response(),
        Err(_) => error(StatusCode::SERVICE_UNAVAILABLE, "relay stopped"),
    }
}

#[derive(Deserialize)]
struct MirrorRequest {
    pose: AvatarPose,
    #[serde(default)]
    board: BoardPlane,
}

async fn mirror(Json(req): Json<MirrorRequest>) -> Response {
    match req.board.validate().and_then(|_| mirror_pose(&req.pose, &req.board)) {
        Ok(p) => Json(p).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}

#[derive(Deserialize)]
struct VisibleRequest {
    session: SessionConfig,
    viewer: String,
}

async fn visible(Json(req): Json<VisibleRequest>) -> Response {
    match SessionState::from_config(&req.session).and_then(|s| s.visible_avatars(&req.viewer)) {
        Ok(v) => Json(v).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}

#[derive(Deserialize)]
struct AnalyzeQuery {
    cone: Option<f64>,
    min_contact: Option<u64>,
}

/// Body: a gaze log (JSON lines). Returns the recomputed metrics.
async fn analyze(Query(q): Query<AnalyzeQuery>, body: Bytes) -> Response {
    let log = match GazeLog::read(body.as_ref()) {
        Ok(l) => l,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let cfg = AnalysisConfig {
        cone_deg: q.cone.unwrap_or(log.header.analysis.cone_deg),
        min_contact_ms: q.min_contact.unwrap_or(log.header.analysis.min_contact_ms),
    };
    match log.analyze_with(&cfg) {
        Ok(a) => Json(a.metrics).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(s): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| serve_ws(socket, s.cmds))
}

/// Each binary message carries exactly one packet, in both directions.
async fn serve_ws(socket: WebSocket, cmds: mpsc::Sender<Cmd>) {
    let conn = NEXT_CONN.fetch_add(1, Ordering::Relaxed);
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::channel::<Arc<[u8]>>(WRITER_DEPTH);
    if cmds.send(Cmd::Open { conn, tx }).await.is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(p) = rx.recv().await {
            if sink.send(Message::Binary(Bytes::copy_from_slice(&p))).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(msg)) = stream.next().await {
        let cmd = match msg {
            Message::Binary(b) => match decode_flake(&b) {
                Ok(flake) => Cmd::Packet { conn, flake },
                Err(e) => Cmd::Garbage {
                    conn,
                    message: e.to_string(),
                },
            },
            Message::Text(_) => Cmd::Garbage {
                conn,
                message: "text frames are not accepted; send binary packets".into(),
            },
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
        };
        if cmds.send(cmd).await.is_err() {
            break;
        }
    }
    let _ = cmds.send(Cmd::Close { conn }).await;
    let _ = writer.await;
}
