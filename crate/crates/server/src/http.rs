//! HTTP routes and the websocket event transport.
//!
//! Client frames carry one payload each, e.g. `{"type":"ChatMessage","text":"hi"}`.
//! Server frames are transcript events exactly as logged, plus `{"ack":seq}`,
//! `{"error":..,"code":..}` and a `{"welcome":{..}}` greeting on connect.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use refgame_core::game::RoundResult;
use refgame_core::participants::Role;
use refgame_core::transcript::{Payload, SurveyResponse, TranscriptEvent};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc};
use tower_http::services::ServeDir;

use crate::error::ServerError;
use crate::registry::{CreateSession, Registry, SessionHandle};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub session_id: String,
    pub role: Role,
    pub last_seq: u64,
    pub n_rounds: u32,
    pub phase: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ServerFrame {
    Event(TranscriptEvent),
    Welcome { welcome: Welcome },
    Ack { ack: u64 },
    Error { error: String, code: String },
}

impl ServerFrame {
    fn error(e: &ServerError) -> Self {
        ServerFrame::Error {
            error: e.to_string(),
            code: e.code().to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct TokenQuery {
    pub token: String,
}

#[derive(Debug, Deserialize)]
pub struct JoinQuery {
    pub token: String,
    #[serde(default)]
    pub last_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileView {
    /// Position (director) or tile index (matcher), 1-based.
    pub index: usize,
    pub image_url: String,
}

/// What one role sees of one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub round: u32,
    pub role: Role,
    pub tiles: Vec<TileView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<Vec<Option<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<RoundResult>,
}

pub fn router(registry: Arc<Registry>) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/events", get(session_events))
        .route("/sessions/{id}/survey", post(submit_survey))
        .route("/sessions/{id}/rounds/{k}", get(round_view))
        .route("/ws/{id}", get(ws_join))
        .with_state(Arc::clone(&registry));
    if let Some(dir) = &registry.config.assets_dir {
        app = app.nest_service("/assets", ServeDir::new(dir));
    }
    if let Some(dir) = &registry.config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app
}

async fn health(State(registry): State<Arc<Registry>>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "sessions": registry.len() }))
}

async fn create_session(
    State(registry): State<Arc<Registry>>,
    Json(request): Json<CreateSession>,
) -> Result<(StatusCode, Json<crate::registry::CreatedSession>), ServerError> {
    let created = registry.create_session(request).await?;
    Ok((StatusCode::CREATED, Json(created)))
}

/// The persisted event log, byte for byte.
async fn session_events(
    State(registry): State<Arc<Registry>>,
    Path(id): Path<String>,
    Query(q): Query<TokenQuery>,
) -> Result<Response, ServerError> {
    let handle = registry.handle(&id)?;
    let s = handle.session.lock().await;
    s.role_for_token(&q.token).ok_or(ServerError::BadToken)?;
    let body = tokio::fs::read(s.store_path()).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn submit_survey(
    State(registry): State<Arc<Registry>>,
    Path(id): Path<String>,
    Query(q): Query<TokenQuery>,
    Json(response): Json<SurveyResponse>,
) -> Result<Json<serde_json::Value>, ServerError> {
    let seq = registry.submit_survey(&id, &q.token, response).await?;
    Ok(Json(serde_json::json!({ "seq": seq })))
}

async fn round_view(
    State(registry): State<Arc<Registry>>,
    Path((id, k)): Path<(String, u32)>,
    Query(q): Query<TokenQuery>,
) -> Result<Json<RoundView>, ServerError> {
    let handle = registry.handle(&id)?;
    let s = handle.session.lock().await;
    let role = s.role_for_token(&q.token).ok_or(ServerError::BadToken)?;
    let round = s
        .state()
        .round(k)
        .ok_or_else(|| ServerError::WrongPhase(format!("round {k} has not started")))?;
    let ids = match role {
        Role::Director => &round.director_order,
        Role::Matcher => &round.pool_order,
    };
    let catalog = &s.config().catalog;
    let tiles = ids
        .iter()
        .enumerate()
        .map(|(i, id)| TileView {
            index: i + 1,
            image_url: format!("/assets/{}", catalog.get(id).map_or("", |e| e.image_ref.as_str())),
        })
        .collect();
    Ok(Json(RoundView {
        round: k,
        role,
        tiles,
        slots: (role == Role::Matcher).then(|| round.slots.clone()),
        result: round.result.clone(),
    }))
}

async fn ws_join(
    State(registry): State<Arc<Registry>>,
    Path(id): Path<String>,
    Query(q): Query<JoinQuery>,
    upgrade: WebSocketUpgrade,
) -> Result<Response, ServerError> {
    let (role, handle) = registry.join(&id, &q.token).await?;
    Ok(upgrade
        .on_failed_upgrade({
            let registry = Arc::clone(&registry);
            let id = id.clone();
            move |_| {
                tokio::spawn(async move { registry.leave(&id, role).await });
            }
        })
        .on_upgrade(move |socket| async move {
            run_connection(Arc::clone(&registry), handle, id.clone(), role, q.last_seq, socket).await;
            registry.leave(&id, role).await;
        }))
}

fn frame_text(frame: &ServerFrame) -> Message {
    Message::Text(serde_json::to_string(frame).expect("frame serializes").into())
}

async fn run_connection(
    registry: Arc<Registry>,
    handle: Arc<SessionHandle>,
    id: String,
    role: Role,
    last_seq: u64,
    socket: WebSocket,
) {
    let (mut sink, mut stream) = socket.split();
    let (out, mut out_rx) = mpsc::unbounded_channel::<ServerFrame>();

    // subscribe and read the backlog under one lock so nothing falls in between
    let (mut rx, mut last_sent) = {
        let s = handle.session.lock().await;
        let phase = serde_json::to_value(s.phase()).unwrap_or_default();
        let _ = out.send(ServerFrame::Welcome {
            welcome: Welcome {
                session_id: id.clone(),
                role,
                last_seq: s.last_seq(),
                n_rounds: s.config().n_rounds,
                phase,
            },
        });
        for e in s.events_after(last_seq) {
            let _ = out.send(ServerFrame::Event(e));
        }
        (s.subscribe(), s.last_seq())
    };

    let writer = tokio::spawn(async move {
        while let Some(frame) = out_rx.recv().await {
            if sink.send(frame_text(&frame)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let forwarder = {
        let out = out.clone();
        let handle = Arc::clone(&handle);
        tokio::spawn(async move {
            loop {
                match rx.recv().await {
                    Ok(e) if e.seq > last_sent => {
                        last_sent = e.seq;
                        if out.send(ServerFrame::Event(e)).is_err() {
                            break;
                        }
                    }
                    Ok(_) => {}
                    Err(broadcast::error::RecvError::Lagged(_)) => {
                        let missed = handle.session.lock().await.events_after(last_sent);
                        for e in missed {
                            last_sent = e.seq;
                            if out.send(ServerFrame::Event(e)).is_err() {
                                return;
                            }
                        }
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        })
    };

    while let Some(Ok(msg)) = stream.next().await {
        let reply = match msg {
            Message::Text(text) => match serde_json::from_str::<Payload>(&text) {
                Ok(payload) => match registry.ingest(&id, role, payload).await {
                    Ok(seq) => ServerFrame::Ack { ack: seq },
                    Err(e) => ServerFrame::error(&e),
                },
                Err(e) => ServerFrame::error(&ServerError::Invalid(format!("unreadable frame: {e}"))),
            },
            Message::Binary(_) => ServerFrame::error(&ServerError::Invalid("binary frames are not supported".into())),
            Message::Close(_) => break,
            _ => continue,
        };
        if out.send(reply).is_err() {
            break;
        }
    }
    forwarder.abort();
    drop(out);
    let _ = writer.await;
}
