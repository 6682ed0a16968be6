//! Session service for the reference game.
//!
//! Pairs participants through per-role join tokens, carries chat, typing and
//! placement events over websockets, persists every session as an append-only
//! event log and replays those logs on restart.

pub mod error;
pub mod http;
pub mod registry;
pub mod session;
pub mod store;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use refgame_core::transcript::Clock;
use tokio::net::TcpListener;

pub use error::ServerError;
pub use http::{router, RoundView, ServerFrame, TileView, Welcome};
pub use registry::{CreateSession, CreatedSession, ProviderFactory, Registry, ServerConfig, DEFAULT_EXPIRY_MIN};
pub use session::{Phase, ATTENTION_PROMPT, EXPIRY_REASON};
pub use store::{list_sessions, read_session, JoinTokens, SessionRecord};

/// How often unpaired sessions are checked for expiry.
pub const EXPIRY_SWEEP: Duration = Duration::from_secs(30);

/// Serves `registry` on `listener` until `shutdown` resolves. Every event is on
/// disk before it is acknowledged, so stopping needs no extra flush.
pub async fn run(
    listener: TcpListener,
    registry: Arc<Registry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServerError> {
    let sweeper = {
        let registry = Arc::clone(&registry);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(EXPIRY_SWEEP);
            loop {
                tick.tick().await;
                if let Err(e) = registry.expire_stale().await {
                    tracing::error!(error = %e, "expiry sweep failed");
                }
            }
        })
    };
    let result = axum::serve(listener, router(registry)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    result.map_err(ServerError::Io)
}

/// Opens the data directory and serves until SIGINT or SIGTERM.
pub async fn serve(
    listener: TcpListener,
    config: ServerConfig,
    clock: Arc<dyn Clock>,
    providers: ProviderFactory,
) -> Result<(), ServerError> {
    let registry = Registry::open(config, clock, providers).await?;
    tracing::info!(addr = ?listener.local_addr().ok(), sessions = registry.len(), "serving");
    run(listener, registry, shutdown_signal()).await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
