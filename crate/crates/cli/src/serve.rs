//! The `serve` command: the session service on a TCP port.

use std::path::PathBuf;
use std::sync::Arc;

use refgame_core::participants::{CompletionProvider, MockLlmProvider, ParticipantKind};
use refgame_core::transcript::SystemClock;
use refgame_server::{ProviderFactory, ServerConfig};

use crate::error::CliError;

#[derive(Clone, Debug)]
pub struct ServeOptions {
    pub port: u16,
    pub bind: String,
    pub data_dir: PathBuf,
    pub session_expiry_min: u64,
    pub assets_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    pub mock: bool,
}

/// LLM partners get the mock provider in mock mode, else `live` (if any).
pub fn provider_factory(mock: bool, live: Option<Arc<dyn CompletionProvider>>) -> ProviderFactory {
    Arc::new(move |config| {
        let needs = [&config.director, &config.matcher].iter().any(|p| p.kind == ParticipantKind::Llm);
        if !needs {
            None
        } else if mock {
            Some(Arc::new(MockLlmProvider::for_session(config)) as Arc<dyn CompletionProvider>)
        } else {
            live.clone()
        }
    })
}

pub fn run_serve(opts: &ServeOptions, live: Option<Arc<dyn CompletionProvider>>) -> Result<(), CliError> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let addr = format!("{}:{}", opts.bind, opts.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Failed(format!("cannot bind {addr}: {e}")))?;
        let mut config = ServerConfig::new(&opts.data_dir);
        config.assets_dir = opts.assets_dir.clone();
        config.static_dir = opts.static_dir.clone();
        config.session_expiry_ms = opts.session_expiry_min * 60_000;
        eprintln!("listening on http://{addr}");
        refgame_server::serve(listener, config, Arc::new(SystemClock), provider_factory(opts.mock, live)).await?;
        Ok(())
    })
}
