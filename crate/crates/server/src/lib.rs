//! HTTP service exposing the knowledge-base registry, extraction and the
//! two-step review workflow.

use std::future::Future;
use std::sync::Arc;

use lle_core::extract::{Extractor, ToolRegistry};
use lle_core::kb::{Registry, RegistryError};
use lle_core::session::{Explainer, SessionStore, StoreError, TemplateExplainer};

mod config;
mod error;
mod routes;

pub use config::{ConfigError, ExtractorKind, ServerConfig};
pub use error::ApiError;
pub use routes::{router, ACTOR_HEADER};

/// Shared handles for request handlers. Holds no mutable state of its own.
#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub sessions: Arc<SessionStore>,
    pub extractor: Arc<dyn Extractor>,
    pub explainer: Arc<dyn Explainer>,
    pub tools: ToolRegistry,
    pub bearer_token: Option<String>,
}

impl AppState {
    pub fn new(registry: Registry, sessions: SessionStore, extractor: Arc<dyn Extractor>) -> Self {
        AppState {
            registry: Arc::new(registry),
            sessions: Arc::new(sessions),
            extractor,
            explainer: Arc::new(TemplateExplainer),
            tools: ToolRegistry::date_tools(),
            bearer_token: None,
        }
    }

    pub fn from_config(config: &ServerConfig) -> Result<Self, ServeError> {
        config.check_dirs()?;
        let mut state = AppState::new(
            Registry::open(&config.registry_dir)?,
            SessionStore::open(&config.session_dir)?,
            config.build_extractor()?,
        );
        state.bearer_token = config.bearer_token.clone();
        Ok(state)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Binds and serves until `shutdown` resolves, then drains in-flight
/// requests. `on_bound` receives the bound address.
pub async fn serve(
    config: ServerConfig,
    on_bound: impl FnOnce(std::net::SocketAddr),
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let state = AppState::from_config(&config)?;
    let addr = config.addr();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
