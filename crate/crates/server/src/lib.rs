//! Network front end of the simulator.
//!
//! Two listeners share one read-only [`TopologyRegistry`]: the `rcenv/1` line
//! protocol over TCP, where each connection is an environment session, and an
//! HTTP API for batch runs (`/v1/simulate`, `/v1/sweep`, `/v1/compare`,
//! `/v1/gen-topology`, `/v1/topologies`).

pub mod http;
pub mod lines;
pub mod registry;
pub mod session;
pub mod transcript;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use tokio::net::TcpListener;

pub use lines::LineServer;
pub use registry::{RegistryError, TopologyRegistry};
pub use session::{Outcome, Session, SessionState};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: String,
    /// Line-protocol port; 0 picks a free one.
    pub port: u16,
    /// HTTP port; `None` disables the HTTP API.
    pub http_port: Option<u16>,
    pub topologies: Option<PathBuf>,
    pub base_seed: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1".into(),
            port: streamrc_core::wire::DEFAULT_PORT,
            http_port: None,
            topologies: None,
            base_seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bound listeners, ready to serve.
pub struct Bound {
    pub line_addr: SocketAddr,
    pub http_addr: Option<SocketAddr>,
    line: TcpListener,
    http: Option<TcpListener>,
    registry: Arc<TopologyRegistry>,
    base_seed: u64,
}

pub fn load_registry(dir: Option<&std::path::Path>) -> Result<TopologyRegistry, RegistryError> {
    let mut registry = TopologyRegistry::with_builtins();
    if let Some(dir) = dir {
        registry.load_dir(dir)?;
    }
    Ok(registry)
}

async fn listen(bind: &str, port: u16) -> Result<TcpListener, ServeError> {
    let addr = format!("{bind}:{port}");
    TcpListener::bind(&addr).await.map_err(|source| ServeError::Bind { addr, source })
}

pub async fn bind(config: &ServeConfig) -> Result<Bound, ServeError> {
    let registry = Arc::new(load_registry(config.topologies.as_deref())?);
    let line = listen(&config.bind, config.port).await?;
    let http = match config.http_port {
        Some(p) => Some(listen(&config.bind, p).await?),
        None => None,
    };
    Ok(Bound {
        line_addr: line.local_addr()?,
        http_addr: http.as_ref().map(|l| l.local_addr()).transpose()?,
        line,
        http,
        registry,
        base_seed: config.base_seed,
    })
}

impl Bound {
    /// Serves until `shutdown` completes.
    pub async fn serve(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        let lines = Arc::new(LineServer::new(self.registry.clone(), self.base_seed));
        let line_task = tokio::spawn(lines.serve(self.line));
        let (stop_tx, stop_rx) = tokio::sync::watch::channel(());
        let http_task = self.http.map(|listener| {
            let app = http::router(self.registry.clone());
            let mut rx = stop_rx.clone();
            tokio::spawn(async move {
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = rx.changed().await;
                    })
                    .await
            })
        });
        tokio::select! {
            r = line_task => r.map_err(std::io::Error::other)??,
            _ = shutdown => {}
        }
        let _ = stop_tx.send(());
        if let Some(t) = http_task {
            t.await.map_err(std::io::Error::other)??;
        }
        Ok(())
    }
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let bound = bind(&config).await?;
    tracing::info!(line = %bound.line_addr, http = ?bound.http_addr, "listening");
    bound
        .serve(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
