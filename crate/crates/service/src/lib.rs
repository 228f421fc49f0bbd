//! HTTP API and command-line front end over a textpond store.

pub mod api;
pub mod config;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use textpond_core::{Engine, EngineError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use api::router;
pub use config::ApiConfig;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("store at {0} is not initialized; run `textpond ingest` first")]
    UninitializedStore(PathBuf),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(EngineError),
}

/// A running server. Dropping the handle leaves it running until the
/// runtime stops.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(self) -> io::Result<()> {
        let _ = self.shutdown.send(());
        self.task.await.map_err(io::Error::other)?
    }
}

pub fn open_engine(config: &ApiConfig) -> Result<Engine, ServeError> {
    Engine::open_existing(config.engine_config()).map_err(|e| match e {
        EngineError::Uninitialized(p) => ServeError::UninitializedStore(p),
        other => ServeError::Engine(other),
    })
}

/// Opens the store and starts serving on `config.bind` (port 0 picks a free
/// port; see [`ServiceHandle::local_addr`]).
pub async fn serve(config: &ApiConfig) -> Result<ServiceHandle, ServeError> {
    let engine = Arc::new(open_engine(config)?);
    let app = router(engine, config).map_err(ServeError::Config)?;
    let bind_failure = |source| ServeError::BindFailure {
        addr: config.bind,
        source,
    };
    let listener = TcpListener::bind(config.bind).await.map_err(bind_failure)?;
    let addr = listener.local_addr().map_err(bind_failure)?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    log::info!("serving {} on http://{addr}", config.store_root.display());
    Ok(ServiceHandle {
        addr,
        shutdown: tx,
        task,
    })
}
