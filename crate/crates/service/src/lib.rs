//! Event-sourced HTTP service for live trial conduct.

pub mod api;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use store::{Store, StoreError};

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, data_dir: impl Into<PathBuf>) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let store = Arc::new(Store::open(data_dir)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, dir = %store.dir().display(), "listening");
    axum::serve(listener, router(store)).await?;
    Ok(())
}
