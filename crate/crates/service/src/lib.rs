//! HTTP service for the congestion regression workflow.
//!
//! | method | path                              | purpose                              |
//! |--------|-----------------------------------|--------------------------------------|
//! | GET    | `/api/health`                     | liveness                             |
//! | POST   | `/api/datasets`                   | multipart upload: manifest + files   |
//! | GET    | `/api/datasets/{id}`              | dataset summary                      |
//! | POST   | `/api/datasets/{id}/features`     | extract temporal features            |
//! | GET    | `/api/datasets/{id}/geometry`     | GeoJSON of every link with its role  |
//! | POST   | `/api/models`                     | fit a solver on a dataset            |
//! | GET    | `/api/models/{id}`                | coefficient report                   |
//! | POST   | `/api/models/{id}/predict`        | what-if prediction                   |
//!
//! Anything else is served from the UI directory when one is configured.

mod api;
pub mod error;
pub mod store;
pub mod workflow;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use tokio::net::TcpListener;

pub use api::AppState;
pub use store::{Store, StoreError};

pub const DEFAULT_UPLOAD_LIMIT: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub store_dir: PathBuf,
    pub max_upload_bytes: usize,
    pub cors_origin: Option<String>,
    pub ui_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(store_dir: impl Into<PathBuf>) -> Self {
        Self {
            store_dir: store_dir.into(),
            max_upload_bytes: DEFAULT_UPLOAD_LIMIT,
            cors_origin: None,
            ui_dir: None,
        }
    }
}

/// Opens the store and builds the router.
pub fn app(config: &ServiceConfig) -> Result<Router, StoreError> {
    let store = Store::open(&config.store_dir)?;
    Ok(api::router(Arc::new(AppState { store }), config))
}

/// Serves until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, app: Router, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}
