//! HTTP service over the store: document CRUD with optimistic versioning,
//! session launch and event ingestion, metrics and patient reports, all
//! under `/api/v1`.

pub mod agent;
pub mod error;
mod routes;

use std::future::Future;
use std::sync::Arc;

use artherapist_store::Store;
use tokio::net::TcpListener;

pub use error::{ApiError, ErrorCode};
pub use routes::{router, DOCTOR_HEADER, PREFIX};

/// Finishes scoring of sessions sealed before a crash, then serves until
/// `shutdown` resolves. In-flight requests complete before this returns.
pub async fn serve(
    listener: TcpListener,
    store: Arc<Store>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let s = store.clone();
    tokio::task::spawn_blocking(move || agent::recover_unfinalized(&s))
        .await
        .map_err(std::io::Error::other)?
        .map_err(std::io::Error::other)?;
    axum::serve(listener, router(store)).with_graceful_shutdown(shutdown).await
}
