//! Serves any [`FhirSource`] over real HTTP on 127.0.0.1.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::fhir_client::{FhirSource, FHIR_JSON};

#[derive(Clone)]
struct Shared {
    source: Arc<dyn FhirSource>,
    origin: String,
}

/// A running listener; dropping it stops the server.
pub struct LoopbackServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl LoopbackServer {
    /// Base URL to hand to the FHIR client.
    pub fn base_url(&self) -> String {
        format!("http://{}/fhir", self.addr)
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.await;
        }
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

async fn forward(State(shared): State<Shared>, uri: Uri) -> Response {
    let path = uri.path_and_query().map(|p| p.as_str()).unwrap_or("/");
    let url = format!("{}{}", shared.origin, path);
    match shared.source.get(&url).await {
        Ok(resp) => {
            let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, [(header::CONTENT_TYPE, FHIR_JSON)], resp.body).into_response()
        }
        Err(e) => (StatusCode::BAD_GATEWAY, e.to_string()).into_response(),
    }
}

/// Binds an ephemeral port and serves `source` until stopped.
pub async fn serve_loopback(source: Arc<dyn FhirSource>) -> io::Result<LoopbackServer> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let app = Router::new().fallback(forward).with_state(Shared {
        source,
        origin: format!("http://{addr}"),
    });
    let (tx, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(LoopbackServer {
        addr,
        shutdown: Some(tx),
        handle: Some(handle),
    })
}
