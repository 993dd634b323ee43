//! HTTP and WebSocket gateway.
//!
//! | Method | Path                | |
//! |--------|---------------------|-|
//! | GET    | `/twins`            | `{"twins": [TwinInstance]}`, optional `?model=` |
//! | GET    | `/twins/{id}`       | `{"twin", "relationships"}` |
//! | GET    | `/relationships`    | `{"relationships": [TwinRelationship]}` |
//! | GET    | `/models`           | `{"models": [TwinModel]}` |
//! | GET    | `/kpis`             | `[[timestamp_ms, value], ...]` for `entity`, `metric`, `from`, `to` |
//! | GET    | `/stats`            | handler, controller and gateway counters |
//! | POST   | `/analytics/run`    | analytics bundle |
//! | POST   | `/actions`          | 202, bearer token required |
//! | GET    | `/stream`           | WebSocket feed |
//! | GET    | `/schemas/{name}`   | JSON Schema documents |
//! | GET    | `/console/`         | static console assets |
//!
//! Errors are `{"status", "code", "message"}`.

mod api;
mod schemas;
mod stream;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use netwin_core::analytics::{AnalyticsConfig, AnalyticsError, PromptTemplates};
use netwin_core::bus::{graph_events_topic, BusError, SharedBus, TopicFilter};
use netwin_core::handler::HandlerStats;
use netwin_core::twin::TwinController;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use crate::config::GatewayConfig;

pub use api::ApiError;
pub use schemas::SCHEMAS;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("prompt templates: {0}")]
    Templates(#[from] AnalyticsError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

struct Shared {
    controller: TwinController,
    bus: SharedBus,
    handler_stats: Option<Arc<HandlerStats>>,
    config: GatewayConfig,
    analytics: AnalyticsConfig,
    templates: PromptTemplates,
    frames: broadcast::Sender<Arc<str>>,
    actions_published: AtomicU64,
    stream_clients: AtomicUsize,
}

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    pub fn controller(&self) -> &TwinController {
        &self.shared.controller
    }

    /// Number of 202 responses from `/actions`.
    pub fn actions_published(&self) -> u64 {
        self.shared.actions_published.load(Ordering::SeqCst)
    }

    pub fn stream_clients(&self) -> usize {
        self.shared.stream_clients.load(Ordering::SeqCst)
    }
}

pub struct Gateway {
    state: AppState,
    forwarder: JoinHandle<()>,
}

impl Gateway {
    /// Starts relaying `netwin/events/graph` to stream clients.
    pub async fn new(
        controller: TwinController,
        bus: SharedBus,
        handler_stats: Option<Arc<HandlerStats>>,
        config: GatewayConfig,
        analytics: AnalyticsConfig,
    ) -> Result<Self, GatewayError> {
        let templates = match &config.templates_dir {
            Some(dir) => PromptTemplates::from_dir(dir)?,
            None => PromptTemplates::embedded(),
        };
        let (frames, _) = broadcast::channel(config.client_queue.max(1));
        let mut events = bus
            .subscribe(&TopicFilter::new(graph_events_topic().as_str())?)
            .await?;
        let tx = frames.clone();
        let forwarder = tokio::spawn(async move {
            while let Some(msg) = events.recv().await {
                match stream::changeset_frame(&msg.payload) {
                    Some(frame) => {
                        let _ = tx.send(frame);
                    }
                    None => tracing::warn!("ignoring malformed graph event"),
                }
            }
        });
        let state = AppState {
            shared: Arc::new(Shared {
                controller,
                bus,
                handler_stats,
                config,
                analytics,
                templates,
                frames,
                actions_published: AtomicU64::new(0),
                stream_clients: AtomicUsize::new(0),
            }),
        };
        Ok(Gateway { state, forwarder })
    }

    pub fn state(&self) -> AppState {
        self.state.clone()
    }

    pub fn router(&self) -> Router {
        let console = ServeDir::new(&self.state.shared.config.console_dir)
            .append_index_html_on_directories(true);
        Router::new()
            .route("/twins", get(api::twins))
            .route("/twins/{id}", get(api::twin))
            .route("/relationships", get(api::relationships))
            .route("/models", get(api::models))
            .route("/kpis", get(api::kpis))
            .route("/stats", get(api::stats))
            .route("/analytics/run", post(api::run_analytics))
            .route("/actions", post(api::post_action))
            .route("/schemas", get(schemas::index))
            .route("/schemas/{name}", get(schemas::schema))
            .route("/stream", get(stream::upgrade))
            .nest_service("/console", console)
            .fallback(api::not_found)
            .with_state(self.state.clone())
    }

    /// Binds `addr` (port 0 picks a free port) and serves until shut down.
    pub async fn bind(self, addr: &str) -> Result<RunningGateway, GatewayError> {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| GatewayError::Bind {
                addr: addr.to_string(),
                source,
            })?;
        let local = listener.local_addr().map_err(|source| GatewayError::Bind {
            addr: addr.to_string(),
            source,
        })?;
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let app = self.router();
        let server = tokio::spawn(async move {
            let shutdown = async {
                let _ = stop_rx.await;
            };
            if let Err(e) = axum::serve(listener, app)
                .with_graceful_shutdown(shutdown)
                .await
            {
                tracing::error!(error = %e, "gateway stopped");
            }
        });
        tracing::info!(addr = %local, "gateway listening");
        Ok(RunningGateway {
            addr: local,
            state: self.state.clone(),
            stop: Some(stop_tx),
            server,
            gateway: self,
        })
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.forwarder.abort();
    }
}

pub struct RunningGateway {
    pub addr: SocketAddr,
    state: AppState,
    stop: Option<oneshot::Sender<()>>,
    server: JoinHandle<()>,
    gateway: Gateway,
}

impl RunningGateway {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> AppState {
        self.state.clone()
    }

    /// Stops accepting connections; open streams are dropped after a grace period.
    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.gateway.forwarder.abort();
        if tokio::time::timeout(Duration::from_secs(2), &mut self.server)
            .await
            .is_err()
        {
            self.server.abort();
        }
    }
}

impl Drop for RunningGateway {
    fn drop(&mut self) {
        self.server.abort();
    }
}
