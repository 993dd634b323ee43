//! Wiring of simulator, handler, controller and gateway.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use netwin_core::bus::{self, BusError, InMemoryBroker, SharedBus};
use netwin_core::handler::{HandlerConfig, HandlerNode, HandlerStats, Placement};
use netwin_core::simulator::{GroundTruth, Simulator, SimulatorNode, SimulatorStats};
use netwin_core::twin::{
    ControllerConfig, ControllerNode, ControllerStats, TwinController, TwinError, TwinStore,
};

use crate::config::{ConfigError, NetwinConfig};
use crate::gateway::{Gateway, GatewayError, RunningGateway};

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("twin controller: {0}")]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Node ids and (device, source) edges of a twin graph, by external id.
pub type GraphIdentity = (BTreeSet<String>, BTreeSet<(String, String)>);

pub fn graph_identity(store: &TwinStore) -> GraphIdentity {
    let nodes = store.instances().map(|i| i.external_id.clone()).collect();
    let external = |twin: &str| store.instance(twin).map(|i| i.external_id.clone());
    let edges = store
        .relationships()
        .filter_map(|r| Some((external(&r.source_twin)?, external(&r.target_twin)?)))
        .collect();
    (nodes, edges)
}

pub fn expected_identity(gt: &GroundTruth) -> GraphIdentity {
    let nodes = gt
        .devices
        .iter()
        .chain(&gt.sources)
        .chain(&gt.env_sensors)
        .cloned()
        .collect();
    (nodes, gt.pairs.clone())
}

pub async fn connect_bus(url: &str, client_id: &str) -> Result<SharedBus, RuntimeError> {
    if url == "memory" {
        return Err(ConfigError::new(
            "bus",
            "component modes need an MQTT broker (`--bus mqtt://host:port`)",
        )
        .into());
    }
    Ok(bus::connect(url, client_id, None).await?)
}

/// Handler node, unless the handler runs inside the simulator.
pub async fn start_handler(
    bus: SharedBus,
    config: &HandlerConfig,
) -> Result<Option<HandlerNode>, RuntimeError> {
    if config.placement == Placement::Device {
        return Ok(None);
    }
    Ok(Some(HandlerNode::spawn(bus, config.clone()).await?))
}

pub async fn start_controller(
    bus: SharedBus,
    config: &ControllerConfig,
) -> Result<(TwinController, ControllerNode), RuntimeError> {
    let controller = TwinController::from_config(config)?;
    let token = config
        .tokens
        .first()
        .ok_or_else(|| ConfigError::new("controller.tokens", "at least one token is required"))?;
    let node = ControllerNode::spawn(bus, controller.clone(), config.clone(), token).await?;
    Ok((controller, node))
}

/// Writes a final snapshot when a snapshot directory is configured.
pub fn flush_snapshot(
    controller: &TwinController,
    config: &ControllerConfig,
) -> Result<Option<PathBuf>, RuntimeError> {
    let Some(dir) = &config.snapshot_dir else {
        return Ok(None);
    };
    let token = config.tokens.first().map_or("", String::as_str);
    let session = controller.authenticate(token)?;
    Ok(Some(controller.persist_snapshot(&session, dir)?))
}

/// Everything in one process over the in-memory bus. The simulator is not
/// driven on its own: call [`AllInOne::run_simulation`] or step it through
/// [`AllInOne::simulator`].
pub struct AllInOne {
    pub config: NetwinConfig,
    pub broker: InMemoryBroker,
    pub controller: TwinController,
    pub simulator: SimulatorNode,
    handler: Option<HandlerNode>,
    controller_node: ControllerNode,
    gateway: Option<RunningGateway>,
}

impl AllInOne {
    /// With `serve` the gateway binds `host:port` from the configuration.
    pub async fn start(config: NetwinConfig, serve: bool) -> Result<Self, RuntimeError> {
        config.validate()?;
        let spec = config.load_scenario()?;
        let broker = InMemoryBroker::new();
        let client = || -> SharedBus { Arc::new(broker.client()) };

        let (controller, controller_node) = start_controller(client(), &config.controller).await?;
        let handler = start_handler(client(), &config.handler).await?;
        let simulator =
            SimulatorNode::new(Simulator::new(spec), client(), Some(config.handler.clone()))
                .await?;
        let gateway = if serve {
            let handler_stats = handler
                .as_ref()
                .map(HandlerNode::stats)
                .or_else(|| simulator.handler_stats());
            let gw = Gateway::new(
                controller.clone(),
                client(),
                handler_stats,
                config.gateway.clone(),
                config.analytics.clone(),
            )
            .await?;
            Some(gw.bind(&format!("{}:{}", config.host, config.port)).await?)
        } else {
            None
        };
        Ok(AllInOne {
            config,
            broker,
            controller,
            simulator,
            handler,
            controller_node,
            gateway,
        })
    }

    pub fn gateway(&self) -> Option<&RunningGateway> {
        self.gateway.as_ref()
    }

    pub fn simulator_stats(&self) -> Arc<SimulatorStats> {
        self.simulator.stats()
    }

    pub fn handler_stats(&self) -> Option<Arc<HandlerStats>> {
        self.handler.as_ref().map(HandlerNode::stats)
    }

    pub fn controller_stats(&self) -> &ControllerStats {
        self.controller.stats()
    }

    /// Runs the scenario to its end at the configured clock.
    pub async fn run_simulation(&mut self) -> Result<(), RuntimeError> {
        self.simulator.run(self.config.clock).await?;
        Ok(())
    }

    /// True once every published reading has made it through the handler
    /// and the controller.
    pub fn is_drained(&self) -> bool {
        let published = self.simulator.stats().published();
        let curated = match &self.handler {
            Some(h) => {
                let s = h.stats();
                if s.consumed() != published || s.published() != s.accepted() {
                    return false;
                }
                s.published()
            }
            None => published,
        };
        self.controller.stats().consumed() == curated
    }

    /// Waits until the pipeline is drained and counters stay unchanged for
    /// `settle`. Returns false on timeout.
    pub async fn quiesce(&self, settle: Duration, timeout: Duration) -> bool {
        let deadline = tokio::time::Instant::now() + timeout;
        let counters = || {
            (
                self.simulator.stats().published(),
                self.controller.stats().consumed(),
                self.controller.stats().changesets(),
            )
        };
        loop {
            if self.is_drained() {
                let before = counters();
                tokio::time::sleep(settle).await;
                if self.is_drained() && counters() == before {
                    return true;
                }
            } else {
                tokio::time::sleep(Duration::from_millis(5)).await;
            }
            if tokio::time::Instant::now() >= deadline {
                return false;
            }
        }
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let sim = self.simulator.simulator();
        sim.ground_truth(sim.elapsed_ms())
    }

    pub fn graph_identity(&self) -> GraphIdentity {
        self.controller.read(graph_identity)
    }

    /// Stops every component and writes the final snapshot.
    pub async fn shutdown(self) -> Result<Option<PathBuf>, RuntimeError> {
        if let Some(gw) = self.gateway {
            gw.shutdown().await;
        }
        if let Some(h) = &self.handler {
            h.shutdown();
        }
        self.controller_node.shutdown();
        flush_snapshot(&self.controller, &self.config.controller)
    }
}
