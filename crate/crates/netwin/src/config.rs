//! Process configuration: one JSON document, every field optional.
//!
//! ```json
//! {
//!   "bus": "memory",
//!   "host": "127.0.0.1",
//!   "port": 8080,
//!   "scenario": "ubikampus-demo",
//!   "seed": 7,
//!   "clock": "fast",
//!   "handler": { "alpha": 0.3, "staleness_window_ms": 5000, "placement": "cloud" },
//!   "controller": { "ttl_ms": 60000, "sweep_interval_ms": 10000, "snapshot_dir": "state" },
//!   "analytics": { "z_threshold": 2.5, "horizon": 5 },
//!   "gateway": { "console_dir": "console/dist", "kpi_tick_ms": 1000 }
//! }
//! ```
//!
//! Command-line flags override file values.

use std::path::{Path, PathBuf};

use netwin_core::analytics::AnalyticsConfig;
use netwin_core::handler::HandlerConfig;
use netwin_core::simulator::{ClockMode, ScenarioSpec};
use netwin_core::twin::ControllerConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("configuration error in {path}: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, reason: impl ToString) -> Self {
        ConfigError {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Built console assets, served under `/console/`.
    pub console_dir: PathBuf,
    pub kpi_tick_ms: u64,
    /// Frames buffered per stream client before it is disconnected.
    pub client_queue: usize,
    pub templates_dir: Option<PathBuf>,
    pub remote_lm_url: Option<String>,
    pub remote_lm_timeout_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            console_dir: PathBuf::from("console/dist"),
            kpi_tick_ms: 1000,
            client_queue: 256,
            templates_dir: None,
            remote_lm_url: None,
            remote_lm_timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetwinConfig {
    /// `memory` or `mqtt://host[:port]`.
    pub bus: String,
    pub host: String,
    pub port: u16,
    /// Scenario file path or built-in name.
    pub scenario: String,
    /// Overrides the scenario's `rng_seed`.
    pub seed: Option<u64>,
    pub clock: ClockMode,
    pub handler: HandlerConfig,
    pub controller: ControllerConfig,
    pub analytics: AnalyticsConfig,
    pub gateway: GatewayConfig,
}

impl Default for NetwinConfig {
    fn default() -> Self {
        NetwinConfig {
            bus: "memory".into(),
            host: "127.0.0.1".into(),
            port: 8080,
            scenario: "ubikampus-demo".into(),
            seed: None,
            clock: ClockMode::Fast,
            handler: HandlerConfig::default(),
            controller: ControllerConfig::default(),
            analytics: AnalyticsConfig::default(),
            gateway: GatewayConfig::default(),
        }
    }
}

impl NetwinConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(&name, e))?;
        let config: NetwinConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::new(&name, e))?;
        config
            .validate()
            .map_err(|e| ConfigError::new(name, e.reason))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bus != "memory"
            && !self.bus.starts_with("mqtt://")
            && !self.bus.starts_with("tcp://")
        {
            return Err(ConfigError::new(
                "bus",
                format!("unsupported bus url `{}`", self.bus),
            ));
        }
        if !(self.handler.alpha > 0.0 && self.handler.alpha <= 1.0) {
            return Err(ConfigError::new("handler.alpha", "must lie in (0, 1]"));
        }
        if self.controller.tokens.is_empty() {
            return Err(ConfigError::new(
                "controller.tokens",
                "at least one token is required",
            ));
        }
        if self.controller.ttl_ms == 0 || self.controller.sweep_interval_ms == 0 {
            return Err(ConfigError::new(
                "controller",
                "ttl_ms and sweep_interval_ms must be positive",
            ));
        }
        if self.gateway.kpi_tick_ms == 0 || self.gateway.client_queue == 0 {
            return Err(ConfigError::new(
                "gateway",
                "kpi_tick_ms and client_queue must be positive",
            ));
        }
        self.analytics
            .validate()
            .map_err(|e| ConfigError::new("analytics", e))
    }

    /// Loads the scenario and applies the seed override.
    pub fn load_scenario(&self) -> Result<ScenarioSpec, ConfigError> {
        let mut spec =
            ScenarioSpec::load(&self.scenario).map_err(|e| ConfigError::new(&self.scenario, e))?;
        if let Some(seed) = self.seed {
            spec.rng_seed = seed;
        }
        Ok(spec)
    }

    pub fn token(&self) -> &str {
        self.controller.tokens.first().map_or("", String::as_str)
    }
}
