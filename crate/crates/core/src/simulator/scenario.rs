//! Scenario files: a campus floor with signal sources, multi-RAT devices and
//! environmental sensors, plus scripted join/leave events.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::signal::{is_mac_address, SignalKind, NETWORK_TYPES};

/// Built-in open-plan campus floor: 3 cells, 6 APs, 8 beacons, 4 env
/// sensors, 20 devices.
pub const UBIKAMPUS_DEMO: &str = include_str!("../../scenarios/ubikampus-demo.json");

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub path_loss_exponent: f64,
    pub noise_sigma_db: f64,
    pub detection_threshold_dbm: f64,
    pub rsrp_offset_db: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            path_loss_exponent: 2.0,
            noise_sigma_db: 2.0,
            detection_threshold_dbm: -100.0,
            rsrp_offset_db: 30.0,
        }
    }
}

/// Static per-kind attributes of a signal source. The tag doubles as the
/// source's kind, so an environmental "source" cannot be expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceAttributes {
    Cellular {
        network_type: String,
        frequency_mhz: f64,
    },
    #[serde(rename = "wifi")]
    WiFi {
        ssid: String,
        channel: u32,
        frequency_mhz: f64,
    },
    Bluetooth {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        device_name: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Cell id, or the BSSID / peer address for Wi-Fi and Bluetooth.
    pub source_id: String,
    pub position: Position,
    /// Received power at 1 m.
    pub tx_power_dbm: f64,
    #[serde(flatten)]
    pub attributes: SourceAttributes,
}

impl SourceSpec {
    pub fn kind(&self) -> SignalKind {
        match self.attributes {
            SourceAttributes::Cellular { .. } => SignalKind::Cellular,
            SourceAttributes::WiFi { .. } => SignalKind::WiFi,
            SourceAttributes::Bluetooth { .. } => SignalKind::Bluetooth,
        }
    }
}

fn default_app_version() -> String {
    "1.0.0".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub device_id: String,
    pub model_name: String,
    #[serde(default = "default_app_version")]
    pub app_version: String,
    pub position: Position,
    pub capabilities: BTreeSet<SignalKind>,
    /// Reporting period per capability.
    pub report_period_ms: BTreeMap<SignalKind, u64>,
    pub active_interface: SignalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sigma: f64,
}

/// Occupancy rate (expected motion events per window) from `from_ms` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyPhase {
    pub from_ms: u64,
    pub rate: f64,
}

fn default_env_model() -> String {
    "EnvSim".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSensorSpec {
    pub sensor_id: String,
    #[serde(default = "default_env_model")]
    pub model_name: String,
    pub position: Position,
    pub report_period_ms: u64,
    pub pm25_ugm3: Gaussian,
    pub co2_ppm: Gaussian,
    #[serde(default)]
    pub occupancy: Vec<OccupancyPhase>,
}

impl EnvSensorSpec {
    pub fn occupancy_rate(&self, t_ms: u64) -> f64 {
        self.occupancy
            .iter()
            .filter(|p| p.from_ms <= t_ms)
            .max_by_key(|p| p.from_ms)
            .map_or(0.0, |p| p.rate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ScenarioEvent {
    Join { at_ms: u64, device_id: String },
    Leave { at_ms: u64, device_id: String },
}

impl ScenarioEvent {
    pub fn at_ms(&self) -> u64 {
        match self {
            ScenarioEvent::Join { at_ms, .. } | ScenarioEvent::Leave { at_ms, .. } => *at_ms,
        }
    }

    pub fn device_id(&self) -> &str {
        match self {
            ScenarioEvent::Join { device_id, .. } | ScenarioEvent::Leave { device_id, .. } => {
                device_id
            }
        }
    }
}

/// Dirty-data injection. Scenarios with any non-zero rate are flagged as
/// faulty: their output is not guaranteed to pass validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FaultSpec {
    pub out_of_bounds_prob: f64,
    pub duplicate_prob: f64,
    pub stale_prob: f64,
    pub stale_lag_ms: u64,
}

impl FaultSpec {
    pub fn is_active(&self) -> bool {
        self.out_of_bounds_prob > 0.0 || self.duplicate_prob > 0.0 || self.stale_prob > 0.0
    }
}

fn default_epoch() -> u64 {
    1_700_000_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub rng_seed: u64,
    pub duration_s: u64,
    pub tick_interval_ms: u64,
    /// Wall-clock instant that simulation time 0 maps to.
    #[serde(default = "default_epoch")]
    pub epoch_ms: u64,
    #[serde(default)]
    pub radio: RadioParams,
    pub devices: Vec<DeviceSpec>,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub env_sensors: Vec<EnvSensorSpec>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub faults: FaultSpec,
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// A path, or the name of a built-in scenario (`ubikampus-demo`).
    pub fn load(path_or_name: &str) -> Result<Self, ScenarioError> {
        if path_or_name == "ubikampus-demo" {
            return Self::from_json(UBIKAMPUS_DEMO);
        }
        let text = std::fs::read_to_string(Path::new(path_or_name)).map_err(|source| {
            ScenarioError::Io {
                path: path_or_name.to_string(),
                source,
            }
        })?;
        Self::from_json(&text)
    }

    pub fn ubikampus_demo() -> Self {
        Self::from_json(UBIKAMPUS_DEMO).expect("bundled scenario is valid")
    }

    pub fn duration_ms(&self) -> u64 {
        self.duration_s * 1000
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.tick_interval_ms == 0 {
            return bad("tick_interval_ms must be positive".into());
        }
        let mut ids = HashSet::new();
        for d in &self.devices {
            if d.device_id.is_empty() || d.device_id.contains(['/', '+', '#']) {
                return bad(format!("device id `{}` is not topic-safe", d.device_id));
            }
            if !ids.insert(d.device_id.as_str()) {
                return bad(format!("duplicate device id `{}`", d.device_id));
            }
            if d.capabilities.is_empty() || d.capabilities.contains(&SignalKind::Environment) {
                return bad(format!(
                    "device `{}` needs radio capabilities only",
                    d.device_id
                ));
            }
            if !d.capabilities.contains(&d.active_interface) {
                return bad(format!(
                    "device `{}` active interface not in capabilities",
                    d.device_id
                ));
            }
            for k in &d.capabilities {
                match d.report_period_ms.get(k) {
                    Some(p) if *p > 0 => {}
                    _ => {
                        return bad(format!(
                            "device `{}` needs a positive report period for {k}",
                            d.device_id
                        ))
                    }
                }
            }
        }
        for s in &self.env_sensors {
            if s.sensor_id.is_empty() || s.sensor_id.contains(['/', '+', '#']) {
                return bad(format!("sensor id `{}` is not topic-safe", s.sensor_id));
            }
            if !ids.insert(s.sensor_id.as_str()) {
                return bad(format!("duplicate device/sensor id `{}`", s.sensor_id));
            }
            if s.report_period_ms == 0 {
                return bad(format!(
                    "sensor `{}` needs a positive report period",
                    s.sensor_id
                ));
            }
        }
        let mut sources = HashSet::new();
        for s in &self.sources {
            if s.source_id.is_empty() || !sources.insert(s.source_id.as_str()) {
                return bad(format!("duplicate or empty source id `{}`", s.source_id));
            }
            match &s.attributes {
                SourceAttributes::Cellular {
                    network_type,
                    frequency_mhz,
                } => {
                    if !NETWORK_TYPES.contains(&network_type.to_ascii_uppercase().as_str())
                        || *frequency_mhz <= 0.0
                    {
                        return bad(format!("cell `{}` has invalid attributes", s.source_id));
                    }
                }
                SourceAttributes::WiFi {
                    channel,
                    frequency_mhz,
                    ..
                } => {
                    if !is_mac_address(&s.source_id) || *channel == 0 || *frequency_mhz <= 0.0 {
                        return bad(format!(
                            "access point `{}` has invalid attributes",
                            s.source_id
                        ));
                    }
                }
                SourceAttributes::Bluetooth { .. } => {
                    if !is_mac_address(&s.source_id) {
                        return bad(format!(
                            "beacon `{}` must be keyed by its address",
                            s.source_id
                        ));
                    }
                }
            }
        }
        for e in &self.events {
            if !self.devices.iter().any(|d| d.device_id == e.device_id()) {
                return bad(format!("event for unknown device `{}`", e.device_id()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_demo_has_expected_population() {
        let s = ScenarioSpec::ubikampus_demo();
        let count = |k| s.sources.iter().filter(|x| x.kind() == k).count();
        assert_eq!(count(SignalKind::Cellular), 3);
        assert_eq!(count(SignalKind::WiFi), 6);
        assert_eq!(count(SignalKind::Bluetooth), 8);
        assert_eq!(s.env_sensors.len(), 4);
        assert_eq!(s.devices.len(), 20);
        assert!(!s.faults.is_active());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = ScenarioSpec::load("/nonexistent/demo.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/demo.json"));
    }

    #[test]
    fn rejects_inconsistent_devices() {
        let mut s = ScenarioSpec::ubikampus_demo();
        s.devices[0].active_interface = SignalKind::Environment;
        assert!(s.validate().is_err());
        let mut s = ScenarioSpec::ubikampus_demo();
        s.devices[1].device_id = s.devices[0].device_id.clone();
        assert!(s.validate().is_err());
        let mut s = ScenarioSpec::ubikampus_demo();
        s.tick_interval_ms = 0;
        assert!(s.validate().is_err());
    }
}
