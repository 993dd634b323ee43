//! Domain types for multi-RAT signal readings and their wire schema.
//!
//! A [`SignalReading`] is the unit that flows over the event bus: one
//! timestamped observation of a cellular, Wi-Fi or Bluetooth source, or one
//! environmental sensor sample, as seen by one device.

mod codec;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use codec::{decode_reading, encode_reading, SchemaError};
pub use validate::{
    normalize_reading, validate_reading, Interval, ValidationBounds, ValidationVerdict,
};

/// Radio access technology (or environmental sensing) a reading belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Cellular,
    #[serde(rename = "wifi")]
    WiFi,
    Bluetooth,
    Environment,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [
        SignalKind::Cellular,
        SignalKind::WiFi,
        SignalKind::Bluetooth,
        SignalKind::Environment,
    ];

    /// Radio kinds only, in lexicographic order of their wire names.
    pub const RADIOS: [SignalKind; 3] = [
        SignalKind::Bluetooth,
        SignalKind::Cellular,
        SignalKind::WiFi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::Cellular => "cellular",
            SignalKind::WiFi => "wifi",
            SignalKind::Bluetooth => "bluetooth",
            SignalKind::Environment => "environment",
        }
    }

    pub fn is_radio(self) -> bool {
        self != SignalKind::Environment
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown signal kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for SignalKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cellular" => Ok(SignalKind::Cellular),
            "wifi" => Ok(SignalKind::WiFi),
            "bluetooth" => Ok(SignalKind::Bluetooth),
            "environment" => Ok(SignalKind::Environment),
            other => Err(UnknownKind(other.to_string())),
        }
    }
}

/// Identity and static description of the reporting end-device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDescriptor {
    pub device_id: String,
    pub model_name: String,
    pub capabilities: BTreeSet<SignalKind>,
    pub app_version: String,
    /// Interface the device currently sends its own traffic over, when known.
    pub active_interface: Option<SignalKind>,
}

/// Cellular network types accepted on the wire (compared case-insensitively).
pub const NETWORK_TYPES: [&str; 4] = ["LTE", "NR", "UMTS", "GSM"];

#[derive(Debug, Clone, PartialEq)]
pub struct CellularMetrics {
    pub network_type: String,
    pub frequency_mhz: f64,
    pub rssi_dbm: f64,
    /// Only reported for LTE and NR cells.
    pub rsrp_dbm: Option<f64>,
    pub rsrq_db: Option<f64>,
    pub cell_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WiFiMetrics {
    /// Empty for hidden networks.
    pub ssid: String,
    pub bssid: String,
    pub frequency_mhz: f64,
    pub rssi_dbm: f64,
    pub channel: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BluetoothMetrics {
    pub peer_address: String,
    pub rssi_dbm: f64,
    pub device_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMetrics {
    pub pm25_ugm3: f64,
    pub co2_ppm: f64,
    /// Motion events counted during the sampling window.
    pub motion_count: u64,
}

/// Kind-specific metric record. The variant determines the reading's kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Metrics {
    Cellular(CellularMetrics),
    WiFi(WiFiMetrics),
    Bluetooth(BluetoothMetrics),
    Environment(EnvironmentMetrics),
}

impl Metrics {
    pub fn kind(&self) -> SignalKind {
        match self {
            Metrics::Cellular(_) => SignalKind::Cellular,
            Metrics::WiFi(_) => SignalKind::WiFi,
            Metrics::Bluetooth(_) => SignalKind::Bluetooth,
            Metrics::Environment(_) => SignalKind::Environment,
        }
    }

    /// Signal-level metrics present on this record, in validation order.
    ///
    /// Cellular: rssi_dbm, rsrp_dbm, rsrq_db. Wi-Fi and Bluetooth: rssi_dbm.
    /// Environment: pm25_ugm3, co2_ppm, motion_count. Static attributes such as
    /// frequency or channel are not listed.
    pub fn signal_values(&self) -> Vec<(&'static str, f64)> {
        match self {
            Metrics::Cellular(m) => {
                let mut v = vec![("rssi_dbm", m.rssi_dbm)];
                if let Some(x) = m.rsrp_dbm {
                    v.push(("rsrp_dbm", x));
                }
                if let Some(x) = m.rsrq_db {
                    v.push(("rsrq_db", x));
                }
                v
            }
            Metrics::WiFi(m) => vec![("rssi_dbm", m.rssi_dbm)],
            Metrics::Bluetooth(m) => vec![("rssi_dbm", m.rssi_dbm)],
            Metrics::Environment(m) => vec![
                ("pm25_ugm3", m.pm25_ugm3),
                ("co2_ppm", m.co2_ppm),
                ("motion_count", m.motion_count as f64),
            ],
        }
    }

    pub fn rssi_dbm(&self) -> Option<f64> {
        match self {
            Metrics::Cellular(m) => Some(m.rssi_dbm),
            Metrics::WiFi(m) => Some(m.rssi_dbm),
            Metrics::Bluetooth(m) => Some(m.rssi_dbm),
            Metrics::Environment(_) => None,
        }
    }
}

/// One timestamped observation from one device.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalReading {
    pub device: DeviceDescriptor,
    pub timestamp_ms: u64,
    /// Cell id, BSSID, peer address or sensor id.
    pub source_id: String,
    pub metrics: Metrics,
    /// Set by the signal handler on readings it has cleaned and republished.
    pub curated: bool,
    /// Smoothed variants of signal metrics, keyed by the base metric name.
    pub smoothed: BTreeMap<String, f64>,
}

impl SignalReading {
    pub fn kind(&self) -> SignalKind {
        self.metrics.kind()
    }

    /// Smoothed value of `metric` if present, else the raw value.
    pub fn smoothed_or_raw(&self, metric: &str) -> Option<f64> {
        self.smoothed.get(metric).copied().or_else(|| {
            self.metrics
                .signal_values()
                .into_iter()
                .find(|(name, _)| *name == metric)
                .map(|(_, v)| v)
        })
    }
}

/// True for six colon-separated two-digit hex octets, either case.
pub fn is_mac_address(s: &str) -> bool {
    let parts: Vec<&str> = s.split(':').collect();
    parts.len() == 6
        && parts
            .iter()
            .all(|p| p.len() == 2 && p.chars().all(|c| c.is_ascii_hexdigit()))
}
