//! JSON wire codec for [`SignalReading`].
//!
//! Layout (keys sorted in the canonical encoding):
//!
//! ```json
//! {"curated":true,
//!  "device":{"active_interface":"wifi","app_version":"1.4.0",
//!            "capabilities":["cellular","wifi"],"id":"d1","model":"PixelSim"},
//!  "kind":"cellular",
//!  "metrics":{"cell_id":"c1","frequency_mhz":1800,"network_type":"LTE",
//!             "rsrp_dbm":-105,"rssi_dbm":-75,"rssi_dbm_smoothed":-75},
//!  "source_id":"c1","timestamp_ms":1700000000000}
//! ```
//!
//! `curated` and `*_smoothed` keys appear only on curated readings. Optional
//! metrics are omitted rather than written as null.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use super::{
    is_mac_address, BluetoothMetrics, CellularMetrics, DeviceDescriptor, EnvironmentMetrics,
    Metrics, SignalKind, SignalReading, WiFiMetrics, NETWORK_TYPES,
};
use crate::json;

/// Decode failure at a dotted path such as `metrics.rssi_dbm`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("schema error at `{path}`: {reason}")]
pub struct SchemaError {
    pub path: String,
    pub reason: String,
}

impl SchemaError {
    fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        SchemaError {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

const SMOOTHED_SUFFIX: &str = "_smoothed";

struct Obj<'a> {
    map: &'a Map<String, Value>,
    prefix: &'a str,
}

impl<'a> Obj<'a> {
    fn path(&self, key: &str) -> String {
        if self.prefix.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.prefix, key)
        }
    }

    fn required(&self, key: &str) -> Result<&'a Value, SchemaError> {
        self.map
            .get(key)
            .ok_or_else(|| SchemaError::new(self.path(key), "missing required field"))
    }

    fn string(&self, key: &str) -> Result<&'a str, SchemaError> {
        self.required(key)?
            .as_str()
            .ok_or_else(|| SchemaError::new(self.path(key), "expected string"))
    }

    fn non_empty_string(&self, key: &str) -> Result<&'a str, SchemaError> {
        let s = self.string(key)?;
        if s.is_empty() {
            return Err(SchemaError::new(self.path(key), "must not be empty"));
        }
        Ok(s)
    }

    fn opt_string(&self, key: &str) -> Result<Option<&'a str>, SchemaError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| SchemaError::new(self.path(key), "expected string")),
        }
    }

    fn number(&self, key: &str) -> Result<f64, SchemaError> {
        self.required(key)?
            .as_f64()
            .ok_or_else(|| SchemaError::new(self.path(key), "expected number"))
    }

    fn opt_number(&self, key: &str) -> Result<Option<f64>, SchemaError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| SchemaError::new(self.path(key), "expected number")),
        }
    }

    fn unsigned(&self, key: &str) -> Result<u64, SchemaError> {
        self.required(key)?
            .as_u64()
            .ok_or_else(|| SchemaError::new(self.path(key), "expected non-negative integer"))
    }

    fn object(&self, key: &str) -> Result<&'a Map<String, Value>, SchemaError> {
        self.required(key)?
            .as_object()
            .ok_or_else(|| SchemaError::new(self.path(key), "expected object"))
    }
}

fn parse_kind(value: &Value, path: &str) -> Result<SignalKind, SchemaError> {
    let s = value
        .as_str()
        .ok_or_else(|| SchemaError::new(path, "expected string"))?;
    s.parse()
        .map_err(|_| SchemaError::new(path, format!("unknown signal kind `{s}`")))
}

fn positive(path: String, x: f64) -> Result<f64, SchemaError> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(SchemaError::new(path, "must be positive"))
    }
}

fn non_negative(path: String, x: f64) -> Result<f64, SchemaError> {
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(SchemaError::new(path, "must not be negative"))
    }
}

fn decode_device(root: &Obj<'_>) -> Result<DeviceDescriptor, SchemaError> {
    let map = root.object("device")?;
    let dev = Obj {
        map,
        prefix: "device",
    };
    let device_id = dev.non_empty_string("id")?.to_string();
    let model_name = dev.non_empty_string("model")?.to_string();
    let caps = dev
        .required("capabilities")?
        .as_array()
        .ok_or_else(|| SchemaError::new("device.capabilities", "expected array"))?;
    let mut capabilities = BTreeSet::new();
    for (i, c) in caps.iter().enumerate() {
        capabilities.insert(parse_kind(c, &format!("device.capabilities[{i}]"))?);
    }
    if capabilities.is_empty() {
        return Err(SchemaError::new("device.capabilities", "must not be empty"));
    }
    let app_version = dev.string("app_version")?.to_string();
    let active_interface = match map.get("active_interface") {
        None => None,
        Some(v) => Some(parse_kind(v, "device.active_interface")?),
    };
    Ok(DeviceDescriptor {
        device_id,
        model_name,
        capabilities,
        app_version,
        active_interface,
    })
}

fn decode_metrics(kind: SignalKind, m: &Obj<'_>) -> Result<Metrics, SchemaError> {
    Ok(match kind {
        SignalKind::Cellular => {
            let network_type = m.string("network_type")?;
            let upper = network_type.to_ascii_uppercase();
            if !NETWORK_TYPES.contains(&upper.as_str()) {
                return Err(SchemaError::new(
                    m.path("network_type"),
                    format!("unknown network type `{network_type}`"),
                ));
            }
            let rsrp_dbm = m.opt_number("rsrp_dbm")?;
            if rsrp_dbm.is_some() && upper != "LTE" && upper != "NR" {
                return Err(SchemaError::new(
                    m.path("rsrp_dbm"),
                    "only reported for LTE and NR",
                ));
            }
            Metrics::Cellular(CellularMetrics {
                network_type: network_type.to_string(),
                frequency_mhz: positive(m.path("frequency_mhz"), m.number("frequency_mhz")?)?,
                rssi_dbm: m.number("rssi_dbm")?,
                rsrp_dbm,
                rsrq_db: m.opt_number("rsrq_db")?,
                cell_id: m.string("cell_id")?.to_string(),
            })
        }
        SignalKind::WiFi => {
            let bssid = m.string("bssid")?;
            if !is_mac_address(bssid) {
                return Err(SchemaError::new(
                    m.path("bssid"),
                    "expected 6-octet address",
                ));
            }
            let channel = m.unsigned("channel")?;
            if channel == 0 || channel > u32::MAX as u64 {
                return Err(SchemaError::new(
                    m.path("channel"),
                    "must be a positive integer",
                ));
            }
            Metrics::WiFi(WiFiMetrics {
                ssid: m.string("ssid")?.to_string(),
                bssid: bssid.to_string(),
                frequency_mhz: positive(m.path("frequency_mhz"), m.number("frequency_mhz")?)?,
                rssi_dbm: m.number("rssi_dbm")?,
                channel: channel as u32,
            })
        }
        SignalKind::Bluetooth => {
            let peer = m.string("peer_address")?;
            if !is_mac_address(peer) {
                return Err(SchemaError::new(
                    m.path("peer_address"),
                    "expected 6-octet address",
                ));
            }
            Metrics::Bluetooth(BluetoothMetrics {
                peer_address: peer.to_string(),
                rssi_dbm: m.number("rssi_dbm")?,
                device_name: m.opt_string("device_name")?.map(str::to_string),
            })
        }
        SignalKind::Environment => Metrics::Environment(EnvironmentMetrics {
            pm25_ugm3: non_negative(m.path("pm25_ugm3"), m.number("pm25_ugm3")?)?,
            co2_ppm: non_negative(m.path("co2_ppm"), m.number("co2_ppm")?)?,
            motion_count: m.unsigned("motion_count")?,
        }),
    })
}

/// Parses a reading document. Unknown keys are ignored; the first missing,
/// mistyped or invariant-violating field is reported.
pub fn decode_reading(document: &str) -> Result<SignalReading, SchemaError> {
    let value: Value = serde_json::from_str(document)
        .map_err(|e| SchemaError::new("", format!("invalid JSON: {e}")))?;
    let map = value
        .as_object()
        .ok_or_else(|| SchemaError::new("", "expected object"))?;
    let root = Obj { map, prefix: "" };

    let device = decode_device(&root)?;
    let kind = parse_kind(root.required("kind")?, "kind")?;
    let timestamp_ms = root.unsigned("timestamp_ms")?;
    if timestamp_ms == 0 {
        return Err(SchemaError::new("timestamp_ms", "must be positive"));
    }
    let source_id = root.non_empty_string("source_id")?.to_string();
    let metrics_map = root.object("metrics")?;
    let m = Obj {
        map: metrics_map,
        prefix: "metrics",
    };
    let metrics = decode_metrics(kind, &m)?;

    let curated = match map.get("curated") {
        None => false,
        Some(v) => v
            .as_bool()
            .ok_or_else(|| SchemaError::new("curated", "expected boolean"))?,
    };

    let mut smoothed = BTreeMap::new();
    for (name, _) in metrics.signal_values() {
        let key = format!("{name}{SMOOTHED_SUFFIX}");
        if let Some(v) = m.opt_number(&key)? {
            smoothed.insert(name.to_string(), v);
        }
    }

    Ok(SignalReading {
        device,
        timestamp_ms,
        source_id,
        metrics,
        curated,
        smoothed,
    })
}

fn metrics_value(reading: &SignalReading) -> Value {
    let mut out = Map::new();
    let mut put = |k: &str, v: Value| {
        out.insert(k.to_string(), v);
    };
    match &reading.metrics {
        Metrics::Cellular(c) => {
            put("network_type", Value::from(c.network_type.clone()));
            put("frequency_mhz", json::number(c.frequency_mhz));
            put("rssi_dbm", json::number(c.rssi_dbm));
            if let Some(x) = c.rsrp_dbm {
                put("rsrp_dbm", json::number(x));
            }
            if let Some(x) = c.rsrq_db {
                put("rsrq_db", json::number(x));
            }
            put("cell_id", Value::from(c.cell_id.clone()));
        }
        Metrics::WiFi(w) => {
            put("ssid", Value::from(w.ssid.clone()));
            put("bssid", Value::from(w.bssid.clone()));
            put("frequency_mhz", json::number(w.frequency_mhz));
            put("rssi_dbm", json::number(w.rssi_dbm));
            put("channel", Value::from(w.channel));
        }
        Metrics::Bluetooth(b) => {
            put("peer_address", Value::from(b.peer_address.clone()));
            put("rssi_dbm", json::number(b.rssi_dbm));
            if let Some(name) = &b.device_name {
                put("device_name", Value::from(name.clone()));
            }
        }
        Metrics::Environment(e) => {
            put("pm25_ugm3", json::number(e.pm25_ugm3));
            put("co2_ppm", json::number(e.co2_ppm));
            put("motion_count", Value::from(e.motion_count));
        }
    }
    for (name, v) in &reading.smoothed {
        put(&format!("{name}{SMOOTHED_SUFFIX}"), json::number(*v));
    }
    Value::Object(out)
}

/// Wire value of a reading, before rendering.
pub(crate) fn reading_value(reading: &SignalReading) -> Value {
    let d = &reading.device;
    let mut device = Map::new();
    device.insert("id".into(), Value::from(d.device_id.clone()));
    device.insert("model".into(), Value::from(d.model_name.clone()));
    device.insert(
        "capabilities".into(),
        Value::Array(
            d.capabilities
                .iter()
                .map(|k| Value::from(k.as_str()))
                .collect(),
        ),
    );
    device.insert("app_version".into(), Value::from(d.app_version.clone()));
    if let Some(k) = d.active_interface {
        device.insert("active_interface".into(), Value::from(k.as_str()));
    }

    let mut root = Map::new();
    root.insert("device".into(), Value::Object(device));
    root.insert("kind".into(), Value::from(reading.kind().as_str()));
    root.insert("timestamp_ms".into(), Value::from(reading.timestamp_ms));
    root.insert("source_id".into(), Value::from(reading.source_id.clone()));
    root.insert("metrics".into(), metrics_value(reading));
    if reading.curated {
        root.insert("curated".into(), Value::Bool(true));
    }
    Value::Object(root)
}

/// Canonical encoding: sorted keys, no whitespace, minimal numbers.
pub fn encode_reading(reading: &SignalReading) -> String {
    json::to_canonical_string(&reading_value(reading))
}
