//! Twin store and twin instance controller.
//!
//! The store holds models, twin instances, `detects` relationships from
//! devices to signal sources, and bounded KPI series. Identifiers are derived
//! from content (`device:<id>`, `cell:<id>`, `wifi-ap:<bssid>`,
//! `bt-peer:<address>`, `env-sensor:<id>`, `detects:<device twin>-><source
//! twin>`), so replaying a stream always rebuilds the same graph.
//!
//! An instance's `last_updated` is the timestamp of the reading that created
//! it or last changed its properties; liveness of devices and sources is
//! carried by their relationships. Every store mutation is reported exactly
//! by the returned [`ChangeSet`].

mod auth;
mod controller;
mod kpi;
mod snapshot;
mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::signal::SignalKind;

pub use auth::{Authenticator, Session};
pub use controller::{
    ControllerConfig, ControllerNode, ControllerStats, EvictionClock, TwinController,
};
pub use kpi::{KpiKey, KpiSeries, Sample};
pub use snapshot::{SNAPSHOT_EXTENSION, SNAPSHOT_FORMAT_VERSION};
pub use store::{GraphFilter, GraphView, TwinStore};

pub const DETECTS: &str = "detects";
pub const DEFAULT_KPI_CAPACITY: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TwinError {
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("model `{name}` exists with an incompatible schema")]
    SchemaConflict { name: String },
    #[error("store corruption: {0}")]
    StoreCorruption(String),
    #[error("unknown twin `{0}`")]
    UnknownTwin(String),
    #[error("unknown series `{0}`/`{1}`")]
    UnknownSeries(String, String),
    #[error("invalid range: from {from} > to {to}")]
    InvalidRange { from: u64, to: u64 },
    #[error("reading is not curated")]
    NotCurated,
    #[error("snapshot format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("snapshot i/o: {0}")]
    Io(String),
    #[error("bus transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyType {
    String,
    Number,
    Integer,
    StringList,
}

impl PropertyType {
    /// Null stands for an absent optional property.
    pub fn admits(self, v: &Value) -> bool {
        match (self, v) {
            (_, Value::Null) => true,
            (PropertyType::String, Value::String(_)) => true,
            (PropertyType::Number, Value::Number(_)) => true,
            (PropertyType::Integer, Value::Number(n)) => n.is_i64() || n.is_u64(),
            (PropertyType::StringList, Value::Array(items)) => items.iter().all(Value::is_string),
            _ => false,
        }
    }
}

pub type PropertySchema = BTreeMap<String, PropertyType>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinModel {
    pub model_id: String,
    pub name: String,
    pub schema: PropertySchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinInstance {
    pub twin_id: String,
    pub model_id: String,
    pub external_id: String,
    pub properties: BTreeMap<String, Value>,
    pub last_updated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinRelationship {
    pub rel_id: String,
    pub source_twin: String,
    pub target_twin: String,
    pub kind: String,
    pub signal_strength_dbm: f64,
    pub last_updated: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChangeSet {
    pub added_instances: Vec<String>,
    pub updated_instances: Vec<String>,
    pub removed_instances: Vec<String>,
    pub added_relationships: Vec<String>,
    pub updated_relationships: Vec<String>,
    pub removed_relationships: Vec<String>,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.added_instances.is_empty()
            && self.updated_instances.is_empty()
            && self.removed_instances.is_empty()
            && self.added_relationships.is_empty()
            && self.updated_relationships.is_empty()
            && self.removed_relationships.is_empty()
    }

    pub fn to_canonical_json(&self) -> String {
        crate::json::to_canonical(self)
    }
}

pub fn model_id_for(name: &str) -> String {
    format!("model:{name}")
}

pub fn device_twin_id(device_id: &str) -> String {
    format!("device:{device_id}")
}

/// Archetype model name for a signal source of `kind`.
pub fn source_archetype(kind: SignalKind) -> &'static str {
    match kind {
        SignalKind::Cellular => "cell",
        SignalKind::WiFi => "wifi-ap",
        SignalKind::Bluetooth => "bt-peer",
        SignalKind::Environment => "env-sensor",
    }
}

pub fn source_twin_id(kind: SignalKind, source_id: &str) -> String {
    format!("{}:{source_id}", source_archetype(kind))
}

pub fn relationship_id(source_twin: &str, target_twin: &str) -> String {
    format!("{DETECTS}:{source_twin}->{target_twin}")
}

/// Kind of a source twin, recovered from its id prefix.
pub fn kind_of_twin(twin_id: &str) -> Option<SignalKind> {
    let prefix = twin_id.split_once(':')?.0;
    SignalKind::ALL
        .into_iter()
        .find(|k| source_archetype(*k) == prefix)
}

fn schema(entries: &[(&str, PropertyType)]) -> PropertySchema {
    entries.iter().map(|(k, t)| (k.to_string(), *t)).collect()
}

pub fn device_schema() -> PropertySchema {
    schema(&[
        ("active_interface", PropertyType::String),
        ("app_version", PropertyType::String),
        ("capabilities", PropertyType::StringList),
    ])
}

pub fn source_schema(kind: SignalKind) -> PropertySchema {
    use PropertyType::*;
    match kind {
        SignalKind::Cellular => schema(&[
            ("cell_id", String),
            ("frequency_mhz", Number),
            ("network_type", String),
        ]),
        SignalKind::WiFi => schema(&[
            ("bssid", String),
            ("channel", Integer),
            ("frequency_mhz", Number),
            ("ssid", String),
        ]),
        SignalKind::Bluetooth => schema(&[("device_name", String), ("peer_address", String)]),
        SignalKind::Environment => schema(&[
            ("co2_ppm", Number),
            ("model_name", String),
            ("motion_count", Integer),
            ("pm25_ugm3", Number),
        ]),
    }
}
