use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{AnalyticsConfig, AnalyticsError, MessageProfile};
use crate::signal::SignalKind;
use crate::twin::{kind_of_twin, KpiKey, Sample, TwinStore, DETECTS};

/// A series is addressed the same way as in the twin store.
pub type SeriesRef = KpiKey;

/// Inclusive time window in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub from: u64,
    pub to: u64,
}

impl Window {
    pub fn all() -> Self {
        Window {
            from: 0,
            to: u64::MAX,
        }
    }
}

/// A live `detects` relationship as seen by the prescriptive stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub rel_id: String,
    pub device_id: String,
    pub source_twin: String,
    pub kind: SignalKind,
    pub signal_strength_dbm: f64,
    pub last_updated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub device_id: String,
    pub twin_id: String,
    pub active_interface: Option<SignalKind>,
    pub capabilities: BTreeSet<SignalKind>,
}

/// Immutable input of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticsContext {
    /// `None` stands for the whole graph.
    pub scope: Option<BTreeSet<String>>,
    pub window: Window,
    pub series: BTreeMap<SeriesRef, Vec<Sample>>,
    pub links: Vec<Link>,
    pub devices: BTreeMap<String, DeviceInfo>,
    pub config: AnalyticsConfig,
    pub profile: MessageProfile,
}

impl AnalyticsContext {
    /// Context over bare series, with no devices to prescribe for.
    pub fn from_series(series: BTreeMap<SeriesRef, Vec<Sample>>, config: AnalyticsConfig) -> Self {
        let from = series
            .values()
            .filter_map(|s| s.first())
            .map(|s| s.timestamp_ms)
            .min()
            .unwrap_or(0);
        let to = series
            .values()
            .filter_map(|s| s.last())
            .map(|s| s.timestamp_ms)
            .max()
            .unwrap_or(0);
        AnalyticsContext {
            scope: None,
            window: Window { from, to },
            series,
            links: Vec::new(),
            devices: BTreeMap::new(),
            config,
            profile: MessageProfile::default(),
        }
    }

    /// Pulls the scoped part of the store. A scope names twins; the
    /// relationships touching them and their raw KPI series are included,
    /// along with every environmental sensor series.
    pub fn from_store(
        store: &TwinStore,
        scope: Option<&[String]>,
        window: Window,
        config: AnalyticsConfig,
        profile: MessageProfile,
    ) -> Result<Self, AnalyticsError> {
        if window.from > window.to {
            return Err(AnalyticsError::InvalidWindow {
                from: window.from,
                to: window.to,
            });
        }
        let scope: Option<BTreeSet<String>> = scope.map(|ids| ids.iter().cloned().collect());
        if let Some(ids) = &scope {
            if let Some(unknown) = ids.iter().find(|id| store.instance(id).is_none()) {
                return Err(AnalyticsError::UnknownTwin(unknown.clone()));
            }
        }
        let in_scope = |id: &str| scope.as_ref().is_none_or(|s| s.contains(id));

        let mut devices = BTreeMap::new();
        for inst in store
            .instances()
            .filter(|i| i.twin_id.starts_with("device:") && in_scope(&i.twin_id))
        {
            let active_interface = inst
                .properties
                .get("active_interface")
                .and_then(Value::as_str)
                .and_then(|s| s.parse().ok());
            let capabilities = inst
                .properties
                .get("capabilities")
                .and_then(Value::as_array)
                .map(|caps| {
                    caps.iter()
                        .filter_map(|c| c.as_str()?.parse().ok())
                        .collect()
                })
                .unwrap_or_default();
            devices.insert(
                inst.external_id.clone(),
                DeviceInfo {
                    device_id: inst.external_id.clone(),
                    twin_id: inst.twin_id.clone(),
                    active_interface,
                    capabilities,
                },
            );
        }

        let mut links = Vec::new();
        for rel in store.relationships() {
            if rel.kind != DETECTS || !(in_scope(&rel.source_twin) || in_scope(&rel.target_twin)) {
                continue;
            }
            let (Some(kind), Some(device)) = (
                kind_of_twin(&rel.target_twin),
                store.instance(&rel.source_twin),
            ) else {
                continue;
            };
            links.push(Link {
                rel_id: rel.rel_id.clone(),
                device_id: device.external_id.clone(),
                source_twin: rel.target_twin.clone(),
                kind,
                signal_strength_dbm: rel.signal_strength_dbm,
                last_updated: rel.last_updated,
            });
        }

        let mut entities: BTreeSet<&str> = links.iter().map(|l| l.rel_id.as_str()).collect();
        for inst in store.instances() {
            if kind_of_twin(&inst.twin_id) == Some(SignalKind::Environment) {
                entities.insert(&inst.twin_id);
            }
        }
        let mut series = BTreeMap::new();
        for key in store.series_keys() {
            if !entities.contains(key.entity.as_str()) || key.metric.ends_with("_smoothed") {
                continue;
            }
            let samples = store
                .series(key)
                .map(|s| s.range(window.from, window.to))
                .unwrap_or_default();
            if !samples.is_empty() {
                series.insert(key.clone(), samples);
            }
        }
        if series.is_empty() {
            return Err(AnalyticsError::EmptyScope);
        }
        Ok(AnalyticsContext {
            scope,
            window,
            series,
            links,
            devices,
            config,
            profile,
        })
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.window.from > self.window.to {
            return Err(AnalyticsError::InvalidWindow {
                from: self.window.from,
                to: self.window.to,
            });
        }
        if self.series.is_empty() {
            return Err(AnalyticsError::EmptyScope);
        }
        for (key, samples) in &self.series {
            let ordered = samples
                .windows(2)
                .all(|w| w[0].timestamp_ms <= w[1].timestamp_ms);
            let finite = samples.iter().all(|s| s.value.is_finite());
            if samples.is_empty() || !ordered || !finite {
                return Err(AnalyticsError::InvalidContext(format!(
                    "series {}/{} must be non-empty, ordered and finite",
                    key.entity, key.metric
                )));
            }
        }
        self.config.validate()?;
        self.profile.validate()
    }

    pub fn links_of<'a>(&'a self, device_id: &'a str) -> impl Iterator<Item = &'a Link> + 'a {
        self.links.iter().filter(move |l| l.device_id == device_id)
    }
}
