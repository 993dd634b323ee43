use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    device_schema, device_twin_id, model_id_for, relationship_id, source_archetype, source_schema,
    source_twin_id, ChangeSet, KpiKey, KpiSeries, PropertySchema, Sample, TwinError, TwinInstance,
    TwinModel, TwinRelationship, DEFAULT_KPI_CAPACITY, DETECTS,
};
use crate::json::number;
use crate::signal::{Metrics, SignalKind, SignalReading};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphFilter {
    All,
    Model(String),
    /// Ego graph: the twin, its relationships and their other endpoints.
    Twin(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GraphView {
    pub models: Vec<TwinModel>,
    pub instances: Vec<TwinInstance>,
    pub relationships: Vec<TwinRelationship>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinStore {
    pub(super) models: BTreeMap<String, TwinModel>,
    pub(super) instances: BTreeMap<String, TwinInstance>,
    pub(super) relationships: BTreeMap<String, TwinRelationship>,
    pub(super) kpis: BTreeMap<KpiKey, KpiSeries>,
    pub(super) kpi_capacity: usize,
}

impl Default for TwinStore {
    fn default() -> Self {
        TwinStore::new(DEFAULT_KPI_CAPACITY)
    }
}

fn device_properties(r: &SignalReading) -> BTreeMap<String, Value> {
    let mut caps: Vec<&str> = r.device.capabilities.iter().map(|k| k.as_str()).collect();
    caps.sort_unstable();
    BTreeMap::from([
        (
            "active_interface".to_string(),
            r.device
                .active_interface
                .map_or(Value::Null, |k| Value::String(k.as_str().into())),
        ),
        (
            "app_version".to_string(),
            Value::String(r.device.app_version.clone()),
        ),
        (
            "capabilities".to_string(),
            Value::Array(caps.into_iter().map(|c| Value::String(c.into())).collect()),
        ),
    ])
}

fn source_properties(r: &SignalReading) -> BTreeMap<String, Value> {
    let s = |x: &str| Value::String(x.to_string());
    let entries: Vec<(&str, Value)> = match &r.metrics {
        Metrics::Cellular(m) => vec![
            ("cell_id", s(&m.cell_id)),
            ("frequency_mhz", number(m.frequency_mhz)),
            ("network_type", s(&m.network_type)),
        ],
        Metrics::WiFi(m) => vec![
            ("bssid", s(&m.bssid)),
            ("channel", Value::from(m.channel)),
            ("frequency_mhz", number(m.frequency_mhz)),
            ("ssid", s(&m.ssid)),
        ],
        Metrics::Bluetooth(m) => vec![
            (
                "device_name",
                m.device_name.as_deref().map_or(Value::Null, s),
            ),
            ("peer_address", s(&m.peer_address)),
        ],
        Metrics::Environment(m) => vec![
            ("co2_ppm", number(m.co2_ppm)),
            ("model_name", s(&r.device.model_name)),
            ("motion_count", Value::from(m.motion_count)),
            ("pm25_ugm3", number(m.pm25_ugm3)),
        ],
    };
    entries
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Metrics recorded as KPI series for a reading: raw values and their
/// smoothed siblings.
fn kpi_samples(r: &SignalReading) -> Vec<(String, f64)> {
    let wanted: &[&str] = match r.kind() {
        SignalKind::Cellular => &["rssi_dbm", "rsrp_dbm"],
        SignalKind::WiFi | SignalKind::Bluetooth => &["rssi_dbm"],
        SignalKind::Environment => &["pm25_ugm3", "co2_ppm", "motion_count"],
    };
    let mut out = Vec::new();
    for (metric, value) in r.metrics.signal_values() {
        if !wanted.contains(&metric) {
            continue;
        }
        out.push((metric.to_string(), value));
        if let Some(s) = r.smoothed.get(metric) {
            out.push((format!("{metric}_smoothed"), *s));
        }
    }
    out
}

impl TwinStore {
    pub fn new(kpi_capacity: usize) -> Self {
        assert!(kpi_capacity > 0, "KPI capacity must be positive");
        TwinStore {
            models: BTreeMap::new(),
            instances: BTreeMap::new(),
            relationships: BTreeMap::new(),
            kpis: BTreeMap::new(),
            kpi_capacity,
        }
    }

    pub fn kpi_capacity(&self) -> usize {
        self.kpi_capacity
    }

    pub fn models(&self) -> impl Iterator<Item = &TwinModel> {
        self.models.values()
    }

    pub fn instances(&self) -> impl Iterator<Item = &TwinInstance> {
        self.instances.values()
    }

    pub fn relationships(&self) -> impl Iterator<Item = &TwinRelationship> {
        self.relationships.values()
    }

    pub fn instance(&self, twin_id: &str) -> Option<&TwinInstance> {
        self.instances.get(twin_id)
    }

    pub fn relationship(&self, rel_id: &str) -> Option<&TwinRelationship> {
        self.relationships.get(rel_id)
    }

    pub fn model(&self, model_id: &str) -> Option<&TwinModel> {
        self.models.get(model_id)
    }

    pub fn model_by_name(&self, name: &str) -> Option<&TwinModel> {
        self.models.values().find(|m| m.name == name)
    }

    pub fn series_keys(&self) -> impl Iterator<Item = &KpiKey> {
        self.kpis.keys()
    }

    pub fn series(&self, key: &KpiKey) -> Option<&KpiSeries> {
        self.kpis.get(key)
    }

    /// Returns the id of the model called `name`, creating it if needed.
    pub fn ensure_model(
        &mut self,
        name: &str,
        schema: PropertySchema,
    ) -> Result<String, TwinError> {
        if let Some(m) = self.model_by_name(name) {
            return if m.schema == schema {
                Ok(m.model_id.clone())
            } else {
                Err(TwinError::SchemaConflict {
                    name: name.to_string(),
                })
            };
        }
        let model_id = model_id_for(name);
        if self.models.contains_key(&model_id) {
            return Err(TwinError::StoreCorruption(format!(
                "model id `{model_id}` taken by another name"
            )));
        }
        self.models.insert(
            model_id.clone(),
            TwinModel {
                model_id: model_id.clone(),
                name: name.to_string(),
                schema,
            },
        );
        Ok(model_id)
    }

    fn append_kpis(&mut self, entity: &str, r: &SignalReading) {
        let capacity = self.kpi_capacity;
        for (metric, value) in kpi_samples(r) {
            self.kpis
                .entry(KpiKey::new(entity, metric))
                .or_insert_with(|| KpiSeries::new(capacity))
                .append(r.timestamp_ms, value);
        }
    }

    /// Inserts the twin or moves it to the newest reading. Readings with the
    /// same timestamp but different content resolve to the greater
    /// `(model_id, properties)`, so the result does not depend on the order in
    /// which concurrent kind streams arrive.
    fn upsert_instance(
        &mut self,
        twin_id: &str,
        model_id: &str,
        external_id: &str,
        properties: BTreeMap<String, Value>,
        ts: u64,
        cs: &mut ChangeSet,
    ) {
        let Some(inst) = self.instances.get_mut(twin_id) else {
            self.instances.insert(
                twin_id.to_string(),
                TwinInstance {
                    twin_id: twin_id.to_string(),
                    model_id: model_id.to_string(),
                    external_id: external_id.to_string(),
                    properties,
                    last_updated: ts,
                },
            );
            cs.added_instances.push(twin_id.to_string());
            return;
        };
        let newer = ts > inst.last_updated;
        let content = |m: &str, p: &BTreeMap<String, Value>| {
            (m.to_string(), serde_json::to_string(p).unwrap_or_default())
        };
        let tie_wins = ts == inst.last_updated
            && content(model_id, &properties) > content(&inst.model_id, &inst.properties);
        if !(newer || tie_wins) {
            return;
        }
        inst.last_updated = ts;
        inst.properties = properties;
        inst.model_id = model_id.to_string();
        cs.updated_instances.push(twin_id.to_string());
    }

    /// Folds one curated reading into the graph and its KPI series.
    pub fn reconcile(&mut self, r: &SignalReading) -> Result<ChangeSet, TwinError> {
        if !r.curated {
            return Err(TwinError::NotCurated);
        }
        let kind = r.kind();
        let ts = r.timestamp_ms;
        let mut cs = ChangeSet::default();

        if kind == SignalKind::Environment {
            let model_id = self.ensure_model(source_archetype(kind), source_schema(kind))?;
            let twin_id = source_twin_id(kind, &r.source_id);
            self.append_kpis(&twin_id, r);
            self.upsert_instance(
                &twin_id,
                &model_id,
                &r.source_id,
                source_properties(r),
                ts,
                &mut cs,
            );
            return Ok(cs);
        }

        let device_model = self.ensure_model(&r.device.model_name, device_schema())?;
        let source_model = self.ensure_model(source_archetype(kind), source_schema(kind))?;
        let device_twin = device_twin_id(&r.device.device_id);
        let source_twin = source_twin_id(kind, &r.source_id);
        let rel_id = relationship_id(&device_twin, &source_twin);
        self.append_kpis(&rel_id, r);

        if self
            .relationships
            .get(&rel_id)
            .is_some_and(|rel| ts <= rel.last_updated)
        {
            return Ok(cs);
        }
        self.upsert_instance(
            &device_twin,
            &device_model,
            &r.device.device_id,
            device_properties(r),
            ts,
            &mut cs,
        );
        self.upsert_instance(
            &source_twin,
            &source_model,
            &r.source_id,
            source_properties(r),
            ts,
            &mut cs,
        );

        let strength = r
            .smoothed_or_raw("rssi_dbm")
            .ok_or_else(|| TwinError::StoreCorruption("radio reading without rssi".into()))?;
        match self.relationships.get_mut(&rel_id) {
            Some(rel) => {
                rel.signal_strength_dbm = strength;
                rel.last_updated = ts;
                cs.updated_relationships.push(rel_id.clone());
            }
            None => {
                self.relationships.insert(
                    rel_id.clone(),
                    TwinRelationship {
                        rel_id: rel_id.clone(),
                        source_twin: device_twin.clone(),
                        target_twin: source_twin.clone(),
                        kind: DETECTS.to_string(),
                        signal_strength_dbm: strength,
                        last_updated: ts,
                    },
                );
                cs.added_relationships.push(rel_id.clone());
            }
        }
        for id in [&device_twin, &source_twin] {
            if !self.instances.contains_key(id) {
                return Err(TwinError::StoreCorruption(format!(
                    "relationship `{rel_id}` lost endpoint `{id}`"
                )));
            }
        }
        Ok(cs)
    }

    /// Removes relationships not refreshed since `now − ttl`, then twins that
    /// are both unreferenced and older than that. KPI series are kept.
    pub fn evict_stale(&mut self, now: u64, ttl_ms: u64) -> ChangeSet {
        let mut cs = ChangeSet::default();
        let Some(cutoff) = now.checked_sub(ttl_ms) else {
            return cs;
        };
        self.relationships.retain(|id, rel| {
            let keep = rel.last_updated >= cutoff;
            if !keep {
                cs.removed_relationships.push(id.clone());
            }
            keep
        });
        let referenced: BTreeSet<&str> = self
            .relationships
            .values()
            .flat_map(|r| [r.source_twin.as_str(), r.target_twin.as_str()])
            .collect();
        let doomed: Vec<String> = self
            .instances
            .values()
            .filter(|i| i.last_updated < cutoff && !referenced.contains(i.twin_id.as_str()))
            .map(|i| i.twin_id.clone())
            .collect();
        for id in &doomed {
            self.instances.remove(id);
        }
        cs.removed_instances = doomed;
        cs
    }

    /// Drops KPI series whose entity no longer exists; returns how many.
    pub fn prune_orphan_kpis(&mut self) -> usize {
        let before = self.kpis.len();
        let (instances, relationships) = (&self.instances, &self.relationships);
        self.kpis.retain(|k, _| {
            instances.contains_key(&k.entity) || relationships.contains_key(&k.entity)
        });
        before - self.kpis.len()
    }

    pub fn query_graph(&self, filter: &GraphFilter) -> Result<GraphView, TwinError> {
        let (instances, relationships): (Vec<&TwinInstance>, Vec<&TwinRelationship>) = match filter
        {
            GraphFilter::All => (
                self.instances.values().collect(),
                self.relationships.values().collect(),
            ),
            GraphFilter::Model(name) => {
                let ids: BTreeSet<&str> = self
                    .models
                    .values()
                    .filter(|m| &m.name == name)
                    .map(|m| m.model_id.as_str())
                    .collect();
                let inst: Vec<&TwinInstance> = self
                    .instances
                    .values()
                    .filter(|i| ids.contains(i.model_id.as_str()))
                    .collect();
                let members: BTreeSet<&str> = inst.iter().map(|i| i.twin_id.as_str()).collect();
                let rels = self
                    .relationships
                    .values()
                    .filter(|r| {
                        members.contains(r.source_twin.as_str())
                            && members.contains(r.target_twin.as_str())
                    })
                    .collect();
                (inst, rels)
            }
            GraphFilter::Twin(id) => {
                if !self.instances.contains_key(id) {
                    return Err(TwinError::UnknownTwin(id.clone()));
                }
                let rels: Vec<&TwinRelationship> = self
                    .relationships
                    .values()
                    .filter(|r| &r.source_twin == id || &r.target_twin == id)
                    .collect();
                let mut members: BTreeSet<&str> = BTreeSet::from([id.as_str()]);
                for r in &rels {
                    members.insert(&r.source_twin);
                    members.insert(&r.target_twin);
                }
                let inst = members
                    .iter()
                    .filter_map(|m| self.instances.get(*m))
                    .collect();
                (inst, rels)
            }
        };
        let model_ids: BTreeSet<&str> = instances.iter().map(|i| i.model_id.as_str()).collect();
        Ok(GraphView {
            models: model_ids
                .iter()
                .filter_map(|m| self.models.get(*m))
                .cloned()
                .collect(),
            instances: instances.into_iter().cloned().collect(),
            relationships: relationships.into_iter().cloned().collect(),
        })
    }

    pub fn query_kpis(
        &self,
        entity: &str,
        metric: &str,
        from: u64,
        to: u64,
    ) -> Result<Vec<Sample>, TwinError> {
        if from > to {
            return Err(TwinError::InvalidRange { from, to });
        }
        self.kpis
            .get(&KpiKey::new(entity, metric))
            .map(|s| s.range(from, to))
            .ok_or_else(|| TwinError::UnknownSeries(entity.to_string(), metric.to_string()))
    }

    /// Full structural check: endpoints exist, ids match their content,
    /// properties conform to their model's schema.
    pub fn check_integrity(&self) -> Result<(), TwinError> {
        let fail = |m: String| Err(TwinError::StoreCorruption(m));
        let mut names = BTreeSet::new();
        for (id, m) in &self.models {
            if id != &m.model_id || !names.insert(m.name.as_str()) {
                return fail(format!("model `{id}` is duplicated or misfiled"));
            }
        }
        let mut external = BTreeSet::new();
        for (id, inst) in &self.instances {
            if id != &inst.twin_id {
                return fail(format!("instance `{id}` misfiled"));
            }
            let Some(model) = self.models.get(&inst.model_id) else {
                return fail(format!(
                    "instance `{id}` references missing model `{}`",
                    inst.model_id
                ));
            };
            if !external.insert((inst.model_id.as_str(), inst.external_id.as_str())) {
                return fail(format!(
                    "external id `{}` repeated in model `{}`",
                    inst.external_id, inst.model_id
                ));
            }
            let keys_match = model.schema.keys().eq(inst.properties.keys());
            let types_ok = model
                .schema
                .iter()
                .all(|(k, t)| inst.properties.get(k).is_some_and(|v| t.admits(v)));
            if !keys_match || !types_ok {
                return fail(format!(
                    "instance `{id}` does not conform to model `{}`",
                    model.name
                ));
            }
        }
        for (id, rel) in &self.relationships {
            if id != &rel.rel_id
                || *id != relationship_id(&rel.source_twin, &rel.target_twin)
                || rel.kind != DETECTS
            {
                return fail(format!("relationship `{id}` misfiled"));
            }
            for end in [&rel.source_twin, &rel.target_twin] {
                if !self.instances.contains_key(end) {
                    return fail(format!(
                        "relationship `{id}` references missing twin `{end}`"
                    ));
                }
            }
        }
        for (key, series) in &self.kpis {
            let ordered = series
                .samples()
                .zip(series.samples().skip(1))
                .all(|(a, b)| a.timestamp_ms <= b.timestamp_ms);
            if !ordered || series.len() > series.capacity() {
                return fail(format!(
                    "series `{}`/`{}` is malformed",
                    key.entity, key.metric
                ));
            }
        }
        Ok(())
    }
}
