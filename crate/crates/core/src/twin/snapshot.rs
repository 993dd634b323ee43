use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    KpiKey, KpiSeries, Sample, TwinError, TwinInstance, TwinModel, TwinRelationship, TwinStore,
};

pub const SNAPSHOT_FORMAT_VERSION: u64 = 1;
pub const SNAPSHOT_EXTENSION: &str = ".twinsnap.json";
const SNAPSHOT_STEM: &str = "twins";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesDoc {
    entity: String,
    metric: String,
    capacity: usize,
    /// `[timestamp_ms, value]` pairs, oldest first.
    samples: Vec<(u64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    format_version: u64,
    kpi_capacity: usize,
    models: Vec<TwinModel>,
    instances: Vec<TwinInstance>,
    relationships: Vec<TwinRelationship>,
    kpis: Vec<SeriesDoc>,
}

fn corrupt(m: impl Into<String>) -> TwinError {
    TwinError::CorruptSnapshot(m.into())
}

impl TwinStore {
    /// Canonical JSON of the whole store. Equal stores give identical bytes.
    pub fn snapshot(&self) -> String {
        let doc = SnapshotDoc {
            format_version: SNAPSHOT_FORMAT_VERSION,
            kpi_capacity: self.kpi_capacity,
            models: self.models.values().cloned().collect(),
            instances: self.instances.values().cloned().collect(),
            relationships: self.relationships.values().cloned().collect(),
            kpis: self
                .kpis
                .iter()
                .map(|(k, s)| SeriesDoc {
                    entity: k.entity.clone(),
                    metric: k.metric.clone(),
                    capacity: s.capacity(),
                    samples: s.samples().map(|x| (x.timestamp_ms, x.value)).collect(),
                })
                .collect(),
        };
        crate::json::to_canonical(&doc)
    }

    pub fn restore(document: &str) -> Result<TwinStore, TwinError> {
        let value: Value = serde_json::from_str(document).map_err(|e| corrupt(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| corrupt("missing format_version"))?;
        if version != SNAPSHOT_FORMAT_VERSION {
            return Err(TwinError::VersionMismatch {
                found: version,
                expected: SNAPSHOT_FORMAT_VERSION,
            });
        }
        let doc: SnapshotDoc = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        if doc.kpi_capacity == 0 {
            return Err(corrupt("kpi_capacity must be positive"));
        }
        let mut store = TwinStore::new(doc.kpi_capacity);
        for m in doc.models {
            if store.models.insert(m.model_id.clone(), m).is_some() {
                return Err(corrupt("duplicate model id"));
            }
        }
        for i in doc.instances {
            if store.instances.insert(i.twin_id.clone(), i).is_some() {
                return Err(corrupt("duplicate twin id"));
            }
        }
        for r in doc.relationships {
            if store.relationships.insert(r.rel_id.clone(), r).is_some() {
                return Err(corrupt("duplicate relationship id"));
            }
        }
        let mut kpis = BTreeMap::new();
        for s in doc.kpis {
            let samples = s
                .samples
                .into_iter()
                .map(|(timestamp_ms, value)| Sample {
                    timestamp_ms,
                    value,
                })
                .collect();
            let series = KpiSeries::from_samples(s.capacity, samples).ok_or_else(|| {
                corrupt(format!("series `{}`/`{}` is malformed", s.entity, s.metric))
            })?;
            if kpis
                .insert(KpiKey::new(s.entity, s.metric), series)
                .is_some()
            {
                return Err(corrupt("duplicate series"));
            }
        }
        store.kpis = kpis;
        store
            .check_integrity()
            .map_err(|e| corrupt(e.to_string()))?;
        Ok(store)
    }

    /// Prunes KPI series of removed entities, then writes the snapshot
    /// atomically into `dir`. Returns the file path.
    pub fn persist_snapshot(&mut self, dir: &Path) -> Result<PathBuf, TwinError> {
        self.prune_orphan_kpis();
        write_snapshot(dir, &self.snapshot())
    }

    /// Loads the snapshot in `dir`, if there is one.
    pub fn load_snapshot(dir: &Path) -> Result<Option<TwinStore>, TwinError> {
        let path = snapshot_path(dir);
        match std::fs::read_to_string(&path) {
            Ok(text) => TwinStore::restore(&text).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(TwinError::Io(format!("{}: {e}", path.display()))),
        }
    }
}

pub fn snapshot_path(dir: &Path) -> PathBuf {
    dir.join(format!("{SNAPSHOT_STEM}{SNAPSHOT_EXTENSION}"))
}

pub(super) fn write_snapshot(dir: &Path, document: &str) -> Result<PathBuf, TwinError> {
    let io = |e: std::io::Error| TwinError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let path = snapshot_path(dir);
    let tmp = dir.join(format!(".{SNAPSHOT_STEM}{SNAPSHOT_EXTENSION}.tmp"));
    std::fs::write(&tmp, document).map_err(io)?;
    std::fs::rename(&tmp, &path).map_err(io)?;
    Ok(path)
}
