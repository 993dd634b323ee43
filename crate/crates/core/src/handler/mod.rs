//! Signal handler: routes raw readings to one data processor per signal kind,
//! cleans them, smooths signal metrics and republishes curated readings.
//!
//! Cleaning runs in a fixed order so drop reasons are deterministic:
//!
//! 1. bounds validation,
//! 2. staleness (older than `last_seen − staleness_window_ms` for the key),
//! 3. duplicate (same timestamp and metrics as the last accepted reading),
//! 4. normalization.
//!
//! Per-key state lives in the kind's processor; a key is (device, source).

mod node;
mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::bus::BusMessage;
use crate::signal::{
    decode_reading, normalize_reading, validate_reading, Metrics, SchemaError, SignalKind,
    SignalReading, ValidationBounds, ValidationVerdict,
};

pub use node::HandlerNode;
pub use stats::{HandlerStats, KindCounters, StatsSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Hosted inside the device simulator; devices publish curated readings.
    Device,
    #[default]
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandlerConfig {
    pub bounds: ValidationBounds,
    pub alpha: f64,
    pub staleness_window_ms: u64,
    pub placement: Placement,
}

impl Default for HandlerConfig {
    fn default() -> Self {
        HandlerConfig {
            bounds: ValidationBounds::default(),
            alpha: 0.3,
            staleness_window_ms: 5000,
            placement: Placement::Cloud,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DropReason {
    OutOfBounds { metric: &'static str, value: f64 },
    Stale { last_seen: u64 },
    Duplicate,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum CleanOutcome {
    Accept(SignalReading),
    Drop(DropReason),
}

#[derive(Debug, Clone, Default)]
struct KeyState {
    last_seen: u64,
    last_accepted: Option<(u64, Metrics)>,
}

/// EWMA step: `s = α·x + (1−α)·s_prev`, or `x` when there is no history.
pub fn ewma(previous: Option<f64>, value: f64, alpha: f64) -> f64 {
    match previous {
        None => value,
        Some(s) => alpha * value + (1.0 - alpha) * s,
    }
}

/// Data processor for one signal kind.
#[derive(Debug)]
pub struct KindProcessor {
    kind: SignalKind,
    bounds: ValidationBounds,
    alpha: f64,
    staleness_window_ms: u64,
    keys: HashMap<(String, String), KeyState>,
    smoothers: HashMap<(String, String, &'static str), f64>,
}

impl KindProcessor {
    pub fn new(kind: SignalKind, config: &HandlerConfig) -> Self {
        assert!(
            config.alpha > 0.0 && config.alpha <= 1.0,
            "alpha must be in (0, 1]"
        );
        KindProcessor {
            kind,
            bounds: config.bounds.clone(),
            alpha: config.alpha,
            staleness_window_ms: config.staleness_window_ms,
            keys: HashMap::new(),
            smoothers: HashMap::new(),
        }
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn clean(&mut self, reading: &SignalReading) -> CleanOutcome {
        if let ValidationVerdict::Reject { metric, value, .. } =
            validate_reading(reading, &self.bounds)
        {
            return CleanOutcome::Drop(DropReason::OutOfBounds { metric, value });
        }
        let normalized = normalize_reading(reading);
        let key = (
            normalized.device.device_id.clone(),
            normalized.source_id.clone(),
        );
        let state = self.keys.entry(key).or_default();
        if reading
            .timestamp_ms
            .saturating_add(self.staleness_window_ms)
            < state.last_seen
        {
            return CleanOutcome::Drop(DropReason::Stale {
                last_seen: state.last_seen,
            });
        }
        if let Some((ts, metrics)) = &state.last_accepted {
            if *ts == normalized.timestamp_ms && *metrics == normalized.metrics {
                return CleanOutcome::Drop(DropReason::Duplicate);
            }
        }
        state.last_seen = state.last_seen.max(normalized.timestamp_ms);
        state.last_accepted = Some((normalized.timestamp_ms, normalized.metrics.clone()));
        CleanOutcome::Accept(normalized)
    }

    pub fn smooth(
        &mut self,
        device_id: &str,
        source_id: &str,
        metric: &'static str,
        value: f64,
    ) -> f64 {
        let key = (device_id.to_string(), source_id.to_string(), metric);
        let s = ewma(self.smoothers.get(&key).copied(), value, self.alpha);
        self.smoothers.insert(key, s);
        s
    }

    /// Clean, then smooth every signal metric into a curated reading.
    pub fn process(&mut self, reading: &SignalReading) -> CleanOutcome {
        let accepted = match self.clean(reading) {
            CleanOutcome::Accept(r) => r,
            drop => return drop,
        };
        let mut curated = accepted;
        let mut smoothed = BTreeMap::new();
        for (metric, value) in curated.metrics.signal_values() {
            let s = self.smooth(&curated.device.device_id, &curated.source_id, metric, value);
            smoothed.insert(metric.to_string(), s);
        }
        curated.curated = true;
        curated.smoothed = smoothed;
        CleanOutcome::Accept(curated)
    }
}

/// Result of handling one raw bus message.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Dispatch {
    Curated(SignalReading),
    Dropped(SignalKind, DropReason),
    Undecodable(Option<SignalKind>, SchemaError),
}

/// Kind named by the last segment of a raw topic, if any.
pub fn kind_from_topic(msg: &BusMessage) -> Option<SignalKind> {
    msg.topic.segments().last().and_then(|s| s.parse().ok())
}

pub fn decode_message(
    msg: &BusMessage,
) -> Result<SignalReading, (Option<SignalKind>, SchemaError)> {
    let text = std::str::from_utf8(&msg.payload).map_err(|_| {
        (
            kind_from_topic(msg),
            SchemaError {
                path: String::new(),
                reason: "payload is not UTF-8".into(),
            },
        )
    })?;
    decode_reading(text).map_err(|e| (kind_from_topic(msg), e))
}

/// Synchronous handler core: one processor per kind, created on first use.
#[derive(Debug)]
pub struct SignalHandler {
    config: HandlerConfig,
    processors: BTreeMap<SignalKind, KindProcessor>,
    stats: std::sync::Arc<HandlerStats>,
}

impl SignalHandler {
    pub fn new(config: HandlerConfig) -> Self {
        SignalHandler {
            config,
            processors: BTreeMap::new(),
            stats: Default::default(),
        }
    }

    pub fn stats(&self) -> std::sync::Arc<HandlerStats> {
        self.stats.clone()
    }

    pub fn processor_kinds(&self) -> Vec<SignalKind> {
        self.processors.keys().copied().collect()
    }

    pub fn processor(&self, kind: SignalKind) -> Option<&KindProcessor> {
        self.processors.get(&kind)
    }

    pub fn handle_reading(&mut self, reading: &SignalReading) -> Dispatch {
        let kind = reading.kind();
        let processor = self
            .processors
            .entry(kind)
            .or_insert_with(|| KindProcessor::new(kind, &self.config));
        let outcome = processor.process(reading);
        record(&self.stats, kind, &outcome);
        match outcome {
            CleanOutcome::Accept(r) => Dispatch::Curated(r),
            CleanOutcome::Drop(reason) => Dispatch::Dropped(kind, reason),
        }
    }

    /// Decodes and routes one raw message. Poison messages are counted, never fatal.
    pub fn dispatch(&mut self, msg: &BusMessage) -> Dispatch {
        match decode_message(msg) {
            Ok(reading) => self.handle_reading(&reading),
            Err((kind, err)) => {
                self.stats.record_undecodable(kind);
                tracing::debug!(topic = %msg.topic, error = %err, "dropping undecodable reading");
                Dispatch::Undecodable(kind, err)
            }
        }
    }
}

pub(crate) fn record(stats: &HandlerStats, kind: SignalKind, outcome: &CleanOutcome) {
    match outcome {
        CleanOutcome::Accept(_) => stats.record_accepted(kind),
        CleanOutcome::Drop(DropReason::OutOfBounds { .. }) => stats.record_out_of_bounds(kind),
        CleanOutcome::Drop(DropReason::Stale { .. }) => stats.record_stale(kind),
        CleanOutcome::Drop(DropReason::Duplicate) => stats.record_duplicate(kind),
    }
}
