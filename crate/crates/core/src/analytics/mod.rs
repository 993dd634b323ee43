//! Staged analytics over the twin graph: descriptive, diagnostic, predictive
//! and prescriptive, each stage consuming the reports of the stages before it.
//!
//! The [`Deterministic`] backend computes every report statistically. LM
//! backends render a per-stage prompt from a template and must answer with a
//! document in the same report schema.

mod backend;
mod context;
pub mod forecast;
mod pipeline;
pub mod prescribe;
mod prompt;
mod report;
mod stages;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::signal::SignalKind;

pub use backend::{AnalyticsBackend, Deterministic, MockLm, RemoteLm};
pub use context::{AnalyticsContext, DeviceInfo, Link, SeriesRef, Window};
pub use pipeline::{run_pipeline, stage_prefix, AnalyticsBundle, Reports};
pub use prescribe::{Candidate, ScoredCandidate, Weights};
pub use prompt::{PromptTemplates, PLACEHOLDERS};
pub use report::{
    Anomaly, Correlation, DescriptiveReport, DevicePrescription, DiagnosticReport, ForecastMethod,
    PredictiveReport, PrescriptiveReport, SeriesAnomalies, SeriesForecast, SeriesStats, Skipped,
    StageReport,
};
pub use stages::{describe, diagnose, predict, prescribe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Descriptive,
    Diagnostic,
    Predictive,
    Prescriptive,
}

impl Stage {
    pub const CANONICAL: [Stage; 4] = [
        Stage::Descriptive,
        Stage::Diagnostic,
        Stage::Predictive,
        Stage::Prescriptive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Descriptive => "descriptive",
            Stage::Diagnostic => "diagnostic",
            Stage::Predictive => "predictive",
            Stage::Prescriptive => "prescriptive",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::CANONICAL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| AnalyticsError::UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("no series in scope")]
    EmptyScope,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("irregular cadence: {0}")]
    IrregularCadence(String),
    #[error("no candidate interface: {0}")]
    NoCandidates(String),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("requested stages skip {missing:?}")]
    StagePrefix { missing: Vec<Stage> },
    #[error("no stages requested")]
    NoStages,
    #[error("{stage} stage failed: {source}")]
    StageFailed {
        stage: Stage,
        #[source]
        source: Box<AnalyticsError>,
    },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("template placeholder `{placeholder}` cannot be resolved")]
    Template { placeholder: String },
    #[error("unknown twin `{0}`")]
    UnknownTwin(String),
    #[error("invalid window: from {from} > to {to}")]
    InvalidWindow { from: u64, to: u64 },
    #[error("invalid context: {0}")]
    InvalidContext(String),
}

impl AnalyticsError {
    /// The innermost error, looking through stage wrappers.
    pub fn root(&self) -> &AnalyticsError {
        match self {
            AnalyticsError::StageFailed { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Periodicity {
    Sporadic,
    Periodic,
}

/// Characteristics of the traffic a device is about to send.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MessageProfile {
    pub payload_bytes: u64,
    pub deadline_ms: u64,
    pub periodicity: Periodicity,
}

impl Default for MessageProfile {
    fn default() -> Self {
        MessageProfile {
            payload_bytes: 256,
            deadline_ms: 1000,
            periodicity: Periodicity::Sporadic,
        }
    }
}

impl MessageProfile {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.payload_bytes == 0 {
            return Err(AnalyticsError::InvalidContext(
                "payload_bytes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-interface constants used by the prescriptive stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceProfile {
    /// Signal strength range `[low, high]` in dBm mapped onto `[0, 1]`.
    pub reference_dbm: [f64; 2],
    pub congestion_base: f64,
    /// Added congestion per unit of normalized occupancy.
    pub occupancy_sensitivity: f64,
    pub nominal_latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub seasonality_threshold: f64,
    pub z_threshold: f64,
    pub correlation_threshold: f64,
    pub horizon: usize,
    pub holt_alpha: f64,
    pub holt_beta: f64,
    pub weights: Weights,
    pub interfaces: BTreeMap<SignalKind, InterfaceProfile>,
    /// Motion count treated as full occupancy.
    pub occupancy_reference: f64,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        let iface = |low: f64, high: f64, base: f64, sens: f64, latency: u64| InterfaceProfile {
            reference_dbm: [low, high],
            congestion_base: base,
            occupancy_sensitivity: sens,
            nominal_latency_ms: latency,
        };
        AnalyticsConfig {
            seasonality_threshold: 0.7,
            z_threshold: 2.5,
            correlation_threshold: 0.7,
            horizon: 5,
            holt_alpha: 0.5,
            holt_beta: 0.3,
            weights: Weights::default(),
            interfaces: BTreeMap::from([
                (SignalKind::Cellular, iface(-120.0, -50.0, 0.3, 0.0, 50)),
                (SignalKind::WiFi, iface(-90.0, -30.0, 0.2, 0.5, 10)),
                (SignalKind::Bluetooth, iface(-100.0, -40.0, 0.1, 0.2, 100)),
            ]),
            occupancy_reference: 10.0,
        }
    }
}

impl AnalyticsConfig {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let bad = |m: &str| Err(AnalyticsError::InvalidContext(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.holt_alpha) || !(0.0..=1.0).contains(&self.holt_beta) {
            return bad("holt smoothing parameters must lie in [0, 1]");
        }
        if self.z_threshold < 0.0 || !(0.0..=1.0).contains(&self.correlation_threshold) {
            return bad("thresholds out of range");
        }
        if self.occupancy_reference <= 0.0 {
            return bad("occupancy_reference must be positive");
        }
        for (kind, p) in &self.interfaces {
            if !kind.is_radio() || p.reference_dbm[0] >= p.reference_dbm[1] {
                return bad(
                    "interface profiles need a radio kind and an increasing reference range",
                );
            }
        }
        Ok(())
    }
}
