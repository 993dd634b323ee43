use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::context::SeriesRef;
use super::prescribe::ScoredCandidate;
use super::{AnalyticsConfig, AnalyticsError, Stage};
use crate::action::ActionCommand;
use crate::signal::SignalKind;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesStats {
    pub entity: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    /// Least-squares slope in units per second.
    pub slope_per_s: f64,
    pub seasonality_period: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptiveReport {
    pub series: Vec<SeriesStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anomaly {
    pub timestamp_ms: u64,
    pub value: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesAnomalies {
    pub entity: String,
    pub metric: String,
    pub anomalies: Vec<Anomaly>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlation {
    pub a: SeriesRef,
    pub b: SeriesRef,
    pub r: f64,
    /// Number of aligned sample pairs.
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticReport {
    /// Only series with at least one anomaly are listed.
    pub anomalies: Vec<SeriesAnomalies>,
    pub correlations: Vec<Correlation>,
    pub narrative: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMethod {
    Holt,
    SeasonalNaive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesForecast {
    pub entity: String,
    pub metric: String,
    pub method: ForecastMethod,
    pub period: Option<usize>,
    /// `[timestamp_ms, value]` pairs.
    pub forecasts: Vec<(u64, f64)>,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skipped {
    pub entity: String,
    pub metric: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictiveReport {
    pub horizon: usize,
    pub forecasts: Vec<SeriesForecast>,
    pub skipped: Vec<Skipped>,
}

impl PredictiveReport {
    pub fn forecast(&self, entity: &str, metric: &str) -> Option<&SeriesForecast> {
        self.forecasts
            .iter()
            .find(|f| f.entity == entity && f.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePrescription {
    pub device_id: String,
    pub current_interface: Option<SignalKind>,
    /// Best first.
    pub ranked: Vec<ScoredCandidate>,
    pub recommended_interface: SignalKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescriptiveReport {
    pub devices: Vec<DevicePrescription>,
    /// Device id to recommended interface.
    pub recommended_interface: BTreeMap<String, SignalKind>,
    /// Normalized occupancy in [0, 1] that modulated congestion.
    pub occupancy: f64,
    /// Devices in scope without any candidate interface.
    pub no_candidates: Vec<String>,
    /// Interface switches for devices whose recommendation differs from
    /// their current interface.
    pub proposed_actions: Vec<ActionCommand>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageReport {
    Descriptive(DescriptiveReport),
    Diagnostic(DiagnosticReport),
    Predictive(PredictiveReport),
    Prescriptive(PrescriptiveReport),
}

fn invalid(stage: Stage, msg: impl Into<String>) -> AnalyticsError {
    AnalyticsError::Backend(format!("{stage} report invalid: {}", msg.into()))
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl StageReport {
    pub fn stage(&self) -> Stage {
        match self {
            StageReport::Descriptive(_) => Stage::Descriptive,
            StageReport::Diagnostic(_) => Stage::Diagnostic,
            StageReport::Predictive(_) => Stage::Predictive,
            StageReport::Prescriptive(_) => Stage::Prescriptive,
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            StageReport::Descriptive(r) => serde_json::to_value(r),
            StageReport::Diagnostic(r) => serde_json::to_value(r),
            StageReport::Predictive(r) => serde_json::to_value(r),
            StageReport::Prescriptive(r) => serde_json::to_value(r),
        };
        v.expect("reports serialize")
    }

    /// Parses a document in the schema of `stage`.
    pub fn from_value(stage: Stage, v: Value) -> Result<StageReport, AnalyticsError> {
        let err = |e: serde_json::Error| invalid(stage, e.to_string());
        Ok(match stage {
            Stage::Descriptive => StageReport::Descriptive(serde_json::from_value(v).map_err(err)?),
            Stage::Diagnostic => StageReport::Diagnostic(serde_json::from_value(v).map_err(err)?),
            Stage::Predictive => StageReport::Predictive(serde_json::from_value(v).map_err(err)?),
            Stage::Prescriptive => {
                StageReport::Prescriptive(serde_json::from_value(v).map_err(err)?)
            }
        })
    }

    /// Schema-level invariants every backend's output must satisfy.
    pub fn validate(&self, config: &AnalyticsConfig) -> Result<(), AnalyticsError> {
        let stage = self.stage();
        match self {
            StageReport::Descriptive(r) => {
                for s in &r.series {
                    if s.count == 0 || !finite(&[s.mean, s.min, s.max, s.std, s.slope_per_s]) {
                        return Err(invalid(
                            stage,
                            format!("bad statistics for {}/{}", s.entity, s.metric),
                        ));
                    }
                    if s.min > s.max || s.mean < s.min - EPS || s.mean > s.max + EPS || s.std < 0.0
                    {
                        return Err(invalid(
                            stage,
                            format!("inconsistent statistics for {}/{}", s.entity, s.metric),
                        ));
                    }
                    if s.seasonality_period.is_some_and(|p| p < 2) {
                        return Err(invalid(stage, "seasonality period below 2"));
                    }
                }
            }
            StageReport::Diagnostic(r) => {
                for a in r.anomalies.iter().flat_map(|s| &s.anomalies) {
                    if !a.z.is_finite() || a.z.abs() <= config.z_threshold {
                        return Err(invalid(
                            stage,
                            format!("anomaly z {} within threshold", a.z),
                        ));
                    }
                }
                for c in &r.correlations {
                    if !c.r.is_finite()
                        || c.r.abs() > 1.0 + 1e-12
                        || c.r.abs() < config.correlation_threshold
                    {
                        return Err(invalid(
                            stage,
                            format!("correlation r {} out of range", c.r),
                        ));
                    }
                }
            }
            StageReport::Predictive(r) => {
                if r.horizon != config.horizon {
                    return Err(invalid(stage, "horizon differs from configuration"));
                }
                for f in &r.forecasts {
                    let increasing = f.forecasts.windows(2).all(|w| w[0].0 < w[1].0);
                    let values: Vec<f64> = f.forecasts.iter().map(|p| p.1).collect();
                    if f.forecasts.len() != r.horizon || !increasing || !finite(&values) {
                        return Err(invalid(
                            stage,
                            format!("bad forecast for {}/{}", f.entity, f.metric),
                        ));
                    }
                    if !f.mae.is_finite() || f.mae < 0.0 {
                        return Err(invalid(stage, "mae must be finite and non-negative"));
                    }
                    if (f.method == ForecastMethod::SeasonalNaive) != f.period.is_some() {
                        return Err(invalid(stage, "period goes with seasonal_naive"));
                    }
                }
            }
            StageReport::Prescriptive(r) => {
                if !in_unit(r.occupancy) {
                    return Err(invalid(stage, "occupancy outside [0, 1]"));
                }
                for d in &r.devices {
                    let Some(best) = d.ranked.first() else {
                        return Err(invalid(stage, format!("empty ranking for {}", d.device_id)));
                    };
                    if best.kind != d.recommended_interface
                        || r.recommended_interface.get(&d.device_id)
                            != Some(&d.recommended_interface)
                    {
                        return Err(invalid(
                            stage,
                            format!("recommendation for {} is not the argmax", d.device_id),
                        ));
                    }
                    if !d.ranked.windows(2).all(|w| w[0].score >= w[1].score) {
                        return Err(invalid(
                            stage,
                            format!("ranking for {} is not descending", d.device_id),
                        ));
                    }
                    for c in &d.ranked {
                        let w = &config.weights;
                        let expected = w.quality * c.quality
                            - w.congestion * c.congestion
                            - w.latency * c.latency_penalty;
                        if !in_unit(c.quality)
                            || !in_unit(c.congestion)
                            || !in_unit(c.latency_penalty)
                        {
                            return Err(invalid(stage, "rationale values outside [0, 1]"));
                        }
                        if (c.score - expected).abs() > EPS {
                            return Err(invalid(stage, "score disagrees with its rationale"));
                        }
                    }
                }
                if r.recommended_interface.len() != r.devices.len() {
                    return Err(invalid(stage, "recommendation map does not match devices"));
                }
            }
        }
        Ok(())
    }
}
