//! Statistical implementations of the four stages.

use std::collections::{BTreeMap, BTreeSet};

use super::context::{AnalyticsContext, SeriesRef};
use super::forecast::{holt, seasonal_naive};
use super::prescribe::{rank, Candidate};
use super::report::*;
use super::stats::{
    align_nearest, mean, median_gap, ols_slope, pearson, population_std, seasonality_period,
    z_anomalies,
};
use super::{AnalyticsError, MessageProfile};
use crate::action::{Action, ActionCommand};
use crate::signal::SignalKind;
use crate::twin::Sample;

pub const ISSUER: &str = "analytics";
const MIN_FORECAST_SAMPLES: usize = 4;
const MIN_CORRELATION_PAIRS: usize = 3;

fn values(samples: &[Sample]) -> Vec<f64> {
    samples.iter().map(|s| s.value).collect()
}

pub fn describe(ctx: &AnalyticsContext) -> Result<DescriptiveReport, AnalyticsError> {
    if ctx.series.is_empty() {
        return Err(AnalyticsError::EmptyScope);
    }
    let mut series = Vec::with_capacity(ctx.series.len());
    for (key, samples) in &ctx.series {
        if samples.is_empty() {
            return Err(AnalyticsError::EmptyScope);
        }
        let xs = values(samples);
        let t0 = samples[0].timestamp_ms;
        let ts: Vec<f64> = samples
            .iter()
            .map(|s| (s.timestamp_ms - t0) as f64 / 1000.0)
            .collect();
        series.push(SeriesStats {
            entity: key.entity.clone(),
            metric: key.metric.clone(),
            count: xs.len(),
            mean: mean(&xs),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: population_std(&xs),
            slope_per_s: ols_slope(&ts, &xs),
            seasonality_period: seasonality_period(&xs, ctx.config.seasonality_threshold),
        });
    }
    Ok(DescriptiveReport { series })
}

pub fn diagnose(ctx: &AnalyticsContext, descriptive: &DescriptiveReport) -> DiagnosticReport {
    let cfg = &ctx.config;
    let mut anomalies = Vec::new();
    for (key, samples) in &ctx.series {
        let hits: Vec<Anomaly> = z_anomalies(&values(samples), cfg.z_threshold)
            .into_iter()
            .map(|(i, z)| Anomaly {
                timestamp_ms: samples[i].timestamp_ms,
                value: samples[i].value,
                z,
            })
            .collect();
        if !hits.is_empty() {
            anomalies.push(SeriesAnomalies {
                entity: key.entity.clone(),
                metric: key.metric.clone(),
                anomalies: hits,
            });
        }
    }

    let keyed: Vec<(&SeriesRef, &Vec<Sample>, u64)> = ctx
        .series
        .iter()
        .filter_map(|(k, s)| median_gap(s).map(|g| (k, s, g)))
        .collect();
    let mut correlations = Vec::new();
    for (i, (ka, sa, ga)) in keyed.iter().enumerate() {
        for (kb, sb, gb) in &keyed[i + 1..] {
            let (xs, ys) = align_nearest(sa, sb, (*ga).min(*gb) / 2);
            if xs.len() < MIN_CORRELATION_PAIRS {
                continue;
            }
            if let Some(r) = pearson(&xs, &ys).filter(|r| r.abs() >= cfg.correlation_threshold) {
                correlations.push(Correlation {
                    a: (*ka).clone(),
                    b: (*kb).clone(),
                    r,
                    pairs: xs.len(),
                });
            }
        }
    }

    let flagged: usize = anomalies.iter().map(|a| a.anomalies.len()).sum();
    let seasonal = descriptive
        .series
        .iter()
        .filter(|s| s.seasonality_period.is_some())
        .count();
    let narrative = format!(
        "{flagged} anomalous samples in {} of {} series (|z| > {}); {} correlated series pairs (|r| >= {}); {seasonal} series show a seasonal pattern.",
        anomalies.len(),
        ctx.series.len(),
        cfg.z_threshold,
        correlations.len(),
        cfg.correlation_threshold,
    );
    DiagnosticReport {
        anomalies,
        correlations,
        narrative,
    }
}

pub fn predict(
    ctx: &AnalyticsContext,
    descriptive: &DescriptiveReport,
    diagnostic: &DiagnosticReport,
) -> Result<PredictiveReport, AnalyticsError> {
    let cfg = &ctx.config;
    let horizon = cfg.horizon;
    let mut forecasts = Vec::new();
    let mut skipped = Vec::new();
    for (key, samples) in &ctx.series {
        let skip = |reason: &str| Skipped {
            entity: key.entity.clone(),
            metric: key.metric.clone(),
            reason: reason.to_string(),
        };
        if samples.len() < MIN_FORECAST_SAMPLES {
            skipped.push(skip("insufficient_data"));
            continue;
        }
        let gap = median_gap(samples).unwrap_or(0);
        let max_gap = samples
            .windows(2)
            .map(|w| w[1].timestamp_ms - w[0].timestamp_ms)
            .max()
            .unwrap_or(0);
        if gap == 0 || max_gap > 2 * gap {
            skipped.push(skip("irregular_cadence"));
            continue;
        }
        let flagged: BTreeSet<(u64, u64)> = diagnostic
            .anomalies
            .iter()
            .filter(|a| a.entity == key.entity && a.metric == key.metric)
            .flat_map(|a| {
                a.anomalies
                    .iter()
                    .map(|x| (x.timestamp_ms, x.value.to_bits()))
            })
            .collect();
        let anomalous: BTreeSet<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| flagged.contains(&(s.timestamp_ms, s.value.to_bits())))
            .map(|(i, _)| i)
            .collect();
        let xs = values(samples);
        let period = descriptive
            .series
            .iter()
            .find(|s| s.entity == key.entity && s.metric == key.metric)
            .and_then(|s| s.seasonality_period)
            .filter(|p| *p <= xs.len());
        let (method, fit) = match period {
            Some(p) => (
                ForecastMethod::SeasonalNaive,
                seasonal_naive(&xs, &anomalous, p, horizon),
            ),
            None => (
                ForecastMethod::Holt,
                holt(&xs, &anomalous, cfg.holt_alpha, cfg.holt_beta, horizon),
            ),
        };
        let last = samples[samples.len() - 1].timestamp_ms;
        forecasts.push(SeriesForecast {
            entity: key.entity.clone(),
            metric: key.metric.clone(),
            method,
            period,
            forecasts: fit
                .forecasts
                .into_iter()
                .enumerate()
                .map(|(k, v)| (last + (k as u64 + 1) * gap, v))
                .collect(),
            mae: fit.mae,
        });
    }
    if forecasts.is_empty() {
        let names = |reason: &str| {
            skipped
                .iter()
                .filter(|s| s.reason == reason)
                .map(|s| format!("{}/{}", s.entity, s.metric))
                .collect::<Vec<_>>()
                .join(", ")
        };
        if skipped.iter().any(|s| s.reason == "irregular_cadence") {
            return Err(AnalyticsError::IrregularCadence(names("irregular_cadence")));
        }
        return Err(AnalyticsError::InsufficientData(format!(
            "no series has {MIN_FORECAST_SAMPLES} samples: {}",
            names("insufficient_data")
        )));
    }
    Ok(PredictiveReport {
        horizon,
        forecasts,
        skipped,
    })
}

/// Normalized occupancy from predicted motion counts, falling back to the
/// latest observed counts.
fn occupancy(ctx: &AnalyticsContext, predictive: &PredictiveReport) -> f64 {
    let predicted: Vec<f64> = predictive
        .forecasts
        .iter()
        .filter(|f| f.metric == "motion_count")
        .filter_map(|f| f.forecasts.first().map(|p| p.1))
        .collect();
    let counts = if predicted.is_empty() {
        ctx.series
            .iter()
            .filter(|(k, _)| k.metric == "motion_count")
            .filter_map(|(_, s)| s.last().map(|x| x.value))
            .collect()
    } else {
        predicted
    };
    if counts.is_empty() {
        return 0.0;
    }
    (mean(&counts) / ctx.config.occupancy_reference).clamp(0.0, 1.0)
}

pub fn prescribe(
    ctx: &AnalyticsContext,
    predictive: &PredictiveReport,
    profile: &MessageProfile,
) -> Result<PrescriptiveReport, AnalyticsError> {
    let cfg = &ctx.config;
    let occ = occupancy(ctx, predictive);
    let issued_at = ctx
        .series
        .values()
        .filter_map(|s| s.last())
        .map(|s| s.timestamp_ms)
        .max()
        .unwrap_or(ctx.window.from);
    let mut devices = Vec::new();
    let mut no_candidates = Vec::new();
    let mut proposed_actions = Vec::new();
    for dev in ctx.devices.values() {
        let mut best: BTreeMap<SignalKind, f64> = BTreeMap::new();
        for link in ctx.links_of(&dev.device_id) {
            if !cfg.interfaces.contains_key(&link.kind)
                || !(dev.capabilities.is_empty() || dev.capabilities.contains(&link.kind))
            {
                continue;
            }
            let strength = predictive
                .forecast(&link.rel_id, "rssi_dbm")
                .and_then(|f| f.forecasts.first())
                .map_or(link.signal_strength_dbm, |p| p.1);
            let slot = best.entry(link.kind).or_insert(f64::NEG_INFINITY);
            *slot = slot.max(strength);
        }
        if best.is_empty() {
            no_candidates.push(dev.device_id.clone());
            continue;
        }
        let candidates: Vec<Candidate> = best
            .into_iter()
            .map(|(kind, dbm)| {
                let p = &cfg.interfaces[&kind];
                let [low, high] = p.reference_dbm;
                Candidate {
                    kind,
                    raw_quality: (dbm - low) / (high - low),
                    congestion: (p.congestion_base + p.occupancy_sensitivity * occ).clamp(0.0, 1.0),
                    latency_penalty: if p.nominal_latency_ms > profile.deadline_ms {
                        1.0
                    } else {
                        0.0
                    },
                }
            })
            .collect();
        let ranked = rank(&candidates, &cfg.weights);
        let recommended = ranked[0].kind;
        if dev.active_interface != Some(recommended) {
            proposed_actions.push(ActionCommand {
                device_id: dev.device_id.clone(),
                action: Action::SetPrimaryInterface {
                    interface: recommended,
                },
                issued_by: ISSUER.to_string(),
                issued_at,
            });
        }
        devices.push(DevicePrescription {
            device_id: dev.device_id.clone(),
            current_interface: dev.active_interface,
            ranked,
            recommended_interface: recommended,
        });
    }
    if devices.is_empty() {
        let subject = if no_candidates.is_empty() {
            "no devices in scope".to_string()
        } else {
            no_candidates.join(", ")
        };
        return Err(AnalyticsError::NoCandidates(subject));
    }
    Ok(PrescriptiveReport {
        recommended_interface: devices
            .iter()
            .map(|d| (d.device_id.clone(), d.recommended_interface))
            .collect(),
        devices,
        occupancy: occ,
        no_candidates,
        proposed_actions,
    })
}
