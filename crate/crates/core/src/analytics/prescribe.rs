//! Weighted-sum interface selection.

use serde::{Deserialize, Serialize};

use crate::signal::SignalKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub quality: f64,
    pub congestion: f64,
    pub latency: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            quality: 0.6,
            congestion: 0.3,
            latency: 0.1,
        }
    }
}

/// One interface option before quality normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub kind: SignalKind,
    /// Quality on a common scale across kinds; larger is better.
    pub raw_quality: f64,
    /// Congestion proxy in [0, 1].
    pub congestion: f64,
    /// 1 when the interface cannot meet the deadline, else 0.
    pub latency_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredCandidate {
    pub kind: SignalKind,
    pub score: f64,
    pub quality: f64,
    pub congestion: f64,
    pub latency_penalty: f64,
}

/// Min-max normalization; a set with no spread maps to all ones.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; values.len()]
    }
}

/// Scores and ranks candidates, best first. Equal scores are ordered by kind
/// name, so the first entry is the recommendation.
pub fn rank(candidates: &[Candidate], w: &Weights) -> Vec<ScoredCandidate> {
    let q = min_max(&candidates.iter().map(|c| c.raw_quality).collect::<Vec<_>>());
    let mut scored: Vec<ScoredCandidate> = candidates
        .iter()
        .zip(q)
        .map(|(c, q)| ScoredCandidate {
            kind: c.kind,
            score: w.quality * q - w.congestion * c.congestion - w.latency * c.latency_penalty,
            quality: q,
            congestion: c.congestion,
            latency_penalty: c.latency_penalty,
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.kind.as_str().cmp(b.kind.as_str()))
    });
    scored
}
