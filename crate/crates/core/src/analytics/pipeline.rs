use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::backend::AnalyticsBackend;
use super::context::AnalyticsContext;
use super::report::*;
use super::{AnalyticsError, Stage};
use crate::json;

/// Reports produced so far, one slot per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reports {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptive: Option<DescriptiveReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<DiagnosticReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictive: Option<PredictiveReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prescriptive: Option<PrescriptiveReport>,
}

impl Reports {
    pub fn insert(&mut self, report: StageReport) {
        match report {
            StageReport::Descriptive(r) => self.descriptive = Some(r),
            StageReport::Diagnostic(r) => self.diagnostic = Some(r),
            StageReport::Predictive(r) => self.predictive = Some(r),
            StageReport::Prescriptive(r) => self.prescriptive = Some(r),
        }
    }

    pub fn len(&self) -> usize {
        [
            self.descriptive.is_some(),
            self.diagnostic.is_some(),
            self.predictive.is_some(),
            self.prescriptive.is_some(),
        ]
        .into_iter()
        .filter(|x| *x)
        .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_canonical_json(&self) -> String {
        json::to_canonical(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsBundle {
    pub backend: String,
    pub stages: Vec<Stage>,
    pub reports: Reports,
    /// Wall-clock duration of each stage; the only field that varies between
    /// identical runs.
    pub timings_ms: BTreeMap<Stage, f64>,
}

impl AnalyticsBundle {
    pub fn to_canonical_json(&self) -> String {
        json::to_canonical(self)
    }
}

/// Checks that `stages` is a non-empty prefix of the canonical order and
/// returns it sorted.
pub fn stage_prefix(stages: &[Stage]) -> Result<Vec<Stage>, AnalyticsError> {
    let requested: BTreeSet<Stage> = stages.iter().copied().collect();
    let Some(last) = requested.last() else {
        return Err(AnalyticsError::NoStages);
    };
    let missing: Vec<Stage> = Stage::CANONICAL
        .into_iter()
        .take_while(|s| s < last)
        .filter(|s| !requested.contains(s))
        .collect();
    if !missing.is_empty() {
        return Err(AnalyticsError::StagePrefix { missing });
    }
    Ok(requested.into_iter().collect())
}

/// Runs the requested stages in order, feeding each all earlier reports.
pub async fn run_pipeline(
    ctx: &AnalyticsContext,
    stages: &[Stage],
    backend: &dyn AnalyticsBackend,
) -> Result<AnalyticsBundle, AnalyticsError> {
    let stages = stage_prefix(stages)?;
    ctx.validate()?;
    let mut reports = Reports::default();
    let mut timings_ms = BTreeMap::new();
    for &stage in &stages {
        let wrap = |e: AnalyticsError| AnalyticsError::StageFailed {
            stage,
            source: Box::new(e),
        };
        let started = Instant::now();
        let report = backend.analyze(stage, ctx, &reports).await.map_err(wrap)?;
        if report.stage() != stage {
            return Err(wrap(AnalyticsError::Backend(format!(
                "backend answered {} for {stage}",
                report.stage()
            ))));
        }
        report.validate(&ctx.config).map_err(wrap)?;
        timings_ms.insert(stage, started.elapsed().as_secs_f64() * 1000.0);
        reports.insert(report);
    }
    Ok(AnalyticsBundle {
        backend: backend.name().to_string(),
        stages,
        reports,
        timings_ms,
    })
}
