//! Per-stage prompt templates with `{name}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::{json, Value};

use super::context::AnalyticsContext;
use super::pipeline::Reports;
use super::{AnalyticsError, Stage};
use crate::json;

pub const PLACEHOLDERS: [&str; 6] = [
    "window",
    "series_summary",
    "statistics",
    "anomalies",
    "forecasts",
    "message_profile",
];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    templates: BTreeMap<Stage, String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::embedded()
    }
}

impl PromptTemplates {
    /// The templates shipped with the crate.
    pub fn embedded() -> Self {
        PromptTemplates {
            templates: BTreeMap::from([
                (
                    Stage::Descriptive,
                    include_str!("../../templates/descriptive.tmpl").to_string(),
                ),
                (
                    Stage::Diagnostic,
                    include_str!("../../templates/diagnostic.tmpl").to_string(),
                ),
                (
                    Stage::Predictive,
                    include_str!("../../templates/predictive.tmpl").to_string(),
                ),
                (
                    Stage::Prescriptive,
                    include_str!("../../templates/prescriptive.tmpl").to_string(),
                ),
            ]),
        }
    }

    /// Reads `<stage>.tmpl` for every stage from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, AnalyticsError> {
        let mut templates = BTreeMap::new();
        for stage in Stage::CANONICAL {
            let path = dir.join(format!("{stage}.tmpl"));
            let text = std::fs::read_to_string(&path).map_err(|e| {
                AnalyticsError::InvalidContext(format!("template {}: {e}", path.display()))
            })?;
            templates.insert(stage, text);
        }
        Ok(PromptTemplates { templates })
    }

    pub fn with_template(mut self, stage: Stage, text: impl Into<String>) -> Self {
        self.templates.insert(stage, text.into());
        self
    }

    pub fn template(&self, stage: Stage) -> &str {
        &self.templates[&stage]
    }

    /// Fills the stage template. Every placeholder must be known and
    /// available at `stage` given the prior reports.
    pub fn render(
        &self,
        stage: Stage,
        ctx: &AnalyticsContext,
        prior: &Reports,
    ) -> Result<String, AnalyticsError> {
        let template = self.template(stage);
        let mut out = String::with_capacity(template.len());
        let mut last = 0;
        for caps in placeholder_re().captures_iter(template) {
            let whole = caps.get(0).expect("match");
            let name = &caps[1];
            let value =
                resolve(name, stage, ctx, prior).ok_or_else(|| AnalyticsError::Template {
                    placeholder: name.to_string(),
                })?;
            out.push_str(&template[last..whole.start()]);
            out.push_str(&json::to_canonical_string(&value));
            last = whole.end();
        }
        out.push_str(&template[last..]);
        Ok(out)
    }
}

fn series_summary(ctx: &AnalyticsContext) -> Value {
    Value::Array(
        ctx.series
            .iter()
            .map(|(k, s)| {
                json!({
                    "entity": k.entity,
                    "metric": k.metric,
                    "count": s.len(),
                    "first_ms": s.first().map(|x| x.timestamp_ms),
                    "last_ms": s.last().map(|x| x.timestamp_ms),
                })
            })
            .collect(),
    )
}

fn resolve(name: &str, stage: Stage, ctx: &AnalyticsContext, prior: &Reports) -> Option<Value> {
    match name {
        "window" => Some(json!({ "from": ctx.window.from, "to": ctx.window.to })),
        "series_summary" => Some(series_summary(ctx)),
        "statistics" if stage > Stage::Descriptive => prior
            .descriptive
            .as_ref()
            .and_then(|r| serde_json::to_value(r).ok()),
        "anomalies" if stage > Stage::Diagnostic => prior
            .diagnostic
            .as_ref()
            .and_then(|r| serde_json::to_value(r).ok()),
        "forecasts" if stage > Stage::Predictive => prior
            .predictive
            .as_ref()
            .and_then(|r| serde_json::to_value(r).ok()),
        "message_profile" if stage == Stage::Prescriptive => {
            serde_json::to_value(&ctx.profile).ok()
        }
        _ => None,
    }
}
