use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};

use super::context::AnalyticsContext;
use super::pipeline::Reports;
use super::prompt::PromptTemplates;
use super::report::StageReport;
use super::stages::{describe, diagnose, predict, prescribe};
use super::{AnalyticsError, Stage};

#[async_trait]
pub trait AnalyticsBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Produces the report of `stage` given the reports of all earlier stages.
    async fn analyze(
        &self,
        stage: Stage,
        ctx: &AnalyticsContext,
        prior: &Reports,
    ) -> Result<StageReport, AnalyticsError>;
}

fn missing(stage: Stage) -> AnalyticsError {
    AnalyticsError::InvalidContext(format!("{stage} report is required"))
}

/// Statistical reference backend; a pure function of the context.
#[derive(Debug, Clone, Copy, Default)]
pub struct Deterministic;

impl Deterministic {
    pub fn analyze_sync(
        &self,
        stage: Stage,
        ctx: &AnalyticsContext,
        prior: &Reports,
    ) -> Result<StageReport, AnalyticsError> {
        let descriptive = || {
            prior
                .descriptive
                .as_ref()
                .ok_or_else(|| missing(Stage::Descriptive))
        };
        let diagnostic = || {
            prior
                .diagnostic
                .as_ref()
                .ok_or_else(|| missing(Stage::Diagnostic))
        };
        Ok(match stage {
            Stage::Descriptive => StageReport::Descriptive(describe(ctx)?),
            Stage::Diagnostic => StageReport::Diagnostic(diagnose(ctx, descriptive()?)),
            Stage::Predictive => {
                StageReport::Predictive(predict(ctx, descriptive()?, diagnostic()?)?)
            }
            Stage::Prescriptive => {
                let predictive = prior
                    .predictive
                    .as_ref()
                    .ok_or_else(|| missing(Stage::Predictive))?;
                StageReport::Prescriptive(prescribe(ctx, predictive, &ctx.profile)?)
            }
        })
    }
}

#[async_trait]
impl AnalyticsBackend for Deterministic {
    fn name(&self) -> &str {
        "deterministic"
    }

    async fn analyze(
        &self,
        stage: Stage,
        ctx: &AnalyticsContext,
        prior: &Reports,
    ) -> Result<StageReport, AnalyticsError> {
        self.analyze_sync(stage, ctx, prior)
    }
}

fn parse_reply(stage: Stage, text: &str) -> Result<StageReport, AnalyticsError> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| AnalyticsError::Backend(format!("{stage} reply is not JSON: {e}")))?;
    StageReport::from_value(stage, v)
}

/// Answers every stage with a canned reply after rendering its prompt.
#[derive(Debug, Default)]
pub struct MockLm {
    templates: PromptTemplates,
    replies: BTreeMap<Stage, String>,
    prompts: Mutex<Vec<(Stage, String)>>,
}

impl MockLm {
    pub fn new(templates: PromptTemplates) -> Self {
        MockLm {
            templates,
            ..Default::default()
        }
    }

    pub fn with_reply(mut self, stage: Stage, reply: impl Into<String>) -> Self {
        self.replies.insert(stage, reply.into());
        self
    }

    /// Prompts rendered so far, in order.
    pub fn prompts(&self) -> Vec<(Stage, String)> {
        self.prompts.lock().expect("prompt log").clone()
    }
}

#[async_trait]
impl AnalyticsBackend for MockLm {
    fn name(&self) -> &str {
        "mock"
    }

    async fn analyze(
        &self,
        stage: Stage,
        ctx: &AnalyticsContext,
        prior: &Reports,
    ) -> Result<StageReport, AnalyticsError> {
        let prompt = self.templates.render(stage, ctx, prior)?;
        self.prompts
            .lock()
            .expect("prompt log")
            .push((stage, prompt));
        let reply = self
            .replies
            .get(&stage)
            .ok_or_else(|| AnalyticsError::Backend(format!("no canned reply for {stage}")))?;
        parse_reply(stage, reply)
    }
}

/// Posts `{"stage", "prompt"}` to an HTTP endpoint and expects the stage
/// report document as the response body.
#[derive(Debug, Clone)]
pub struct RemoteLm {
    url: String,
    templates: PromptTemplates,
    client: reqwest::Client,
}

impl RemoteLm {
    pub fn new(
        url: impl Into<String>,
        templates: PromptTemplates,
        timeout: Duration,
    ) -> Result<Self, AnalyticsError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AnalyticsError::Backend(e.to_string()))?;
        Ok(RemoteLm {
            url: url.into(),
            templates,
            client,
        })
    }
}

#[async_trait]
impl AnalyticsBackend for RemoteLm {
    fn name(&self) -> &str {
        "remote"
    }

    async fn analyze(
        &self,
        stage: Stage,
        ctx: &AnalyticsContext,
        prior: &Reports,
    ) -> Result<StageReport, AnalyticsError> {
        let prompt = self.templates.render(stage, ctx, prior)?;
        let backend = |e: reqwest::Error| AnalyticsError::Backend(format!("{}: {e}", self.url));
        let response = self
            .client
            .post(&self.url)
            .json(&json!({ "stage": stage, "prompt": prompt }))
            .send()
            .await
            .map_err(backend)?;
        if !response.status().is_success() {
            return Err(AnalyticsError::Backend(format!(
                "{} answered {}",
                self.url,
                response.status()
            )));
        }
        let body = response.text().await.map_err(backend)?;
        parse_reply(stage, &body)
    }
}
