//! Outer loop: fetch a plan, run it, and on a typed error ask the source
//! again with the error as feedback.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{run_inference, InferenceConfig, InferenceOutcome};
use crate::error::{Error, ErrorKind, Result};
use crate::rng::{stream_key, Lane};
use crate::steering::{parse_plan, ModelSet, SteeringPlan, PLAN_VERSION};
use crate::tasks::TaskSpec;
use crate::token_model::remote::{http_client, transport_error};

pub const DEFAULT_RETRIES: usize = 3;
pub const GENERATE_PLAN_PATH: &str = "/v1/generate_plan";
pub const PLAN_FILE_SUFFIX: &str = ".plan.json";

/// Anything that can hand out plan documents for a task.
pub trait PlanSource: Send + Sync {
    fn fetch_plan(&self, task: &TaskSpec, feedback: Option<&str>) -> Result<String>;
}

/// Plans keyed by task type, validated when loaded.
#[derive(Debug, Clone, Default)]
pub struct FixtureLibrary {
    plans: BTreeMap<String, String>,
}

impl FixtureLibrary {
    /// Load every `<task_type>.plan.json` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut lib = Self::default();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(task_type) = name.strip_suffix(PLAN_FILE_SUFFIX) {
                let doc = std::fs::read_to_string(entry.path())?;
                lib.insert(task_type, doc).map_err(|e| match e {
                    Error::ParseError { location, message } => {
                        Error::parse(format!("{name}: {location}"), message)
                    }
                    Error::SchemaViolation { field, message } => {
                        Error::schema(format!("{name}: {field}"), message)
                    }
                    other => other,
                })?;
            }
        }
        Ok(lib)
    }

    pub fn insert(&mut self, task_type: &str, document: String) -> Result<()> {
        parse_plan(&document)?;
        self.plans.insert(task_type.to_string(), document);
        Ok(())
    }

    pub fn task_types(&self) -> impl Iterator<Item = &str> {
        self.plans.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }
}

impl PlanSource for FixtureLibrary {
    /// The stored plan for the task type. Feedback does not change it.
    fn fetch_plan(&self, task: &TaskSpec, _feedback: Option<&str>) -> Result<String> {
        self.plans.get(&task.task_type).cloned().ok_or_else(|| {
            Error::schema(
                "task_type",
                format!("no fixture plan for {:?}", task.task_type),
            )
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GeneratePlanRequest {
    pub task: String,
    pub feedback: Option<String>,
    pub plan_version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GeneratePlanResponse {
    pub plan: serde_json::Value,
}

/// Client for a plan-generating service.
pub struct RemoteGenerator {
    url: String,
    template: Option<String>,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for RemoteGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteGenerator")
            .field("url", &self.url)
            .finish()
    }
}

impl RemoteGenerator {
    pub fn new(endpoint: &str) -> Result<Self> {
        Ok(Self {
            url: format!("{}{GENERATE_PLAN_PATH}", endpoint.trim_end_matches('/')),
            template: None,
            client: http_client()?,
        })
    }

    /// Prompt template with `{task}` and `{prior_error}` slots.
    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = Some(template.into());
        self
    }

    pub fn render_prompt(&self, task: &TaskSpec, feedback: Option<&str>) -> String {
        match &self.template {
            None => task.prompt_text.clone(),
            Some(t) => t
                .replace("{task}", &task.prompt_text)
                .replace("{prior_error}", feedback.unwrap_or("")),
        }
    }
}

impl PlanSource for RemoteGenerator {
    fn fetch_plan(&self, task: &TaskSpec, feedback: Option<&str>) -> Result<String> {
        let body = GeneratePlanRequest {
            task: self.render_prompt(task, feedback),
            feedback: feedback.map(str::to_string),
            plan_version: PLAN_VERSION,
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(transport_error)?;
        let parsed: GeneratePlanResponse = resp
            .json()
            .map_err(|e| Error::schema("plan", format!("malformed generator response: {e}")))?;
        let doc = serde_json::to_string_pretty(&parsed.plan).expect("json value serializes");
        parse_plan(&doc)?;
        Ok(doc)
    }
}

/// Short description of one attempt, kept in the loop's log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub attempt: usize,
    pub seed: u64,
    /// Plan document, absent when fetching failed.
    pub plan: Option<String>,
    pub feedback: Option<String>,
    pub error_kind: Option<ErrorKind>,
    pub error: Option<String>,
    pub selected_text: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LoopResult {
    /// Outcome of the last attempt.
    pub final_outcome: InferenceOutcome,
    /// Plan of the last attempt, when it parsed.
    pub final_plan: Option<SteeringPlan>,
    pub attempts: Vec<AttemptSummary>,
    pub retries_used: usize,
}

impl LoopResult {
    pub fn is_success(&self) -> bool {
        self.final_outcome.is_success()
    }
}

/// Every attempt ended in an error; the result carries the last one.
#[derive(Debug, Clone)]
pub struct SourceExhausted(pub Box<LoopResult>);

impl fmt::Display for SourceExhausted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = self
            .0
            .final_outcome
            .error
            .as_ref()
            .map(|e| e.to_string())
            .unwrap_or_default();
        write!(
            f,
            "plan source exhausted after {} attempts; last error: {last}",
            self.0.attempts.len()
        )
    }
}

impl std::error::Error for SourceExhausted {}

/// Seed for attempt `k`: the configured seed first, derived seeds after.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    if attempt == 0 {
        seed
    } else {
        stream_key(&[seed, Lane::Attempt as u64, attempt as u64])
    }
}

/// Fetch, run, and retry on error with feedback, for at most `max_attempts`
/// attempts in total. Only runtime errors trigger a retry; an answer that
/// later fails external verification is final.
pub fn steer(
    task: &TaskSpec,
    source: &dyn PlanSource,
    models: &ModelSet,
    config: &InferenceConfig,
    max_attempts: usize,
) -> std::result::Result<LoopResult, SourceExhausted> {
    assert!(max_attempts >= 1, "at least one attempt");
    let mut attempts = Vec::new();
    let mut feedback: Option<String> = None;
    let mut last: Option<(InferenceOutcome, Option<SteeringPlan>)> = None;
    for k in 0..max_attempts {
        let seed = attempt_seed(config.seed, k);
        let cfg = InferenceConfig {
            seed,
            ..config.clone()
        };
        let fetched = source.fetch_plan(task, feedback.as_deref());
        let parsed = fetched
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|doc| parse_plan(doc));
        let (outcome, plan) = match parsed {
            Ok(plan) => (run_inference(&plan, models, &cfg), Some(plan)),
            Err(e) => (failed_outcome(e), None),
        };
        attempts.push(AttemptSummary {
            attempt: k,
            seed,
            plan: fetched.ok(),
            feedback: feedback.clone(),
            error_kind: outcome.error.as_ref().map(Error::kind),
            error: outcome.error.as_ref().map(|e| e.to_string()),
            selected_text: outcome.selected_text().map(str::to_string),
        });
        let done = outcome.is_success();
        if let Some(err) = &outcome.error {
            feedback = Some(format_feedback(
                err,
                plan.as_ref(),
                outcome.diagnostics.steps_executed,
            ));
        }
        last = Some((outcome, plan));
        if done {
            break;
        }
    }
    let (final_outcome, final_plan) = last.expect("at least one attempt");
    let result = LoopResult {
        retries_used: attempts.len() - 1,
        final_outcome,
        final_plan,
        attempts,
    };
    if result.is_success() {
        Ok(result)
    } else {
        Err(SourceExhausted(Box::new(result)))
    }
}

fn failed_outcome(err: Error) -> InferenceOutcome {
    InferenceOutcome {
        candidates: Vec::new(),
        selected: None,
        selected_index: None,
        diagnostics: Default::default(),
        error: Some(err),
    }
}

/// Feedback text for the next attempt. Byte-stable for identical inputs.
pub fn format_feedback(
    error: &Error,
    plan: Option<&SteeringPlan>,
    steps_executed: usize,
) -> String {
    let mut out = format!(
        "The previous program failed with {}: {error}.",
        error.kind()
    );
    if let Some(i) = error.clause() {
        let kind = plan
            .and_then(|p| p.steps.get(i))
            .map(|c| c.kind_name())
            .unwrap_or("unknown");
        out.push_str(&format!(" Failing clause: steps[{i}] ({kind})."));
    }
    out.push_str(&format!(" Engine step: {steps_executed}."));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feedback_names_class_clause_and_step() {
        let plan = parse_plan(
            r#"{"plan_version": 1, "max_tokens": 3, "steps": [
                {"kind": "force_string", "text": "a"},
                {"kind": "masked_sample", "mask": {"kind": "token_ids", "ids": [0]}}]}"#,
        )
        .unwrap();
        let text = format_feedback(&Error::MaskEmpty { clause: Some(1) }, Some(&plan), 2);
        assert_eq!(
            text,
            "The previous program failed with MaskEmpty: token mask admits no probability mass (clause 1). \
             Failing clause: steps[1] (masked_sample). Engine step: 2."
        );
        assert_eq!(
            text,
            format_feedback(&Error::MaskEmpty { clause: Some(1) }, Some(&plan), 2)
        );
    }

    #[test]
    fn attempt_zero_keeps_seed() {
        assert_eq!(attempt_seed(7, 0), 7);
        assert_ne!(attempt_seed(7, 1), 7);
    }

    #[test]
    fn template_slots() {
        let g = RemoteGenerator::new("http://127.0.0.1:9")
            .unwrap()
            .with_template("Task: {task}\nError: {prior_error}");
        let task = TaskSpec {
            id: None,
            task_type: "t".into(),
            prompt_text: "do it".into(),
            constraints: vec![],
        };
        assert_eq!(
            g.render_prompt(&task, Some("boom")),
            "Task: do it\nError: boom"
        );
        assert_eq!(g.render_prompt(&task, None), "Task: do it\nError: ");
    }
}
