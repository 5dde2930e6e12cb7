//! Declarative steering plans.
//!
//! A plan document is a JSON object:
//!
//! ```json
//! {
//!   "plan_version": 1,
//!   "proposal_tag": "proposal",
//!   "prior_tag": "prior",
//!   "max_tokens": 24,
//!   "variables": {"target_chars": 82},
//!   "steps": [
//!     {"kind": "sample_until", "stop": {"token_count": 3}, "mask": {"kind": "char_class", "forbid": []}},
//!     {"kind": "force_string", "text": "Glasgow"},
//!     {"kind": "hint", "template": "remaining chars: {target_chars - char_count}"},
//!     {"kind": "loop", "until": {"substring": "."}, "max_iterations": 50,
//!      "body": [{"kind": "masked_sample", "mask": {"kind": "max_remaining_chars", "limit": 82}}]}
//!   ],
//!   "check": [{"kind": "char_count_exact", "count": 82}]
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::mask::MaskSpec;
use super::template::{Binding, Template};
use crate::error::{Error, Result};
use crate::tasks::ConstraintSpec;

pub const PLAN_VERSION: u32 = 1;
pub const DEFAULT_LOOP_BOUND: u32 = 1_000;
pub const MAX_LOOP_BOUND: u32 = 10_000;
pub const DEFAULT_PROPOSAL_TAG: &str = "proposal";
pub const DEFAULT_PRIOR_TAG: &str = "prior";

/// Variables every hint template may reference, computed from the particle.
pub const BUILTIN_VARIABLES: &[&str] = &["char_count", "word_count", "token_count"];

/// When a `sample_until` clause stops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopPredicate {
    /// The clause has appended this many tokens.
    TokenCount(usize),
    /// Text rendered from the tokens appended by the clause contains this.
    Substring(String),
    /// The particle emitted EOS.
    Eos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepClause {
    SampleUntil {
        stop: StopPredicate,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mask: Option<MaskSpec>,
        /// Clause-level bound; exceeding it is a `StepBudgetExceeded` error.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_tokens: Option<usize>,
    },
    ForceString {
        text: String,
    },
    MaskedSample {
        mask: MaskSpec,
        #[serde(default = "one")]
        count: usize,
    },
    Hint {
        template: String,
    },
    Loop {
        body: Vec<StepClause>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        until: Option<StopPredicate>,
        #[serde(default = "default_loop_bound")]
        max_iterations: u32,
    },
}

fn one() -> usize {
    1
}

fn default_loop_bound() -> u32 {
    DEFAULT_LOOP_BOUND
}

impl StepClause {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StepClause::SampleUntil { .. } => "sample_until",
            StepClause::ForceString { .. } => "force_string",
            StepClause::MaskedSample { .. } => "masked_sample",
            StepClause::Hint { .. } => "hint",
            StepClause::Loop { .. } => "loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringPlan {
    pub plan_version: u32,
    pub proposal_tag: String,
    pub prior_tag: String,
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variables: BTreeMap<String, Binding>,
    pub steps: Vec<StepClause>,
    #[serde(default)]
    pub check: Vec<ConstraintSpec>,
}

impl SteeringPlan {
    /// Minimal plan with default tags, mostly useful in tests.
    pub fn new(max_tokens: usize, steps: Vec<StepClause>, check: Vec<ConstraintSpec>) -> Self {
        Self {
            plan_version: PLAN_VERSION,
            proposal_tag: DEFAULT_PROPOSAL_TAG.into(),
            prior_tag: DEFAULT_PRIOR_TAG.into(),
            max_tokens,
            variables: BTreeMap::new(),
            steps,
            check,
        }
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Validate every invariant the parser enforces.
    pub fn validate(&self) -> Result<()> {
        if self.plan_version != PLAN_VERSION {
            return Err(Error::schema(
                "plan_version",
                format!("unsupported version {}", self.plan_version),
            ));
        }
        if self.max_tokens == 0 {
            return Err(Error::schema("max_tokens", "must be positive"));
        }
        if self.proposal_tag.is_empty() || self.prior_tag.is_empty() {
            return Err(Error::schema(
                "proposal_tag",
                "prompt tags must be nonempty",
            ));
        }
        for name in self.variables.keys() {
            if BUILTIN_VARIABLES.contains(&name.as_str()) {
                return Err(Error::schema(
                    format!("variables.{name}"),
                    "shadows a built-in variable",
                ));
            }
        }
        if self.steps.is_empty() {
            return Err(Error::schema("steps", "plan needs at least one step"));
        }
        validate_clauses(&self.steps, "steps", self)?;
        for (i, c) in self.check.iter().enumerate() {
            c.validate(&format!("check[{i}]"))?;
        }
        Ok(())
    }

    pub fn is_declared(&self, name: &str) -> bool {
        BUILTIN_VARIABLES.contains(&name) || self.variables.contains_key(name)
    }
}

fn validate_stop(stop: &StopPredicate, field: &str) -> Result<()> {
    match stop {
        StopPredicate::TokenCount(0) => Err(Error::schema(field, "token_count must be positive")),
        StopPredicate::Substring(s) if s.is_empty() => {
            Err(Error::schema(field, "substring must be nonempty"))
        }
        _ => Ok(()),
    }
}

fn validate_clauses(clauses: &[StepClause], path: &str, plan: &SteeringPlan) -> Result<()> {
    for (i, clause) in clauses.iter().enumerate() {
        let field = format!("{path}[{i}]");
        match clause {
            StepClause::SampleUntil {
                stop,
                mask,
                max_tokens,
            } => {
                validate_stop(stop, &format!("{field}.stop"))?;
                if let Some(m) = mask {
                    m.validate(&format!("{field}.mask"))?;
                }
                if *max_tokens == Some(0) {
                    return Err(Error::schema(
                        format!("{field}.max_tokens"),
                        "must be positive",
                    ));
                }
            }
            StepClause::ForceString { text } => {
                if text.is_empty() {
                    return Err(Error::schema(
                        format!("{field}.text"),
                        "forced text must be nonempty",
                    ));
                }
            }
            StepClause::MaskedSample { mask, count } => {
                mask.validate(&format!("{field}.mask"))?;
                if *count == 0 {
                    return Err(Error::schema(format!("{field}.count"), "must be positive"));
                }
            }
            StepClause::Hint { template } => {
                let t = Template::parse(template).map_err(|e| match e {
                    Error::SchemaViolation { message, .. } => {
                        Error::schema(format!("{field}.template"), message)
                    }
                    other => other,
                })?;
                if let Some(v) = t.variables().into_iter().find(|v| !plan.is_declared(v)) {
                    return Err(Error::schema(
                        format!("{field}.template"),
                        format!("undeclared variable `{v}`"),
                    ));
                }
            }
            StepClause::Loop {
                body,
                until,
                max_iterations,
            } => {
                if *max_iterations == 0 || *max_iterations > MAX_LOOP_BOUND {
                    return Err(Error::schema(
                        format!("{field}.max_iterations"),
                        format!("must be in 1..={MAX_LOOP_BOUND}, got {max_iterations}"),
                    ));
                }
                if body.is_empty() {
                    return Err(Error::schema(
                        format!("{field}.body"),
                        "loop body must be nonempty",
                    ));
                }
                if let Some(u) = until {
                    validate_stop(u, &format!("{field}.until"))?;
                }
                validate_clauses(body, &format!("{field}.body"), plan)?;
            }
        }
    }
    Ok(())
}

const TOP_LEVEL_FIELDS: &[&str] = &[
    "plan_version",
    "proposal_tag",
    "prior_tag",
    "max_tokens",
    "variables",
    "steps",
    "check",
];

/// Parse and validate a plan document.
///
/// Malformed JSON is a `ParseError` carrying line and column; a well-formed
/// document that breaks the schema is a `SchemaViolation` naming the field.
pub fn parse_plan(source: &str) -> Result<SteeringPlan> {
    let value: Value = serde_json::from_str(source).map_err(|e| Error::from_json(&e))?;
    plan_from_value(value)
}

pub fn plan_from_value(value: Value) -> Result<SteeringPlan> {
    let Value::Object(mut obj) = value else {
        return Err(Error::schema("$", "plan document must be an object"));
    };
    if let Some(k) = obj.keys().find(|k| !TOP_LEVEL_FIELDS.contains(&k.as_str())) {
        return Err(Error::schema(k.clone(), "unknown field"));
    }
    let plan_version: u32 = required(&mut obj, "plan_version")?;
    let proposal_tag: String =
        optional(&mut obj, "proposal_tag")?.unwrap_or_else(|| DEFAULT_PROPOSAL_TAG.into());
    let prior_tag: String =
        optional(&mut obj, "prior_tag")?.unwrap_or_else(|| DEFAULT_PRIOR_TAG.into());
    let max_tokens: usize = required(&mut obj, "max_tokens")?;
    let variables: BTreeMap<String, Binding> = optional(&mut obj, "variables")?.unwrap_or_default();
    let steps = match obj.remove("steps") {
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value::<StepClause>(v)
                    .map_err(|e| Error::schema(format!("steps[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?,
        Some(_) => return Err(Error::schema("steps", "expected an array")),
        None => return Err(Error::schema("steps", "missing field")),
    };
    let check = match obj.remove("check") {
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value::<ConstraintSpec>(v)
                    .map_err(|e| Error::schema(format!("check[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?,
        Some(Value::Null) | None => Vec::new(),
        Some(_) => return Err(Error::schema("check", "expected an array")),
    };
    let plan = SteeringPlan {
        plan_version,
        proposal_tag,
        prior_tag,
        max_tokens,
        variables,
        steps,
        check,
    };
    plan.validate()?;
    Ok(plan)
}

fn required<T: serde::de::DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<T> {
    optional(obj, key)?.ok_or_else(|| Error::schema(key, "missing field"))
}

fn optional<T: serde::de::DeserializeOwned>(
    obj: &mut Map<String, Value>,
    key: &str,
) -> Result<Option<T>> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| Error::schema(key, e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ErrorKind;

    const GLASGOW: &str = include_str!("../../fixtures/plans/sent_02.plan.json");

    #[test]
    fn glasgow_fixture_alternates_sampling_and_forcing() {
        let plan = parse_plan(GLASGOW).unwrap();
        let kinds: Vec<&str> = plan.steps.iter().map(StepClause::kind_name).collect();
        assert_eq!(
            kinds,
            [
                "sample_until",
                "force_string",
                "sample_until",
                "force_string",
                "sample_until",
                "force_string",
                "sample_until"
            ]
        );
        let samples = kinds.iter().filter(|k| **k == "sample_until").count();
        let forces = kinds.iter().filter(|k| **k == "force_string").count();
        assert_eq!((samples, forces), (4, 3));
        assert_eq!(plan.check.len(), 2);
    }

    #[test]
    fn round_trips_through_document() {
        let plan = parse_plan(GLASGOW).unwrap();
        assert_eq!(parse_plan(&plan.to_document()).unwrap(), plan);
    }

    #[test]
    fn loop_bound_enforced() {
        let doc = r#"{"plan_version": 1, "max_tokens": 4, "steps": [
            {"kind": "loop", "max_iterations": 1000000000, "body": [{"kind": "force_string", "text": "a"}]}
        ]}"#;
        match parse_plan(doc).unwrap_err() {
            Error::SchemaViolation { field, .. } => assert_eq!(field, "steps[0].max_iterations"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn malformed_document_is_parse_error() {
        let err = parse_plan("{\"plan_version\": 1,\n \"steps\": [").unwrap_err();
        assert_eq!(err.kind(), ErrorKind::ParseError);
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn schema_violations_name_the_field() {
        let cases = [
            (
                r#"{"plan_version": 2, "max_tokens": 1, "steps": [{"kind": "force_string", "text": "a"}]}"#,
                "plan_version",
            ),
            (
                r#"{"plan_version": 1, "steps": [{"kind": "force_string", "text": "a"}]}"#,
                "max_tokens",
            ),
            (
                r#"{"plan_version": 1, "max_tokens": 1, "steps": [{"kind": "teleport"}]}"#,
                "steps[0]",
            ),
            (
                r#"{"plan_version": 1, "max_tokens": 1, "steps": [], "bogus": 1}"#,
                "bogus",
            ),
            (
                r#"{"plan_version": 1, "max_tokens": 1, "steps": [{"kind": "hint", "template": "{k}"}]}"#,
                "steps[0].template",
            ),
            (
                r#"{"plan_version": 1, "max_tokens": 1, "steps": [{"kind": "force_string", "text": "a"}],
                   "check": [{"kind": "contains_words", "words": []}]}"#,
                "check[0].words",
            ),
            (
                r#"{"plan_version": 1, "max_tokens": 1, "steps": [{"kind": "loop", "body": []}]}"#,
                "steps[0].body",
            ),
            (
                r#"{"plan_version": 1, "max_tokens": 1, "steps": [{"kind": "sample_until", "stop": {"token_count": 0}}]}"#,
                "steps[0].stop",
            ),
        ];
        for (doc, want) in cases {
            match parse_plan(doc) {
                Err(Error::SchemaViolation { field, .. }) => assert_eq!(field, want, "{doc}"),
                other => panic!("{doc}: {other:?}"),
            }
        }
    }

    #[test]
    fn declared_variables_are_accepted() {
        let doc = r#"{"plan_version": 1, "max_tokens": 3, "variables": {"k": 12},
            "steps": [{"kind": "hint", "template": "remaining chars: {k - char_count}"},
                      {"kind": "sample_until", "stop": "eos"}]}"#;
        let plan = parse_plan(doc).unwrap();
        assert_eq!(plan.variables["k"], Binding::Int(12));
        assert_eq!(plan.proposal_tag, DEFAULT_PROPOSAL_TAG);
    }
}
