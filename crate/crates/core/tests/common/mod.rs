#![allow(dead_code)]

pub mod naive;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use steersmc::engine::InferenceOutcome;
use steersmc::steering::{parse_plan, ModelSet, SteeringPlan};
use steersmc::token_model::{TokenId, TokenModel};

pub const ENUMERABLE: [&str; 5] = [
    "masked_pair",
    "char_budget",
    "two_prompts",
    "bounded_loop",
    "hinted",
];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn table(rel: &str) -> Arc<TokenModel> {
    Arc::new(TokenModel::load_table(&read(rel)).unwrap())
}

pub fn plan(rel: &str) -> SteeringPlan {
    parse_plan(&read(rel)).unwrap()
}

/// Model and plan of one enumerable fixture.
pub fn enumerable(name: &str) -> (SteeringPlan, ModelSet) {
    let model = table(&format!("enumerable/{name}.model.json"));
    (
        plan(&format!("enumerable/{name}.plan.json")),
        ModelSet::single(model),
    )
}

pub fn toy_models() -> ModelSet {
    ModelSet::single(table("toy/toy.model.json"))
}

/// Self-normalized candidate law: normalized weight summed per sequence.
pub fn candidate_law(outcome: &InferenceOutcome) -> BTreeMap<Vec<TokenId>, f64> {
    let mut law = BTreeMap::new();
    for c in &outcome.candidates {
        if c.normalized_weight > 0.0 {
            *law.entry(c.tokens.clone()).or_insert(0.0) += c.normalized_weight;
        }
    }
    law
}

/// Total variation between two probability tables, both summing to one.
pub fn tv(p: &BTreeMap<Vec<TokenId>, f64>, q: &BTreeMap<Vec<TokenId>, f64>) -> f64 {
    let keys: std::collections::BTreeSet<_> = p.keys().chain(q.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}
