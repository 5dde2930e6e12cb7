use std::collections::BTreeMap;

use crate::error::Result;
use crate::token_model::{TokenId, TokenModel};

/// Weighted Pass@1: the chance that one weight-proportional draw passes.
///
/// Each entry is `(log_weight, passed)`. A `None` or negative-infinite
/// weight contributes nothing. Returns 0 when no weight is left.
pub fn weighted_pass_at_1(candidates: &[(Option<f64>, bool)]) -> f64 {
    let finite = || {
        candidates
            .iter()
            .filter_map(|(w, p)| w.filter(|w| w.is_finite()).map(|w| (w, *p)))
    };
    let Some(max) = finite().map(|(w, _)| w).reduce(f64::max) else {
        return 0.0;
    };
    let (mut pass, mut total) = (0.0, 0.0);
    for (w, p) in finite() {
        let e = (w - max).exp();
        total += e;
        if p {
            pass += e;
        }
    }
    pass / total
}

/// Pass@1 for methods that report no weights: the pass fraction.
pub fn uniform_pass_at_1(passed: &[bool]) -> f64 {
    if passed.is_empty() {
        return 0.0;
    }
    passed.iter().filter(|p| **p).count() as f64 / passed.len() as f64
}

/// `½ Σ |p(s) - count(s)/n|` between a probability table and sample counts.
pub fn total_variation<K: Ord>(p: &BTreeMap<K, f64>, counts: &BTreeMap<K, f64>) -> f64 {
    let n: f64 = counts.values().sum();
    let mut keys: Vec<&K> = p.keys().chain(counts.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| {
            let a = p.get(k).copied().unwrap_or(0.0);
            let b = counts.get(k).copied().unwrap_or(0.0) / n;
            (a - b).abs()
        })
        .sum::<f64>()
}

/// Mean per-token log-probability under the prior; higher reads as more fluent.
/// Empty sequences score 0.
pub fn coherency_proxy(tokens: &[TokenId], prior: &TokenModel, prompt_tag: &str) -> Result<f64> {
    if tokens.is_empty() {
        return Ok(0.0);
    }
    Ok(prior.sequence_logprob(&[], tokens, prompt_tag)? / tokens.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_cases() {
        let uniform = [
            (Some(0.0), true),
            (Some(0.0), false),
            (Some(0.0), true),
            (Some(0.0), false),
        ];
        assert_eq!(weighted_pass_at_1(&uniform), 0.5);
        let w = weighted_pass_at_1(&[(Some(3f64.ln()), true), (Some(0.0), false)]);
        assert!((w - 0.75).abs() < 1e-12);
        assert_eq!(weighted_pass_at_1(&[(None, true), (Some(0.0), false)]), 0.0);
        assert_eq!(weighted_pass_at_1(&[(None, true)]), 0.0);
        assert_eq!(uniform_pass_at_1(&[true, false, false, false]), 0.25);
    }

    #[test]
    fn tv_distance() {
        let p: BTreeMap<&str, f64> = [("ab", 0.5), ("bb", 0.5)].into();
        let c: BTreeMap<&str, f64> = [("ab", 3.0), ("bb", 1.0)].into();
        assert!((total_variation(&p, &c) - 0.25).abs() < 1e-15);
        let stray: BTreeMap<&str, f64> = [("aa", 1.0)].into();
        assert_eq!(total_variation(&p, &stray), 1.0);
    }
}
