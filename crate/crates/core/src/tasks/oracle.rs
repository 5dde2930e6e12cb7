//! Exact target distribution of a plan by exhaustive enumeration.
//!
//! This interpreter is deliberately separate from the particle executor: it
//! walks every token choice at every sampling point and multiplies the
//! target factors directly (prior probability for a sampled token, proposal
//! probability for a forced one, the check as a 0/1 factor), so it can serve
//! as an oracle for the samplers.

use std::cell::Cell;
use std::collections::BTreeMap;

use super::constraints::satisfies;
use crate::error::{Error, Result};
use crate::steering::{
    Binding, Bindings, MaskSpec, ModelSet, SteeringPlan, StepClause, StopPredicate, Template,
};
use crate::token_model::{ModelQuery, TokenId, HINT_PREFIX};

pub const ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    /// Normalized probability of each finished token sequence.
    pub probs: BTreeMap<Vec<TokenId>, f64>,
    /// Total unnormalized mass, the normalizing constant.
    pub z: f64,
}

#[derive(Debug, Clone)]
struct Branch {
    tokens: Vec<TokenId>,
    hints: Vec<String>,
    mass: f64,
    done: bool,
}

struct Oracle<'a> {
    plan: &'a SteeringPlan,
    models: &'a ModelSet,
    visited: Cell<f64>,
}

/// Enumerate `plan` under `models`.
///
/// Paths whose clause raises `MaskEmpty` or `StepBudgetExceeded` carry no
/// mass, mirroring failed particles. Fails with `EnumerationTooLarge` when
/// `|V|^max_tokens` exceeds the limit or enumeration visits more nodes than
/// that, and with `AllParticlesDead` when no mass remains.
pub fn brute_force_target(plan: &SteeringPlan, models: &ModelSet) -> Result<TargetTable> {
    let v = models.vocabulary().size() as f64;
    let paths = v.powi(plan.max_tokens as i32);
    if paths > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            paths,
            limit: ENUMERATION_LIMIT,
        });
    }
    let oracle = Oracle {
        plan,
        models,
        visited: Cell::new(0.0),
    };
    let root = Branch {
        tokens: Vec::new(),
        hints: Vec::new(),
        mass: 1.0,
        done: false,
    };
    let mut leaves = Vec::new();
    oracle.seq(&plan.steps, root, &mut leaves)?;

    let vocab = models.vocabulary();
    let mut probs: BTreeMap<Vec<TokenId>, f64> = BTreeMap::new();
    for leaf in leaves {
        let text = leaf
            .tokens
            .iter()
            .filter(|&&t| vocab.is_text_token(t))
            .map(|&t| vocab.token_text(t))
            .collect::<Vec<_>>()
            .join(vocab.separator());
        if leaf.mass > 0.0 && satisfies(&plan.check, &text) {
            *probs.entry(leaf.tokens).or_default() += leaf.mass;
        }
    }
    let z: f64 = probs.values().sum();
    if !(z > 0.0) {
        return Err(Error::AllParticlesDead);
    }
    for p in probs.values_mut() {
        *p /= z;
    }
    Ok(TargetTable { probs, z })
}

impl Oracle<'_> {
    fn visit(&self) -> Result<()> {
        let n = self.visited.get() + 1.0;
        self.visited.set(n);
        if n > ENUMERATION_LIMIT {
            return Err(Error::EnumerationTooLarge {
                paths: n,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }

    fn seal(&self, mut b: Branch) -> Branch {
        if b.tokens.len() >= self.plan.max_tokens
            || b.tokens.last() == Some(&self.models.vocabulary().eos_id())
        {
            b.done = true;
        }
        b
    }

    fn seq(&self, clauses: &[StepClause], b: Branch, out: &mut Vec<Branch>) -> Result<()> {
        let Some((head, rest)) = clauses.split_first().filter(|_| !b.done) else {
            out.push(b);
            return Ok(());
        };
        let mut mid = Vec::new();
        dropping_failures(self.clause(head, b, &mut mid))?;
        for m in mid {
            self.seq(rest, m, out)?;
        }
        Ok(())
    }

    fn clause(&self, clause: &StepClause, b: Branch, out: &mut Vec<Branch>) -> Result<()> {
        match clause {
            StepClause::ForceString { text } => {
                let mut forced = self.models.vocabulary().tokenize(text)?;
                forced.truncate(self.plan.max_tokens.saturating_sub(b.tokens.len()));
                let mut b = b;
                let mut factor = 1.0;
                for &t in &forced {
                    let q =
                        ModelQuery::new(&b.tokens, &self.plan.proposal_tag).with_hints(&b.hints);
                    factor *= self.models.proposal.next_distribution(&q)?[t as usize];
                    b.tokens.push(t);
                }
                b.mass *= factor;
                if b.mass > 0.0 {
                    out.push(self.seal(b));
                }
                Ok(())
            }
            StepClause::SampleUntil {
                stop,
                mask,
                max_tokens,
            } => {
                let start = b.tokens.len();
                self.sample_until(stop, mask.as_ref(), *max_tokens, start, b, out)
            }
            StepClause::MaskedSample { mask, count } => self.masked(mask, *count, b, out),
            StepClause::Hint { template } => {
                let mut b = b;
                let text = Template::parse(template)?.render(&self.bindings(&b))?;
                b.hints.push(format!("{HINT_PREFIX}{text}"));
                out.push(b);
                Ok(())
            }
            StepClause::Loop {
                body,
                until,
                max_iterations,
            } => {
                let entry = b.tokens.len();
                self.iterate(body, until.as_ref(), *max_iterations, entry, 0, b, out)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn iterate(
        &self,
        body: &[StepClause],
        until: Option<&StopPredicate>,
        max: u32,
        entry: usize,
        done_iterations: u32,
        b: Branch,
        out: &mut Vec<Branch>,
    ) -> Result<()> {
        let mut after = Vec::new();
        self.seq(body, b, &mut after)?;
        let iterations = done_iterations + 1;
        for nb in after {
            if nb.done {
                out.push(nb);
                continue;
            }
            let exit = match until {
                Some(pred) if self.stop(pred, &nb.tokens[entry..]) => true,
                Some(_) if iterations >= max => continue,
                Some(_) => false,
                None => iterations >= max,
            };
            if exit {
                out.push(nb);
            } else {
                self.iterate(body, until, max, entry, iterations, nb, out)?;
            }
        }
        Ok(())
    }

    fn sample_until(
        &self,
        stop: &StopPredicate,
        mask: Option<&MaskSpec>,
        bound: Option<usize>,
        start: usize,
        b: Branch,
        out: &mut Vec<Branch>,
    ) -> Result<()> {
        if b.tokens.len() >= self.plan.max_tokens {
            out.push(self.seal(b));
            return Ok(());
        }
        if bound.is_some_and(|k| b.tokens.len() - start >= k) {
            return Err(Error::StepBudgetExceeded {
                clause: None,
                bound: bound.unwrap_or(0) as u64,
            });
        }
        for nb in self.expand(mask, &b)? {
            if nb.done || self.stop(stop, &nb.tokens[start..]) {
                out.push(nb);
            } else {
                dropping_failures(self.sample_until(stop, mask, bound, start, nb, out))?;
            }
        }
        Ok(())
    }

    fn masked(
        &self,
        mask: &MaskSpec,
        remaining: usize,
        b: Branch,
        out: &mut Vec<Branch>,
    ) -> Result<()> {
        if remaining == 0 || b.tokens.len() >= self.plan.max_tokens {
            out.push(self.seal(b));
            return Ok(());
        }
        for nb in self.expand(Some(mask), &b)? {
            if nb.done {
                out.push(nb);
            } else {
                dropping_failures(self.masked(mask, remaining - 1, nb, out))?;
            }
        }
        Ok(())
    }

    /// Every one-token extension with its target factor: the prior
    /// probability on tokens the masked proposal can produce.
    fn expand(&self, mask: Option<&MaskSpec>, b: &Branch) -> Result<Vec<Branch>> {
        let vocab = self.models.vocabulary();
        let q = self.models.proposal.next_distribution(
            &ModelQuery::new(&b.tokens, &self.plan.proposal_tag).with_hints(&b.hints),
        )?;
        let p = self
            .models
            .prior
            .next_distribution(&ModelQuery::new(&b.tokens, &self.plan.prior_tag))?;
        let allowed: Vec<bool> = match mask {
            Some(m) => {
                let m = m.resolve(vocab, &b.tokens)?;
                (0..vocab.size()).map(|t| m.allows(t as TokenId)).collect()
            }
            None => vec![true; vocab.size()],
        };
        if !(0..vocab.size()).any(|t| allowed[t] && q[t] > 0.0) {
            return Err(Error::MaskEmpty { clause: None });
        }
        let mut out = Vec::new();
        for t in 0..vocab.size() {
            if !(allowed[t] && q[t] > 0.0 && p[t] > 0.0) {
                continue;
            }
            self.visit()?;
            let mut nb = b.clone();
            nb.tokens.push(t as TokenId);
            nb.mass *= p[t];
            out.push(self.seal(nb));
        }
        Ok(out)
    }

    fn stop(&self, pred: &StopPredicate, appended: &[TokenId]) -> bool {
        let vocab = self.models.vocabulary();
        match pred {
            StopPredicate::TokenCount(k) => appended.len() >= *k,
            StopPredicate::Eos => appended.contains(&vocab.eos_id()),
            StopPredicate::Substring(s) => {
                let text: Vec<&str> = appended
                    .iter()
                    .filter(|&&t| vocab.is_text_token(t))
                    .map(|&t| vocab.token_text(t))
                    .collect();
                text.join(vocab.separator()).contains(s.as_str())
            }
        }
    }

    fn bindings(&self, b: &Branch) -> Bindings {
        let vocab = self.models.vocabulary();
        let text: Vec<&str> = b
            .tokens
            .iter()
            .filter(|&&t| vocab.is_text_token(t))
            .map(|&t| vocab.token_text(t))
            .collect();
        let text = text.join(vocab.separator());
        let mut out: Bindings = self.plan.variables.clone();
        out.insert(
            "char_count".into(),
            Binding::Int(text.chars().count() as i64),
        );
        out.insert(
            "word_count".into(),
            Binding::Int(text.split_whitespace().count() as i64),
        );
        out.insert("token_count".into(), Binding::Int(b.tokens.len() as i64));
        out
    }
}

/// Paths that fail with a per-particle error simply carry no mass.
fn dropping_failures(r: Result<()>) -> Result<()> {
    match r {
        Err(Error::MaskEmpty { .. } | Error::StepBudgetExceeded { .. }) => Ok(()),
        other => other,
    }
}
