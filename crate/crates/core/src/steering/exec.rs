//! The step function: advance one particle by one generating clause.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::mask::MaskSpec;
use super::particle::{Frame, Particle, Status};
use super::plan::{SteeringPlan, StepClause, StopPredicate};
use super::template::Bindings;
use super::{run_check, ModelSet};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::token_model::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepUpdate {
    pub appended_tokens: Vec<TokenId>,
    pub log_score_update: f64,
    pub finished: bool,
}

struct Ctx<'a> {
    plan: &'a SteeringPlan,
    models: &'a ModelSet,
    deadline: Option<Instant>,
}

impl Ctx<'_> {
    fn tick(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Error::Timeout),
            _ => Ok(()),
        }
    }

    fn full(&self, p: &Particle) -> bool {
        p.tokens.len() >= self.plan.max_tokens
    }

    fn bindings(&self, p: &Particle) -> Bindings {
        let mut b = p.builtin_bindings(self.models.vocabulary());
        b.extend(
            self.plan
                .variables
                .iter()
                .map(|(k, v)| (k.clone(), v.clone())),
        );
        b
    }
}

/// Run the particle's next generating clause to completion.
///
/// Hint clauses and loop bookkeeping around it execute without consuming a
/// step. The particle finishes when it emits EOS, reaches the plan's
/// `max_tokens`, or runs out of clauses; the check clause then either passes
/// or zeroes the weight. Errors carry the index of the top-level clause that
/// raised them and leave the particle untouched beyond what had already been
/// appended.
pub fn execute_step(
    plan: &SteeringPlan,
    particle: &mut Particle,
    models: &ModelSet,
    rng: &mut StreamRng,
    deadline: Option<Instant>,
) -> Result<StepUpdate> {
    assert_eq!(
        particle.status,
        Status::Active,
        "execute_step on a finished particle"
    );
    let ctx = Ctx {
        plan,
        models,
        deadline,
    };
    let start_len = particle.tokens.len();
    let start_weight = particle.log_weight;
    particle.steps_taken += 1;
    let mut delta = 0.0;
    let clause_idx = |p: &Particle| p.frames[0].index;

    let mut run = |particle: &mut Particle, delta: &mut f64| -> Result<bool> {
        if !settle(&ctx, particle)? {
            return Ok(true);
        }
        let clause = current(plan, &particle.frames).clone();
        let ended = run_clause(&ctx, &clause, particle, rng, delta)?;
        *particle.frames.last_mut().expect("frame") =
            advanced(particle.frames.last().expect("frame"));
        if ended || ctx.full(particle) {
            return Ok(true);
        }
        Ok(!settle(&ctx, particle)?)
    };
    let finished = run(particle, &mut delta).map_err(|e| e.with_clause(clause_idx(particle)))?;
    if finished {
        particle.status = Status::Done;
        let ok = run_check(plan, models.vocabulary(), &particle.tokens);
        particle.passed_check = Some(ok);
        if !ok {
            delta = f64::NEG_INFINITY;
            particle.log_weight = f64::NEG_INFINITY;
        }
    }
    debug_assert!(
        start_weight == f64::NEG_INFINITY || particle.log_weight == f64::NEG_INFINITY || {
            (particle.log_weight - start_weight - delta).abs() <= 1e-9 * (1.0 + delta.abs())
        }
    );
    Ok(StepUpdate {
        appended_tokens: particle.tokens[start_len..].to_vec(),
        log_score_update: delta,
        finished,
    })
}

fn advanced(f: &Frame) -> Frame {
    Frame {
        index: f.index + 1,
        ..f.clone()
    }
}

fn clauses_at<'p>(plan: &'p SteeringPlan, frames: &[Frame]) -> &'p [StepClause] {
    let mut list = plan.steps.as_slice();
    for f in frames {
        match &list[f.index] {
            StepClause::Loop { body, .. } => list = body,
            _ => unreachable!("non-loop frame parent"),
        }
    }
    list
}

fn current<'p>(plan: &'p SteeringPlan, frames: &[Frame]) -> &'p StepClause {
    let (last, parents) = frames.split_last().expect("frame");
    &clauses_at(plan, parents)[last.index]
}

/// Move the cursor to the next generating clause, executing hints and loop
/// control on the way. Returns false when the plan is exhausted.
fn settle(ctx: &Ctx<'_>, p: &mut Particle) -> Result<bool> {
    loop {
        let depth = p.frames.len() - 1;
        let list = clauses_at(ctx.plan, &p.frames[..depth]);
        let idx = p.frames[depth].index;
        if idx >= list.len() {
            if depth == 0 {
                return Ok(false);
            }
            let parent = &p.frames[..depth];
            let StepClause::Loop {
                until,
                max_iterations,
                ..
            } = current(ctx.plan, parent)
            else {
                unreachable!("loop frame without loop clause");
            };
            let frame = &mut p.frames[depth];
            frame.iteration += 1;
            let done = match until {
                Some(pred) => {
                    let entry = frame.entry_len;
                    let iteration = frame.iteration;
                    if stop_holds(ctx, pred, &p.tokens[entry..]) {
                        true
                    } else if iteration >= *max_iterations {
                        return Err(Error::StepBudgetExceeded {
                            clause: None,
                            bound: *max_iterations as u64,
                        });
                    } else {
                        false
                    }
                }
                None => frame.iteration >= *max_iterations,
            };
            if done {
                p.frames.pop();
                p.frames[depth - 1].index += 1;
            } else {
                p.frames[depth].index = 0;
            }
            continue;
        }
        match &list[idx] {
            StepClause::Hint { template } => {
                let b = ctx.bindings(p);
                p.inject_hint(template, &b)?;
                p.frames[depth].index += 1;
            }
            StepClause::Loop { .. } => {
                let entry_len = p.tokens.len();
                p.frames.push(Frame {
                    index: 0,
                    iteration: 0,
                    entry_len,
                });
            }
            _ => return Ok(true),
        }
    }
}

fn stop_holds(ctx: &Ctx<'_>, pred: &StopPredicate, appended: &[TokenId]) -> bool {
    let vocab = ctx.models.vocabulary();
    match pred {
        StopPredicate::TokenCount(k) => appended.len() >= *k,
        StopPredicate::Substring(s) => vocab.render(appended).contains(s.as_str()),
        StopPredicate::Eos => appended.last() == Some(&vocab.eos_id()),
    }
}

/// Draw one token from the proposal under an optional mask, reweighting to
/// the prior. Returns true when EOS was drawn.
fn draw(
    ctx: &Ctx<'_>,
    mask: Option<&MaskSpec>,
    p: &mut Particle,
    rng: &mut StreamRng,
    delta: &mut f64,
) -> Result<bool> {
    ctx.tick()?;
    let vocab = ctx.models.vocabulary();
    let resolved = mask.map(|m| m.resolve(vocab, &p.tokens)).transpose()?;
    if resolved.as_ref().is_some_and(|m| m.is_empty()) {
        return Err(Error::MaskEmpty { clause: None });
    }
    let law = p.proposal_law(
        (&ctx.models.proposal, &ctx.plan.proposal_tag),
        (&ctx.models.prior, &ctx.plan.prior_tag),
        resolved.as_ref(),
    )?;
    let (t, update) = p.take(&law, rng);
    *delta += update;
    Ok(t == vocab.eos_id())
}

/// Execute one generating clause. Returns true when the particle emitted EOS.
fn run_clause(
    ctx: &Ctx<'_>,
    clause: &StepClause,
    p: &mut Particle,
    rng: &mut StreamRng,
    delta: &mut f64,
) -> Result<bool> {
    match clause {
        StepClause::SampleUntil {
            stop,
            mask,
            max_tokens,
        } => {
            let start = p.tokens.len();
            loop {
                if ctx.full(p) {
                    return Ok(false);
                }
                let n = p.tokens.len() - start;
                if let Some(bound) = max_tokens {
                    if n >= *bound {
                        return Err(Error::StepBudgetExceeded {
                            clause: None,
                            bound: *bound as u64,
                        });
                    }
                }
                if draw(ctx, mask.as_ref(), p, rng, delta)? {
                    return Ok(true);
                }
                if stop_holds(ctx, stop, &p.tokens[start..]) {
                    return Ok(false);
                }
            }
        }
        StepClause::MaskedSample { mask, count } => {
            for _ in 0..*count {
                if ctx.full(p) {
                    return Ok(false);
                }
                if draw(ctx, Some(mask), p, rng, delta)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        StepClause::ForceString { text } => {
            ctx.tick()?;
            let mut forced = ctx.models.vocabulary().tokenize(text)?;
            forced.truncate(ctx.plan.max_tokens.saturating_sub(p.tokens.len()));
            *delta += p.observe_tokens(&ctx.models.proposal, &ctx.plan.proposal_tag, &forced)?;
            Ok(false)
        }
        StepClause::Hint { .. } | StepClause::Loop { .. } => {
            unreachable!("settle stops only at generating clauses")
        }
    }
}
