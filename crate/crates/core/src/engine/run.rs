use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{InferenceConfig, Method, SelectMode};
use super::weights::{effective_sample_size, normalize_weights, resample};
use crate::error::{Error, Result};
use crate::rng::{stream_key, Lane, StreamRng};
use crate::steering::{execute_step, run_check, ModelSet, Particle, Status, SteeringPlan};
use crate::token_model::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCandidate {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub normalized_weight: f64,
    pub passed_check: bool,
    /// Negative infinity is written as `null`.
    #[serde(with = "finite_or_null")]
    pub raw_log_weight: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    pub step: usize,
    pub texts: Vec<String>,
    pub normalized_weights: Vec<f64>,
    pub ess: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub ess_trace: Vec<f64>,
    pub resample_events: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_step: Option<Vec<StepSnapshot>>,
    pub steps_executed: usize,
    #[serde(with = "super::config::opt_secs")]
    pub wall_time: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    pub candidates: Vec<WeightedCandidate>,
    pub selected: Option<Vec<TokenId>>,
    pub selected_index: Option<usize>,
    pub diagnostics: Diagnostics,
    pub error: Option<Error>,
}

impl InferenceOutcome {
    pub fn is_success(&self) -> bool {
        self.error.is_none()
    }

    pub fn selected_text(&self) -> Option<&str> {
        self.selected_index
            .map(|i| self.candidates[i].text.as_str())
    }

    /// Mean of the unnormalized final weights, the normalizing-constant estimate.
    pub fn mean_weight(&self) -> f64 {
        let n = self.candidates.len() as f64;
        self.candidates
            .iter()
            .map(|c| c.raw_log_weight.exp())
            .sum::<f64>()
            / n
    }
}

/// Run `plan` with the method named in `config`.
pub fn run_inference(
    plan: &SteeringPlan,
    models: &ModelSet,
    config: &InferenceConfig,
) -> InferenceOutcome {
    match config.method {
        Method::Smc => run_smc(plan, models, config),
        Method::Importance => run_importance(plan, models, config),
        Method::Rejection => run_rejection(plan, models, config),
    }
}

/// Self-normalized importance sampling: N independent particles, no resampling.
pub fn run_importance(
    plan: &SteeringPlan,
    models: &ModelSet,
    config: &InferenceConfig,
) -> InferenceOutcome {
    weighted(plan, models, config, false)
}

/// Sequential Monte Carlo with ESS-triggered resampling.
pub fn run_smc(
    plan: &SteeringPlan,
    models: &ModelSet,
    config: &InferenceConfig,
) -> InferenceOutcome {
    weighted(plan, models, config, true)
}

/// N unweighted completions filtered by the plan's check; the answer is
/// uniform among those that pass.
pub fn run_rejection(
    plan: &SteeringPlan,
    models: &ModelSet,
    config: &InferenceConfig,
) -> InferenceOutcome {
    let check = |text: &str| {
        if crate::tasks::satisfies(&plan.check, text) {
            1.0
        } else {
            0.0
        }
    };
    let mut out = best_of_n(plan, models, config, &check);
    if out.error.is_none() && out.candidates.iter().all(|c| !c.passed_check) {
        out.selected = None;
        out.selected_index = None;
        out.error = Some(Error::AllParticlesDead);
        for c in &mut out.candidates {
            c.normalized_weight = 0.0;
            c.raw_log_weight = f64::NEG_INFINITY;
        }
    }
    out
}

/// Best-of-N: N unweighted completions scored by `score`, answer drawn
/// uniformly among the top scorers. Failed particles never win.
pub fn best_of_n(
    plan: &SteeringPlan,
    models: &ModelSet,
    config: &InferenceConfig,
    score: &(dyn Fn(&str) -> f64 + Sync),
) -> InferenceOutcome {
    let start = Instant::now();
    let mut run = Run::new(plan, models, config, Mode::Unweighted);
    let result = run.drive();
    let vocab = models.vocabulary();
    let scores: Vec<Option<f64>> = run
        .particles
        .iter()
        .map(|p| (p.status == Status::Done).then(|| score(&vocab.render(&p.tokens))))
        .collect();
    let best = scores
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i] == Some(best))
        .collect();
    let share = if winners.is_empty() {
        0.0
    } else {
        1.0 / winners.len() as f64
    };
    let candidates = run
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let won = winners.contains(&i);
            WeightedCandidate {
                tokens: p.tokens.clone(),
                text: vocab.render(&p.tokens),
                normalized_weight: if won { share } else { 0.0 },
                passed_check: p.status == Status::Done && run_check(plan, vocab, &p.tokens),
                raw_log_weight: if won { 0.0 } else { f64::NEG_INFINITY },
                status: p.status,
            }
        })
        .collect();
    let mut diagnostics = std::mem::take(&mut run.diagnostics);
    diagnostics.wall_time = Some(start.elapsed());
    let (selected_index, error) = match result {
        Err(e) => (None, Some(e)),
        Ok(()) if winners.is_empty() => (None, Some(run.dead_error())),
        Ok(()) => {
            let mut rng = StreamRng::for_lane(config.seed, Lane::Select, 0);
            (Some(winners[rng.below(winners.len())]), None)
        }
    };
    finish(candidates, selected_index, diagnostics, error)
}

fn weighted(
    plan: &SteeringPlan,
    models: &ModelSet,
    config: &InferenceConfig,
    smc: bool,
) -> InferenceOutcome {
    let start = Instant::now();
    let mut run = Run::new(
        plan,
        models,
        config,
        if smc { Mode::Smc } else { Mode::Importance },
    );
    let result = run.drive();
    let vocab = models.vocabulary();
    let log_w: Vec<f64> = run.particles.iter().map(|p| p.log_weight).collect();
    let norm = normalize_weights(&log_w);
    let candidates = run
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| WeightedCandidate {
            tokens: p.tokens.clone(),
            text: vocab.render(&p.tokens),
            normalized_weight: norm.as_ref().map(|w| w[i]).unwrap_or(0.0),
            passed_check: p.passed_check.unwrap_or(false),
            raw_log_weight: p.log_weight,
            status: p.status,
        })
        .collect::<Vec<_>>();
    let mut diagnostics = std::mem::take(&mut run.diagnostics);
    diagnostics.wall_time = Some(start.elapsed());
    let (selected_index, error) = match (result, norm) {
        (Err(e), _) => (None, Some(e)),
        (Ok(()), Err(_)) => (None, Some(run.dead_error())),
        (Ok(()), Ok(w)) => (Some(select_index(&w, config)), None),
    };
    finish(candidates, selected_index, diagnostics, error)
}

fn finish(
    mut candidates: Vec<WeightedCandidate>,
    selected_index: Option<usize>,
    diagnostics: Diagnostics,
    error: Option<Error>,
) -> InferenceOutcome {
    if error.is_some() {
        for c in &mut candidates {
            c.normalized_weight = 0.0;
        }
    }
    InferenceOutcome {
        selected: selected_index.map(|i| candidates[i].tokens.clone()),
        candidates,
        selected_index,
        diagnostics,
        error,
    }
}

fn select_index(weights: &[f64], config: &InferenceConfig) -> usize {
    match config.select {
        SelectMode::Sample => {
            let mut rng = StreamRng::for_lane(config.seed, Lane::Select, 0);
            rng.categorical(weights).expect("positive weight")
        }
        SelectMode::Argmax => argmax(weights),
    }
}

fn argmax(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

/// Pick an answer from candidates by normalized weight.
pub fn select_answer(
    candidates: &[WeightedCandidate],
    rng: &mut StreamRng,
    mode: SelectMode,
) -> Result<Vec<TokenId>> {
    let w: Vec<f64> = candidates.iter().map(|c| c.normalized_weight).collect();
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::AllParticlesDead);
    }
    let i = match mode {
        SelectMode::Sample => rng.categorical(&w).expect("positive weight"),
        SelectMode::Argmax => argmax(&w),
    };
    Ok(candidates[i].tokens.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Importance,
    Smc,
    /// No weight bookkeeping: rejection and best-of-N.
    Unweighted,
}

/// Lock-step population driver shared by every method.
struct Run<'a> {
    plan: &'a SteeringPlan,
    models: &'a ModelSet,
    config: &'a InferenceConfig,
    mode: Mode,
    particles: Vec<Particle>,
    diagnostics: Diagnostics,
}

impl<'a> Run<'a> {
    fn new(
        plan: &'a SteeringPlan,
        models: &'a ModelSet,
        config: &'a InferenceConfig,
        mode: Mode,
    ) -> Self {
        let diagnostics = Diagnostics {
            per_step: config.record_steps.then(Vec::new),
            ..Diagnostics::default()
        };
        Self {
            plan,
            models,
            config,
            mode,
            particles: vec![Particle::new(); config.n_particles],
            diagnostics,
        }
    }

    fn drive(&mut self) -> Result<()> {
        self.config.validate()?;
        let deadline = self.config.timeout.map(|t| Instant::now() + t);
        let threshold = self.config.threshold();
        for step in 0..self.config.max_steps {
            if !self.particles.iter().any(Particle::is_active) {
                return Ok(());
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Err(Error::Timeout);
            }
            self.advance(step, deadline)?;
            self.diagnostics.steps_executed = step + 1;
            if self.mode == Mode::Unweighted {
                self.snapshot(step, None, false);
                continue;
            }
            let log_w: Vec<f64> = self.particles.iter().map(|p| p.log_weight).collect();
            let norm = normalize_weights(&log_w).map_err(|_| self.dead_error())?;
            let ess = effective_sample_size(&norm);
            self.diagnostics.ess_trace.push(ess);
            let resampled = self.mode == Mode::Smc
                && ess < threshold
                && self.particles.iter().any(Particle::is_active);
            if resampled {
                let mut rng = StreamRng::from_key(stream_key(&[
                    self.config.seed,
                    Lane::Resample as u64,
                    step as u64,
                ]));
                let (mut next, _, level) = resample(
                    &self.particles,
                    &log_w,
                    self.config.resample_scheme,
                    &mut rng,
                )?;
                for p in &mut next {
                    p.log_weight = level;
                }
                self.particles = next;
                self.diagnostics.resample_events.push(step);
            }
            self.snapshot(step, Some((&norm, ess)), resampled);
        }
        let bound = self.config.max_steps as u64;
        for p in self.particles.iter_mut().filter(|p| p.is_active()) {
            p.fail(Error::StepBudgetExceeded {
                clause: None,
                bound,
            });
        }
        Ok(())
    }

    fn advance(&mut self, step: usize, deadline: Option<Instant>) -> Result<()> {
        let (plan, models, seed) = (self.plan, self.models, self.config.seed);
        let timed_out = self
            .particles
            .par_iter_mut()
            .enumerate()
            .filter(|(_, p)| p.is_active())
            .map(|(i, p)| {
                let mut rng = StreamRng::for_particle(seed, i, step);
                match execute_step(plan, p, models, &mut rng, deadline) {
                    Ok(_) => false,
                    Err(Error::Timeout) => true,
                    Err(e) => {
                        p.fail(e);
                        false
                    }
                }
            })
            .reduce(|| false, |a, b| a || b);
        if timed_out {
            Err(Error::Timeout)
        } else {
            Ok(())
        }
    }

    fn snapshot(&mut self, step: usize, weights: Option<(&[f64], f64)>, resampled: bool) {
        let Some(per_step) = self.diagnostics.per_step.as_mut() else {
            return;
        };
        let vocab = self.models.vocabulary();
        let n = self.particles.len();
        let (w, ess) = match weights {
            Some((w, ess)) => (w.to_vec(), ess),
            None => (vec![1.0 / n as f64; n], n as f64),
        };
        per_step.push(StepSnapshot {
            step,
            texts: self
                .particles
                .iter()
                .map(|p| vocab.render(&p.tokens))
                .collect(),
            normalized_weights: w,
            ess,
            resampled,
        });
    }

    /// Error for a population with no weight left: the particles' shared
    /// failure when they all failed the same way, `AllParticlesDead` otherwise.
    fn dead_error(&self) -> Error {
        let mut errs = self.particles.iter().map(|p| p.error.as_ref());
        let first = errs.next().flatten();
        match first {
            Some(e)
                if self
                    .particles
                    .iter()
                    .all(|p| p.error.as_ref().is_some_and(|x| x.kind() == e.kind())) =>
            {
                e.clone()
            }
            _ => Error::AllParticlesDead,
        }
    }
}

pub(crate) mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}
