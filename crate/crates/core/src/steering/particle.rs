use serde::{Deserialize, Serialize};

use super::mask::{allowed_mass, TokenMask};
use super::template::{Binding, Bindings, Template};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::token_model::{ModelQuery, TokenId, TokenModel, HINT_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Done,
    Failed,
}

/// Position inside the plan. `frames[0]` indexes the top-level steps; each
/// further frame indexes the body of the loop its parent points at.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Frame {
    pub index: usize,
    pub iteration: u32,
    /// Token count when the enclosing loop was entered.
    pub entry_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub tokens: Vec<TokenId>,
    pub log_weight: f64,
    pub steps_taken: usize,
    pub status: Status,
    pub hint_buffer: Vec<String>,
    /// Why the particle failed, when it did.
    pub error: Option<Error>,
    /// Outcome of the plan's check once the particle is done.
    pub passed_check: Option<bool>,
    pub(crate) frames: Vec<Frame>,
}

impl Default for Particle {
    fn default() -> Self {
        Self::new()
    }
}

impl Particle {
    pub fn new() -> Self {
        Self::with_prefix(Vec::new())
    }

    pub fn with_prefix(tokens: Vec<TokenId>) -> Self {
        Self {
            tokens,
            log_weight: 0.0,
            steps_taken: 0,
            status: Status::Active,
            hint_buffer: Vec::new(),
            error: None,
            passed_check: None,
            frames: vec![Frame {
                index: 0,
                iteration: 0,
                entry_len: 0,
            }],
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    pub(crate) fn fail(&mut self, err: Error) {
        self.status = Status::Failed;
        self.log_weight = f64::NEG_INFINITY;
        self.error = Some(err);
    }

    /// Draw from `model`, optionally restricted to `mask`. A masked draw adds
    /// `ln Z` to the weight, `Z` being the mass the model puts on the mask.
    pub fn sample_token(
        &mut self,
        model: &TokenModel,
        prompt_tag: &str,
        mask: Option<&TokenMask>,
        rng: &mut StreamRng,
    ) -> Result<TokenId> {
        let p = model.next_distribution(
            &ModelQuery::new(&self.tokens, prompt_tag).with_hints(&self.hint_buffer),
        )?;
        let step = TokenProposal::new(&p, None, mask)?;
        Ok(self.take(&step, rng).0)
    }

    /// Draw from the (masked) proposal and reweight towards the prior:
    /// the update is `ln p_prior(t) - ln q(t)`.
    ///
    /// The proposal sees the hint buffer, the prior does not.
    pub fn proposal_prior_step(
        &mut self,
        proposal: (&TokenModel, &str),
        prior: (&TokenModel, &str),
        mask: Option<&TokenMask>,
        rng: &mut StreamRng,
    ) -> Result<TokenId> {
        let step = self.proposal_law(proposal, prior, mask)?;
        Ok(self.take(&step, rng).0)
    }

    /// Exact one-token law used by [`proposal_prior_step`](Self::proposal_prior_step).
    pub fn proposal_law(
        &self,
        proposal: (&TokenModel, &str),
        prior: (&TokenModel, &str),
        mask: Option<&TokenMask>,
    ) -> Result<TokenProposal> {
        let q = proposal.0.next_distribution(
            &ModelQuery::new(&self.tokens, proposal.1).with_hints(&self.hint_buffer),
        )?;
        let p = prior
            .0
            .next_distribution(&ModelQuery::new(&self.tokens, prior.1))?;
        TokenProposal::new(&q, Some(&p), mask)
    }

    /// Draw from `step`, append the token and apply its update.
    pub(crate) fn take(&mut self, step: &TokenProposal, rng: &mut StreamRng) -> (TokenId, f64) {
        let t = rng
            .categorical(&step.q)
            .expect("proposal has positive mass");
        let update = step.log_updates[t];
        self.log_weight += update;
        self.tokens.push(t as TokenId);
        (t as TokenId, update)
    }

    /// Append `forced` and multiply the weight by its probability.
    /// Returns the log-weight update, which may be negative infinity.
    pub fn observe_tokens(
        &mut self,
        model: &TokenModel,
        prompt_tag: &str,
        forced: &[TokenId],
    ) -> Result<f64> {
        let lp = model.sequence_logprob_with_hints(
            &self.tokens,
            forced,
            prompt_tag,
            &self.hint_buffer,
        )?;
        self.log_weight += lp;
        self.tokens.extend_from_slice(forced);
        Ok(lp)
    }

    /// Render `template` and append `"Note to self: <text>"` to the hint buffer.
    pub fn inject_hint(&mut self, template: &str, bindings: &Bindings) -> Result<()> {
        let text = Template::parse(template)?.render(bindings)?;
        self.hint_buffer.push(format!("{HINT_PREFIX}{text}"));
        Ok(())
    }

    /// Built-in template variables computed from the particle's text.
    pub fn builtin_bindings(&self, vocab: &crate::token_model::Vocabulary) -> Bindings {
        let text = vocab.render(&self.tokens);
        let mut b = Bindings::new();
        b.insert(
            "char_count".into(),
            Binding::Int(text.chars().count() as i64),
        );
        b.insert(
            "word_count".into(),
            Binding::Int(text.split_whitespace().count() as i64),
        );
        b.insert("token_count".into(), Binding::Int(self.tokens.len() as i64));
        b
    }
}

/// One-token sampling law together with the weight update each outcome
/// would receive.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenProposal {
    /// Sampling probabilities, zero outside the mask.
    pub q: Vec<f64>,
    /// Log-weight update applied when token `t` is drawn.
    pub log_updates: Vec<f64>,
    /// Log mass of the proposal on the mask; zero without a mask.
    pub log_z: f64,
}

impl TokenProposal {
    /// Build the law from a proposal distribution, an optional prior and an
    /// optional mask.
    ///
    /// A prior identical to the proposal is treated as absent, so unmasked
    /// draws leave the weight exactly unchanged and masked draws add exactly
    /// `ln Z`.
    pub fn new(proposal: &[f64], prior: Option<&[f64]>, mask: Option<&TokenMask>) -> Result<Self> {
        let prior = prior.filter(|p| *p != proposal);
        let n = proposal.len();
        let (q, log_z) = match mask {
            None => (proposal.to_vec(), 0.0),
            Some(m) => {
                let z = allowed_mass(proposal, m);
                if !(z > 0.0) {
                    return Err(Error::MaskEmpty { clause: None });
                }
                let q = (0..n)
                    .map(|t| {
                        if m.allows(t as TokenId) {
                            proposal[t] / z
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (q, z.ln())
            }
        };
        let log_updates = match prior {
            None => vec![log_z; n],
            Some(p) => (0..n)
                .map(|t| {
                    if q[t] > 0.0 {
                        p[t].ln() - q[t].ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect(),
        };
        Ok(Self {
            q,
            log_updates,
            log_z,
        })
    }
}
