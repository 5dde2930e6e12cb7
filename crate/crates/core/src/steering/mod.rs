//! Steering programs: particles, the step function, masks, hints and the
//! declarative plan format.

mod exec;
mod mask;
mod particle;
mod plan;
mod template;

use std::sync::Arc;

pub use exec::{execute_step, StepUpdate};
pub use mask::{allowed_mass, CharClass, MaskSpec, TokenMask};
pub use particle::{Particle, Status, TokenProposal};
pub use plan::{
    parse_plan, plan_from_value, SteeringPlan, StepClause, StopPredicate, BUILTIN_VARIABLES,
    DEFAULT_LOOP_BOUND, DEFAULT_PRIOR_TAG, DEFAULT_PROPOSAL_TAG, MAX_LOOP_BOUND, PLAN_VERSION,
};
pub use template::{Binding, Bindings, Template};

use crate::error::{Error, Result};
use crate::tasks::satisfies;
use crate::token_model::{TokenId, TokenModel, Vocabulary};

/// Proposal and prior models driving a plan. They may be the same model.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub proposal: Arc<TokenModel>,
    pub prior: Arc<TokenModel>,
}

impl ModelSet {
    pub fn new(proposal: Arc<TokenModel>, prior: Arc<TokenModel>) -> Result<Self> {
        if proposal.vocabulary() != prior.vocabulary() {
            return Err(Error::schema(
                "models",
                "proposal and prior vocabularies differ",
            ));
        }
        Ok(Self { proposal, prior })
    }

    pub fn single(model: Arc<TokenModel>) -> Self {
        Self {
            proposal: model.clone(),
            prior: model,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        self.proposal.vocabulary()
    }
}

/// Conjunction of the plan's check constraints over the rendered text.
pub fn run_check(plan: &SteeringPlan, vocab: &Vocabulary, tokens: &[TokenId]) -> bool {
    satisfies(&plan.check, &vocab.render(tokens))
}
