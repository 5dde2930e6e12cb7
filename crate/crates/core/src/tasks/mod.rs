//! Constraint language, verifiers, metrics and the enumeration oracle.

mod constraints;
mod generate;
mod metrics;
mod oracle;

pub use constraints::{
    is_sentence_terminator, satisfies, sentences, strip, verify, words, ConstraintResult,
    ConstraintSpec, PositionedWord, TaskSpec, VerificationReport,
};
pub use generate::{generate_task_instances, TASK_FAMILIES};
pub use metrics::{coherency_proxy, total_variation, uniform_pass_at_1, weighted_pass_at_1};
pub use oracle::{brute_force_target, TargetTable, ENUMERATION_LIMIT};
