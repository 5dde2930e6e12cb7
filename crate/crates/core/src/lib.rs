// `!(x > 0.0)` style guards are deliberate: they reject NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod planner;
pub mod rng;
pub mod runner;
pub mod steering;
pub mod tasks;
pub mod token_model;

pub use error::{Error, ErrorKind, Result};
