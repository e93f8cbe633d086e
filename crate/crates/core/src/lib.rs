//! Zero-shot travel mode choice prediction with a language model, plus the
//! supervised baselines it is compared against.
//!
//! The flow is: ingest survey rows ([`dataset`]), render one prompt per test
//! situation ([`prompting`]), query a model through a cached gateway
//! ([`gateway`]), parse the replies ([`parsing`]), fit local classifiers
//! ([`benchmarks`]) and score everything ([`evaluation`]). [`pipeline`] wires
//! the stages together for the command-line tool.

// Config checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmarks;
pub mod config;
pub mod dataset;
pub mod evaluation;
pub mod gateway;
pub mod mode;
pub mod parsing;
pub mod pipeline;
pub mod prompting;

pub use dataset::ChoiceSituation;
pub use mode::{ModeLabel, PerMode};
