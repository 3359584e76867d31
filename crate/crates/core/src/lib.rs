//! Active-learning workbench for named-entity sequence tagging.
//!
//! The crate is organised bottom-up:
//!
//! - [`corpus`]: column-format corpora, tag schemes, vocabularies, padded batches
//!   and deterministic synthetic corpora.
//! - [`nnkernel`]: a small tensor tape with reverse-mode gradients and plain SGD.
//! - [`tagger`]: the CNN-CNN-LSTM tagger (char CNN, word CNN, LSTM tag decoder)
//!   with a chain-CRF alternative.
//! - [`active`]: uncertainty scores (LC, MNLP, BALD) and budgeted selection.
//! - [`submod`]: representativeness-based selection via streaming submodular
//!   maximization under a knapsack constraint.
//! - [`harness`]: span F1, the simulated active-learning loop, replication,
//!   genre analysis and decoder timing.

// Negated comparisons reject NaN on purpose; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod nnkernel;
pub mod tagger;
pub mod active;
pub mod submod;
pub mod harness;
mod error;

pub use error::{Error, Result};
