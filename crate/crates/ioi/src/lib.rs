// SPDX-License-Identifier: MIT OR Apache-2.0

//! Causal analysis of the indirect-object-identification circuit in
//! GPT-2 small.
//!
//! The crate loads a GPT-2 checkpoint, runs it with per-head causal
//! interventions (mean ablation, activation patching), represents
//! attention-head circuits as token-level graphs, and evaluates how well a
//! circuit found on one prompt distribution transfers to harder variants
//! with extra duplicated names.
//!
//! Start with the `examples/` directory: each example is a runnable
//! walkthrough of one capability (dataset generation, knockout evaluation,
//! path patching, circuit edits, order effects). The `ioi` binary wraps the
//! same entry points for batch use.

pub mod ablation;
pub mod analysis;
pub mod circuit;
pub mod config;
pub mod error;
pub mod forward;
pub mod hooks;
pub mod model;
pub mod patching;
pub mod prompts;
pub mod report;
pub mod tokenizer;
pub mod weights;

pub use error::{Error, Result};
