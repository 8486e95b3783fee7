// SPDX-License-Identifier: MIT OR Apache-2.0

//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by model loading, dataset generation, and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("invalid model config: {0}")]
    Config(String),

    #[error("failed to parse {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("token id {0} out of vocabulary (size {1})")]
    TokenOutOfVocab(u32, usize),

    #[error("prompt length {len} exceeds max context {max}")]
    Overlong { len: usize, max: usize },

    #[error("conflicting interventions at layer {layer} site {site} position {position}")]
    ConflictingIntervention {
        layer: usize,
        site: String,
        position: usize,
    },

    #[error("intervention invalid: {0}")]
    InvalidIntervention(String),

    #[error("role alignment failed: {0}")]
    Alignment(String),

    #[error("word pool error: {0}")]
    Pool(String),

    #[error("circuit error: {0}")]
    Circuit(String),

    #[error("mean cache error: {0}")]
    MeanCache(String),

    #[error("model logit difference is zero; faithfulness undefined")]
    UndefinedRatio,

    #[error("path patch error: {0}")]
    Patch(String),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
