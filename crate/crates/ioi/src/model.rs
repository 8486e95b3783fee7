// SPDX-License-Identifier: MIT OR Apache-2.0

//! The loaded model: weights + tokenizer + config.
//!
//! Immutable after load and safe to share across threads; each forward
//! owns its private cache.

use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::forward::{run_forward, CacheMode, ForwardOptions, ForwardOutput, LogitRows};
use crate::hooks::{ActivationCache, InterventionPlan};
use crate::tokenizer::Tokenizer;
use crate::weights::Weights;

pub struct Model {
    pub config: ModelConfig,
    pub weights: Weights,
    pub tokenizer: Tokenizer,
    checkpoint_hash: String,
}

impl Model {
    /// Load from a directory holding `model.safetensors`, `vocab.json`,
    /// `merges.txt`, and optionally `config.json` (defaults to GPT-2 small).
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let config_path = dir.join("config.json");
        let config = if config_path.exists() {
            let text = std::fs::read_to_string(&config_path)
                .map_err(|e| Error::io(config_path.display().to_string(), e))?;
            ModelConfig::from_hf_json(&text)?
        } else {
            ModelConfig::gpt2_small()
        };
        Self::load(
            &dir.join("model.safetensors"),
            &dir.join("vocab.json"),
            &dir.join("merges.txt"),
            config,
        )
    }

    pub fn load(
        checkpoint: &Path,
        vocab: &Path,
        merges: &Path,
        config: ModelConfig,
    ) -> Result<Self> {
        config.validate()?;
        let weights = Weights::load(checkpoint, &config)?;
        let tokenizer = Tokenizer::from_files(vocab, merges)?;
        let bytes = std::fs::read(checkpoint)
            .map_err(|e| Error::io(checkpoint.display().to_string(), e))?;
        let checkpoint_hash = format!("{:x}", Sha256::digest(&bytes));
        Ok(Model {
            config,
            weights,
            tokenizer,
            checkpoint_hash,
        })
    }

    /// Hex SHA-256 of the checkpoint file, embedded into report outputs.
    pub fn checkpoint_hash(&self) -> &str {
        &self.checkpoint_hash
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        self.tokenizer.encode(text)
    }

    /// Clean forward pass: pre-softmax logits for every position plus a
    /// full activation cache.
    pub fn forward(&self, tokens: &[u32]) -> Result<(Array2<f32>, ActivationCache)> {
        let out = self.forward_opts(tokens, &InterventionPlan::empty(), ForwardOptions::default())?;
        Ok((out.logits, out.cache))
    }

    /// Forward pass with an intervention plan. An empty plan reproduces
    /// [`Model::forward`] exactly.
    pub fn forward_with_interventions(
        &self,
        tokens: &[u32],
        plan: &InterventionPlan,
    ) -> Result<(Array2<f32>, ActivationCache)> {
        let out = self.forward_opts(tokens, plan, ForwardOptions::default())?;
        Ok((out.logits, out.cache))
    }

    /// Forward with explicit logit-row and cache control; the workhorse for
    /// evaluation loops that only score the final position.
    pub fn forward_opts(
        &self,
        tokens: &[u32],
        plan: &InterventionPlan,
        opts: ForwardOptions,
    ) -> Result<ForwardOutput> {
        run_forward(&self.weights, &self.config, tokens, plan, opts)
    }

    /// Final-position logits under a plan; cache limited to `cache` mode.
    pub fn end_logits(
        &self,
        tokens: &[u32],
        plan: &InterventionPlan,
        cache: CacheMode,
    ) -> Result<ForwardOutput> {
        self.forward_opts(
            tokens,
            plan,
            ForwardOptions {
                logits: LogitRows::LastOnly,
                cache,
            },
        )
    }

    /// `logit(io) - logit(s)` at `end_position`, equal to the log-probability
    /// difference (the softmax normalizer cancels).
    pub fn logit_diff(
        &self,
        logits: &Array2<f32>,
        io_token: u32,
        s_token: u32,
        end_position: usize,
    ) -> Result<f32> {
        logit_diff(logits, io_token, s_token, end_position, self.config.vocab_size)
    }
}

/// Free-function form of the logit-difference metric.
pub fn logit_diff(
    logits: &Array2<f32>,
    io_token: u32,
    s_token: u32,
    end_position: usize,
    vocab_size: usize,
) -> Result<f32> {
    if io_token as usize >= vocab_size {
        return Err(Error::TokenOutOfVocab(io_token, vocab_size));
    }
    if s_token as usize >= vocab_size {
        return Err(Error::TokenOutOfVocab(s_token, vocab_size));
    }
    let row = logits.row(end_position);
    Ok(row[io_token as usize] - row[s_token as usize])
}
