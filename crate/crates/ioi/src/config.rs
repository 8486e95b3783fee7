// SPDX-License-Identifier: MIT OR Apache-2.0

//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// GPT-2 architecture hyperparameters.
///
/// [`ModelConfig::gpt2_small`] is the subject model; smaller configs are
/// accepted so the engine can be exercised against reduced checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub vocab_size: usize,
    pub max_context: usize,
    pub layer_norm_epsilon: f32,
}

impl ModelConfig {
    pub fn gpt2_small() -> Self {
        ModelConfig {
            n_layers: 12,
            n_heads: 12,
            d_model: 768,
            d_head: 64,
            vocab_size: 50257,
            max_context: 1024,
            layer_norm_epsilon: 1e-5,
        }
    }

    pub fn d_mlp(&self) -> usize {
        4 * self.d_model
    }

    pub fn total_heads(&self) -> usize {
        self.n_layers * self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0
            || self.n_heads == 0
            || self.d_model == 0
            || self.d_head == 0
            || self.vocab_size == 0
            || self.max_context == 0
        {
            return Err(Error::Config("all counts must be positive".into()));
        }
        if self.d_model != self.n_heads * self.d_head {
            return Err(Error::Config(format!(
                "d_model ({}) != n_heads ({}) * d_head ({})",
                self.d_model, self.n_heads, self.d_head
            )));
        }
        if self.layer_norm_epsilon <= 0.0 {
            return Err(Error::Config("layer_norm_epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Parse a Hugging-Face-style `config.json`.
    pub fn from_hf_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "config.json".into(),
            detail: e.to_string(),
        })?;
        let get = |key: &str| -> Result<usize> {
            v.get(key)
                .and_then(|x| x.as_u64())
                .map(|x| x as usize)
                .ok_or_else(|| Error::Parse {
                    what: "config.json".into(),
                    detail: format!("missing integer field `{key}`"),
                })
        };
        let n_heads = get("n_head")?;
        let d_model = get("n_embd")?;
        let cfg = ModelConfig {
            n_layers: get("n_layer")?,
            n_heads,
            d_model,
            d_head: d_model / n_heads,
            vocab_size: get("vocab_size")?,
            max_context: get("n_positions")?,
            layer_norm_epsilon: v
                .get("layer_norm_epsilon")
                .and_then(|x| x.as_f64())
                .unwrap_or(1e-5) as f32,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gpt2_small_shape_arithmetic() {
        let cfg = ModelConfig::gpt2_small();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_layers, 12);
        assert_eq!(cfg.total_heads(), 144);
        assert_eq!(cfg.d_model, cfg.n_heads * cfg.d_head);
        assert_eq!(cfg.vocab_size, 50257);
    }

    #[test]
    fn rejects_inconsistent_dims() {
        let mut cfg = ModelConfig::gpt2_small();
        cfg.d_head = 32;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn parses_hf_config() {
        let cfg = ModelConfig::from_hf_json(
            r#"{"n_layer":4,"n_head":4,"n_embd":32,"vocab_size":355,"n_positions":256,"layer_norm_epsilon":1e-5}"#,
        )
        .unwrap();
        assert_eq!(cfg.d_head, 8);
        assert_eq!(cfg.max_context, 256);
    }
}
