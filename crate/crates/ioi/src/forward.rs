// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-sequence forward pass with activation caching and interventions.
//!
//! The pass is deterministic: no sampling, no dropout, no key-value cache.
//! Interventions replace rows of a site's tensor immediately after that
//! tensor is computed, so every downstream consumer (and the returned
//! cache) sees the replacement.

use ndarray::{s, Array1, Array2, Axis};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::hooks::{ActivationCache, HookSite, InterventionPlan, SiteKind};
use crate::weights::{LayerNormWeights, Weights};

/// Which logit rows to materialize. The unembedding is the dominant cost
/// for short prompts, so evaluation paths request only the final row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitRows {
    Full,
    LastOnly,
}

/// Which sites to record in the returned cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Every site of every layer.
    Full,
    /// Per-head sites only (q, k, v, head output, attention pattern).
    Heads,
    /// Attention patterns only.
    Patterns,
    /// Nothing.
    None,
}

impl CacheMode {
    fn wants(self, kind: SiteKind) -> bool {
        match self {
            CacheMode::Full => true,
            CacheMode::Heads => kind.per_head(),
            CacheMode::Patterns => kind == SiteKind::AttentionPattern,
            CacheMode::None => false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub logits: LogitRows,
    pub cache: CacheMode,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            logits: LogitRows::Full,
            cache: CacheMode::Full,
        }
    }
}

pub struct ForwardOutput {
    /// `[n_rows, vocab]`; one row per position, or a single row for
    /// [`LogitRows::LastOnly`].
    pub logits: Array2<f32>,
    pub cache: ActivationCache,
}

pub(crate) fn run_forward(
    weights: &Weights,
    cfg: &ModelConfig,
    tokens: &[u32],
    plan: &InterventionPlan,
    opts: ForwardOptions,
) -> Result<ForwardOutput> {
    let len = tokens.len();
    if len == 0 || len > cfg.max_context {
        return Err(Error::Overlong {
            len,
            max: cfg.max_context,
        });
    }
    for &t in tokens {
        if t as usize >= cfg.vocab_size {
            return Err(Error::TokenOutOfVocab(t, cfg.vocab_size));
        }
    }

    let mut cache = ActivationCache::new(len);
    let record = |site: HookSite, value: &Array2<f32>, cache: &mut ActivationCache| {
        if opts.cache.wants(site.site) {
            cache.insert(site, value.clone());
        }
    };

    // embeddings
    let mut x = Array2::<f32>::zeros((len, cfg.d_model));
    for (i, &t) in tokens.iter().enumerate() {
        let row = &weights.wte.row(t as usize) + &weights.wpe.row(i);
        x.row_mut(i).assign(&row);
    }

    let scale = 1.0 / (cfg.d_head as f32).sqrt();
    for (layer, block) in weights.blocks.iter().enumerate() {
        let site = HookSite::block(layer, SiteKind::ResidualPre);
        plan.apply(&site, &mut x);
        record(site, &x, &mut cache);

        // attention
        let normed = layer_norm(&x, &block.ln_1, cfg.layer_norm_epsilon);
        let qkv = normed.dot(&block.attn.w_qkv) + &block.attn.b_qkv;
        let mut z_cat = Array2::<f32>::zeros((len, cfg.d_model));
        for head in 0..cfg.n_heads {
            let dh = cfg.d_head;
            let qo = head * dh;
            let ko = cfg.d_model + head * dh;
            let vo = 2 * cfg.d_model + head * dh;
            let mut q = qkv.slice(s![.., qo..qo + dh]).to_owned();
            let mut k = qkv.slice(s![.., ko..ko + dh]).to_owned();
            let mut v = qkv.slice(s![.., vo..vo + dh]).to_owned();
            for (tensor, kind) in [
                (&mut q, SiteKind::Query),
                (&mut k, SiteKind::Key),
                (&mut v, SiteKind::Value),
            ] {
                let site = HookSite::per_head(layer, head, kind);
                plan.apply(&site, tensor);
                record(site, tensor, &mut cache);
            }

            let mut scores = q.dot(&k.t());
            scores *= scale;
            let mut pattern = causal_softmax(&scores);
            let site = HookSite::per_head(layer, head, SiteKind::AttentionPattern);
            plan.apply(&site, &mut pattern);
            record(site, &pattern, &mut cache);

            let mut z = pattern.dot(&v);
            let site = HookSite::per_head(layer, head, SiteKind::HeadOutput);
            plan.apply(&site, &mut z);
            record(site, &z, &mut cache);

            z_cat.slice_mut(s![.., qo..qo + dh]).assign(&z);
        }
        let mut attn_out = z_cat.dot(&block.attn.w_out) + &block.attn.b_out;
        let site = HookSite::block(layer, SiteKind::AttnBlockOutput);
        plan.apply(&site, &mut attn_out);
        record(site, &attn_out, &mut cache);
        x += &attn_out;

        // mlp
        let normed = layer_norm(&x, &block.ln_2, cfg.layer_norm_epsilon);
        let mut hidden = normed.dot(&block.mlp.w_fc) + &block.mlp.b_fc;
        hidden.mapv_inplace(gelu);
        let mut mlp_out = hidden.dot(&block.mlp.w_proj) + &block.mlp.b_proj;
        let site = HookSite::block(layer, SiteKind::MlpOutput);
        plan.apply(&site, &mut mlp_out);
        record(site, &mlp_out, &mut cache);
        x += &mlp_out;

        let site = HookSite::block(layer, SiteKind::ResidualPost);
        plan.apply(&site, &mut x);
        record(site, &x, &mut cache);
    }

    let logits = unembed(weights, cfg, &x, opts.logits);
    Ok(ForwardOutput { logits, cache })
}

fn unembed(weights: &Weights, cfg: &ModelConfig, x: &Array2<f32>, rows: LogitRows) -> Array2<f32> {
    let normed = layer_norm(x, &weights.ln_f, cfg.layer_norm_epsilon);
    match rows {
        LogitRows::Full => normed.dot(&weights.wte.t()),
        LogitRows::LastOnly => {
            let last = normed.row(normed.nrows() - 1).insert_axis(Axis(0));
            last.dot(&weights.wte.t())
        }
    }
}

pub(crate) fn layer_norm(x: &Array2<f32>, ln: &LayerNormWeights, eps: f32) -> Array2<f32> {
    let mut out = Array2::<f32>::zeros(x.raw_dim());
    for (row, mut out_row) in x.rows().into_iter().zip(out.rows_mut()) {
        let n = row.len() as f32;
        let mean = row.sum() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for (o, (&v, (&g, &b))) in out_row
            .iter_mut()
            .zip(row.iter().zip(ln.gain.iter().zip(ln.bias.iter())))
        {
            *o = (v - mean) * inv * g + b;
        }
    }
    out
}

/// Row-wise softmax with a causal mask: row `i` has zero mass on
/// columns greater than `i`, exactly.
fn causal_softmax(scores: &Array2<f32>) -> Array2<f32> {
    let n = scores.nrows();
    let mut out = Array2::<f32>::zeros((n, n));
    for i in 0..n {
        let row = scores.row(i);
        let max = row
            .iter()
            .take(i + 1)
            .cloned()
            .fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for j in 0..=i {
            let e = (row[j] - max).exp();
            out[[i, j]] = e;
            sum += e;
        }
        for j in 0..=i {
            out[[i, j]] /= sum;
        }
    }
    out
}

/// The tanh-approximated GELU used by the reference implementation.
fn gelu(x: f32) -> f32 {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044715 * x * x * x)).tanh())
}

/// Log-softmax over one logit row.
pub fn log_softmax(row: &Array1<f32>) -> Array1<f32> {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let log_sum: f32 = row.iter().map(|&v| (v - max).exp()).sum::<f32>().ln() + max;
    row.mapv(|v| v - log_sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_softmax_rows_are_distributions() {
        let scores = Array2::from_shape_fn((5, 5), |(i, j)| (i as f32 - j as f32) * 0.3);
        let p = causal_softmax(&scores);
        for i in 0..5 {
            let sum: f32 = p.row(i).sum();
            assert!((sum - 1.0).abs() < 1e-6);
            for j in i + 1..5 {
                assert_eq!(p[[i, j]], 0.0);
            }
        }
    }

    #[test]
    fn gelu_matches_reference_points() {
        assert!((gelu(0.0)).abs() < 1e-7);
        assert!((gelu(1.0) - 0.841_192).abs() < 1e-5);
        assert!((gelu(-1.0) + 0.158_808).abs() < 1e-5);
    }

    #[test]
    fn log_softmax_normalizes() {
        let row = Array1::from_vec(vec![1.0f32, 2.0, 3.0]);
        let ls = log_softmax(&row);
        let total: f32 = ls.mapv(f32::exp).sum();
        assert!((total - 1.0).abs() < 1e-6);
        // differences of log-probs equal differences of logits
        assert!(((ls[2] - ls[0]) - 2.0).abs() < 1e-6);
    }
}
