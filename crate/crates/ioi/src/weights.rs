// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checkpoint loading from a safetensors archive.
//!
//! Accepts the published GPT-2 tensor layout (`wte.weight`,
//! `h.{i}.attn.c_attn.weight`, ...), with or without a `transformer.`
//! prefix. Linear weights are stored `[in_features, out_features]`
//! (the original Conv1D convention), so a forward matmul is `x . W + b`
//! without transposition. All tensors are upcast to f32 on load; the
//! unembedding is the tied token embedding.

use std::path::Path;

use ndarray::{Array1, Array2};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LayerNormWeights {
    pub gain: Array1<f32>,
    pub bias: Array1<f32>,
}

#[derive(Debug, Clone)]
pub struct AttentionWeights {
    /// `[d_model, 3 * d_model]`, columns ordered q, k, v.
    pub w_qkv: Array2<f32>,
    pub b_qkv: Array1<f32>,
    /// `[d_model, d_model]` output projection.
    pub w_out: Array2<f32>,
    pub b_out: Array1<f32>,
}

#[derive(Debug, Clone)]
pub struct MlpWeights {
    pub w_fc: Array2<f32>,
    pub b_fc: Array1<f32>,
    pub w_proj: Array2<f32>,
    pub b_proj: Array1<f32>,
}

#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub ln_1: LayerNormWeights,
    pub attn: AttentionWeights,
    pub ln_2: LayerNormWeights,
    pub mlp: MlpWeights,
}

#[derive(Debug, Clone)]
pub struct Weights {
    /// Token embedding `[vocab_size, d_model]`; also the tied unembedding.
    pub wte: Array2<f32>,
    /// Positional embedding `[max_context, d_model]`.
    pub wpe: Array2<f32>,
    pub blocks: Vec<BlockWeights>,
    pub ln_f: LayerNormWeights,
}

impl Weights {
    /// Load and shape-check all tensors against `cfg`.
    pub fn load(checkpoint: &Path, cfg: &ModelConfig) -> Result<Self> {
        let bytes = std::fs::read(checkpoint)
            .map_err(|e| Error::io(checkpoint.display().to_string(), e))?;
        let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Parse {
            what: checkpoint.display().to_string(),
            detail: e.to_string(),
        })?;

        let d = cfg.d_model;
        let get2 = |name: &str, shape: [usize; 2]| -> Result<Array2<f32>> {
            tensor2(&st, name, shape)
        };
        let get1 = |name: &str, len: usize| -> Result<Array1<f32>> { tensor1(&st, name, len) };
        let ln = |prefix: &str| -> Result<LayerNormWeights> {
            Ok(LayerNormWeights {
                gain: get1(&format!("{prefix}.weight"), d)?,
                bias: get1(&format!("{prefix}.bias"), d)?,
            })
        };

        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let p = format!("h.{i}");
            blocks.push(BlockWeights {
                ln_1: ln(&format!("{p}.ln_1"))?,
                attn: AttentionWeights {
                    w_qkv: get2(&format!("{p}.attn.c_attn.weight"), [d, 3 * d])?,
                    b_qkv: get1(&format!("{p}.attn.c_attn.bias"), 3 * d)?,
                    w_out: get2(&format!("{p}.attn.c_proj.weight"), [d, d])?,
                    b_out: get1(&format!("{p}.attn.c_proj.bias"), d)?,
                },
                ln_2: ln(&format!("{p}.ln_2"))?,
                mlp: MlpWeights {
                    w_fc: get2(&format!("{p}.mlp.c_fc.weight"), [d, cfg.d_mlp()])?,
                    b_fc: get1(&format!("{p}.mlp.c_fc.bias"), cfg.d_mlp())?,
                    w_proj: get2(&format!("{p}.mlp.c_proj.weight"), [cfg.d_mlp(), d])?,
                    b_proj: get1(&format!("{p}.mlp.c_proj.bias"), d)?,
                },
            });
        }

        Ok(Weights {
            wte: get2("wte.weight", [cfg.vocab_size, d])?,
            wpe: get2("wpe.weight", [cfg.max_context, d])?,
            blocks,
            ln_f: ln("ln_f")?,
        })
    }
}

fn view<'a>(st: &'a SafeTensors, name: &str) -> Result<TensorView<'a>> {
    // tolerate the `transformer.` prefix used by some exports
    st.tensor(name)
        .or_else(|_| st.tensor(&format!("transformer.{name}")))
        .map_err(|_| Error::MissingTensor(name.to_string()))
}

fn to_f32(name: &str, t: &TensorView) -> Result<Vec<f32>> {
    let data = t.data();
    match t.dtype() {
        Dtype::F32 => Ok(data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()),
        Dtype::F16 => Ok(data
            .chunks_exact(2)
            .map(|b| f16_to_f32(u16::from_le_bytes([b[0], b[1]])))
            .collect()),
        other => Err(Error::Parse {
            what: name.to_string(),
            detail: format!("unsupported dtype {other:?}"),
        }),
    }
}

fn tensor2(st: &SafeTensors, name: &str, shape: [usize; 2]) -> Result<Array2<f32>> {
    let t = view(st, name)?;
    if t.shape() != shape {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            got: t.shape().to_vec(),
            expected: shape.to_vec(),
        });
    }
    let data = to_f32(name, &t)?;
    Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| Error::Parse {
        what: name.to_string(),
        detail: e.to_string(),
    })
}

fn tensor1(st: &SafeTensors, name: &str, len: usize) -> Result<Array1<f32>> {
    let t = view(st, name)?;
    if t.shape() != [len] {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            got: t.shape().to_vec(),
            expected: vec![len],
        });
    }
    Ok(Array1::from_vec(to_f32(name, &t)?))
}

fn f16_to_f32(bits: u16) -> f32 {
    let sign = ((bits >> 15) as u32) << 31;
    let exp = ((bits >> 10) & 0x1f) as u32;
    let frac = (bits & 0x3ff) as u32;
    let out = match exp {
        0 => {
            if frac == 0 {
                sign
            } else {
                // subnormal: normalize
                let shift = frac.leading_zeros() - 21;
                let frac = (frac << (shift + 1)) & 0x3ff;
                sign | ((127 - 15 - shift) << 23) | (frac << 13)
            }
        }
        0x1f => sign | 0x7f80_0000 | (frac << 13),
        _ => sign | ((exp + 127 - 15) << 23) | (frac << 13),
    };
    f32::from_bits(out)
}
