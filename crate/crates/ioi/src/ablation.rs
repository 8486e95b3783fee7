// SPDX-License-Identifier: MIT OR Apache-2.0

//! Mean caches and circuit knockout evaluation.
//!
//! Knockout replaces activations outside a circuit with their means over a
//! reference distribution in which every name occurrence is fresh, so the
//! means carry no duplication signal. Means are grouped per
//! `(template, order)` so all contributing prompts share token length and
//! role layout.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{ablation_targets, CircuitSpec};
use crate::error::{Error, Result};
use crate::forward::CacheMode;
use crate::hooks::{HookSite, Intervention, InterventionPlan};
use crate::model::Model;
use crate::prompts::{corrupt_names, FilteredPools, Order, PromptExample, Variant};

/// Mean activations of one `(template, order)` group.
#[derive(Debug, Clone)]
pub struct GroupMeans {
    pub n: usize,
    pub len: usize,
    means: HashMap<HookSite, Array2<f32>>,
}

impl GroupMeans {
    pub fn get(&self, site: &HookSite) -> Option<&Array2<f32>> {
        self.means.get(site)
    }
}

/// Per-group mean activations over a reference dataset.
#[derive(Debug, Clone, Default)]
pub struct MeanCache {
    groups: HashMap<(usize, Order), GroupMeans>,
}

impl MeanCache {
    /// Average the per-head sites of every reference prompt, grouped by
    /// `(template, order)`. All prompts within a group must share one
    /// token length.
    pub fn compute(model: &Model, reference: &[PromptExample]) -> Result<MeanCache> {
        if reference.is_empty() {
            return Err(Error::MeanCache("empty reference dataset".into()));
        }
        let mut by_group: HashMap<(usize, Order), Vec<&PromptExample>> = HashMap::new();
        for ex in reference {
            by_group.entry(ex.group_key()).or_default().push(ex);
        }
        for (key, group) in &by_group {
            let len = group[0].tokens.len();
            if group.iter().any(|ex| ex.tokens.len() != len) {
                return Err(Error::MeanCache(format!(
                    "group (template {}, {}) mixes token lengths",
                    key.0, key.1
                )));
            }
        }

        let groups = by_group
            .into_par_iter()
            .map(|(key, group)| {
                let len = group[0].tokens.len();
                let mut sums: HashMap<HookSite, Array2<f32>> = HashMap::new();
                for ex in &group {
                    let out =
                        model.end_logits(&ex.tokens, &InterventionPlan::empty(), CacheMode::Heads)?;
                    for site in out.cache.sites() {
                        let value = out.cache.get(site).unwrap();
                        match sums.get_mut(site) {
                            Some(acc) => *acc += value,
                            None => {
                                sums.insert(*site, value.clone());
                            }
                        }
                    }
                }
                let n = group.len();
                let scale = 1.0 / n as f32;
                for value in sums.values_mut() {
                    *value *= scale;
                }
                Ok((
                    key,
                    GroupMeans {
                        n,
                        len,
                        means: sums,
                    },
                ))
            })
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(MeanCache { groups })
    }

    pub fn group(&self, key: (usize, Order)) -> Result<&GroupMeans> {
        self.groups.get(&key).ok_or_else(|| {
            Error::MeanCache(format!(
                "no means for group (template {}, {})",
                key.0, key.1
            ))
        })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }
}

/// Build the corrupted reference set: `ref_n` prompts per group present in
/// `dataset`, cycling through the group's originals.
pub fn build_reference_dataset(
    model: &Model,
    pools: &FilteredPools,
    dataset: &[PromptExample],
    ref_n: usize,
    seed: u64,
) -> Result<Vec<PromptExample>> {
    let mut by_group: HashMap<(usize, Order), Vec<&PromptExample>> = HashMap::new();
    for ex in dataset {
        by_group.entry(ex.group_key()).or_default().push(ex);
    }
    let mut keys: Vec<_> = by_group.keys().copied().collect();
    keys.sort_by_key(|&(t, o)| (t, o == Order::SFirst));

    let mut out = Vec::with_capacity(keys.len() * ref_n);
    let mut counter: u64 = 0;
    for key in keys {
        let group = &by_group[&key];
        for i in 0..ref_n {
            let base = group[i % group.len()];
            counter += 1;
            out.push(corrupt_names(
                base,
                seed.wrapping_add(counter),
                pools,
                &model.tokenizer,
            )?);
        }
    }
    Ok(out)
}

/// Lower a circuit to a ready-to-run intervention plan for one prompt.
pub fn circuit_plan(
    model: &Model,
    circuit: &CircuitSpec,
    example: &PromptExample,
    means: &MeanCache,
) -> Result<InterventionPlan> {
    let len = example.tokens.len();
    let targets = ablation_targets(circuit, &model.config, &example.roles, len)?;
    if targets.is_empty() {
        return Ok(InterventionPlan::empty());
    }
    let group = means.group(example.group_key())?;
    if group.len != len {
        return Err(Error::MeanCache(format!(
            "mean length {} does not match prompt length {}",
            group.len, len
        )));
    }
    let mut items = Vec::with_capacity(targets.len());
    for (site, positions) in targets {
        let mean = group
            .get(&site)
            .ok_or_else(|| Error::MeanCache(format!("no mean recorded for {site}")))?;
        let values = mean.select(Axis(0), &positions);
        items.push(Intervention::at(site, positions, values));
    }
    InterventionPlan::build(items, &model.config, len)
}

/// Per-prompt evaluation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptResult {
    pub prompt_id: usize,
    pub template_id: usize,
    pub order: Order,
    pub logit_diff_model: f32,
    pub logit_diff_circuit: f32,
}

/// Aggregated knockout evaluation over one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub variant: Variant,
    pub circuit_name: String,
    pub n: usize,
    pub rows: Vec<PromptResult>,
    pub mean_model: f64,
    pub std_model: f64,
    pub mean_circuit: f64,
    pub std_circuit: f64,
    pub faithfulness: f64,
}

/// Evaluate model and circuit logit differences on every prompt.
pub fn evaluate_circuit(
    model: &Model,
    circuit: &CircuitSpec,
    dataset: &[PromptExample],
    means: &MeanCache,
) -> Result<MetricReport> {
    if dataset.is_empty() {
        return Err(Error::Other("empty evaluation dataset".into()));
    }
    let rows = dataset
        .par_iter()
        .enumerate()
        .map(|(prompt_id, ex)| {
            let io = ex.io_token(&model.tokenizer);
            let s = ex.s_token(&model.tokenizer);
            let ld = |plan: &InterventionPlan| -> Result<f32> {
                let out = model.end_logits(&ex.tokens, plan, CacheMode::None)?;
                model.logit_diff(&out.logits, io, s, 0)
            };
            let logit_diff_model = ld(&InterventionPlan::empty())?;
            let plan = circuit_plan(model, circuit, ex, means)?;
            let logit_diff_circuit = ld(&plan)?;
            Ok(PromptResult {
                prompt_id,
                template_id: ex.template_id,
                order: ex.order,
                logit_diff_model,
                logit_diff_circuit,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (mean_model, std_model) = mean_std(rows.iter().map(|r| r.logit_diff_model as f64));
    let (mean_circuit, std_circuit) = mean_std(rows.iter().map(|r| r.logit_diff_circuit as f64));
    let faith = faithfulness(mean_circuit, mean_model)?;
    Ok(MetricReport {
        variant: dataset[0].variant,
        circuit_name: circuit.name.clone(),
        n: rows.len(),
        rows,
        mean_model,
        std_model,
        mean_circuit,
        std_circuit,
        faithfulness: faith,
    })
}

/// Circuit logit difference relative to the model's; 1 is ideal. The same
/// formula normalizes edited-circuit scores.
pub fn faithfulness(circuit_ld: f64, model_ld: f64) -> Result<f64> {
    if model_ld == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(circuit_ld / model_ld)
}

pub(crate) fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}
