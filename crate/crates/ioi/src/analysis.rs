// SPDX-License-Identifier: MIT OR Apache-2.0

//! Head-level behavioral metrics.
//!
//! Attention "scores" here are post-softmax probabilities read from a
//! head's characteristic query position to a key position, averaged over a
//! dataset. Each metric compares the model context (clean forward) with
//! the circuit context (forward under the circuit's knockout plan), which
//! is how evaluation artifacts like S2-hacking become visible.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ablation::{circuit_plan, evaluate_circuit, MeanCache, MetricReport};
use crate::circuit::{CircuitSpec, HeadClass, HeadId, HeadNode};
use crate::error::{Error, Result};
use crate::forward::CacheMode;
use crate::hooks::InterventionPlan;
use crate::model::Model;
use crate::prompts::{Order, PromptExample, Role, RoleMap};

/// Whether stats were measured on the clean model or under the circuit's
/// knockout plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Context {
    Model,
    Circuit,
}

/// Mean attention probabilities for every tracked
/// `(head, query_role, key_role)` triple.
#[derive(Debug, Clone)]
pub struct AttentionStats {
    pub context: Context,
    pub n: usize,
    means: HashMap<(HeadId, Role, Role), f64>,
}

impl AttentionStats {
    pub fn mean(&self, head: HeadId, query: Role, key: Role) -> Option<f64> {
        self.means.get(&(head, query, key)).copied()
    }
}

const QUERY_ROLES: [Role; 6] = [
    Role::End,
    Role::S2,
    Role::Io2,
    Role::Io3,
    Role::S1Next,
    Role::Io1Next,
];
const KEY_ROLES: [Role; 8] = [
    Role::Io1,
    Role::Io2,
    Role::Io3,
    Role::S1,
    Role::S2,
    Role::S1Next,
    Role::Io1Next,
    Role::Io2Next,
];

/// Measure mean attention for the given heads over a dataset. Pass a
/// circuit and mean cache to measure under knockout; pass `None` for the
/// clean model.
pub fn collect_attention_stats(
    model: &Model,
    dataset: &[PromptExample],
    heads: &[HeadId],
    circuit: Option<(&CircuitSpec, &MeanCache)>,
) -> Result<AttentionStats> {
    if dataset.is_empty() {
        return Err(Error::Other("empty dataset for attention stats".into()));
    }

    let per_prompt: Vec<HashMap<(HeadId, Role, Role), f64>> = dataset
        .par_iter()
        .map(|ex| {
            let plan = match circuit {
                Some((spec, means)) => circuit_plan(model, spec, ex, means)?,
                None => InterventionPlan::empty(),
            };
            let out = model.end_logits(&ex.tokens, &plan, CacheMode::Patterns)?;
            let mut local = HashMap::new();
            for &head in heads {
                for q in QUERY_ROLES {
                    let Some(qpos) = ex.roles.get(q) else { continue };
                    let Some(row) = out.cache.attention_row(head.layer, head.head, qpos) else {
                        continue;
                    };
                    for k in KEY_ROLES {
                        let Some(kpos) = ex.roles.get(k) else { continue };
                        local.insert((head, q, k), row[kpos] as f64);
                    }
                }
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;

    let n = per_prompt.len();
    let mut sums: HashMap<(HeadId, Role, Role), (f64, usize)> = HashMap::new();
    for local in per_prompt {
        for (key, value) in local {
            let entry = sums.entry(key).or_insert((0.0, 0));
            entry.0 += value;
            entry.1 += 1;
        }
    }
    let means = sums
        .into_iter()
        .map(|(key, (sum, count))| (key, sum / count as f64))
        .collect();
    Ok(AttentionStats {
        context: match circuit {
            Some(_) => Context::Circuit,
            None => Context::Model,
        },
        n,
        means,
    })
}

/// A list of `(query_role, key_role)` attention pairs.
pub type RolePairs = Vec<(Role, Role)>;

/// Characteristic attention pairs of a head class on a given role layout:
/// `(correct, incorrect)` lists of `(query_role, key_role)`. "Correct"
/// means answer-favoring for the class (for subject-tracking heads, the
/// S-side is correct).
pub fn characteristic_pairs(class: HeadClass, roles: &RoleMap) -> (RolePairs, RolePairs) {
    let has = |r: Role| roles.contains(r);
    match class {
        HeadClass::NameMover | HeadClass::BackupNameMover | HeadClass::NegativeNameMover => {
            let correct = [Role::Io1, Role::Io2, Role::Io3]
                .into_iter()
                .filter(|&r| has(r))
                .map(|r| (Role::End, r))
                .collect();
            (correct, vec![(Role::End, Role::S1), (Role::End, Role::S2)])
        }
        HeadClass::SInhibition => {
            let incorrect = if has(Role::Io2) {
                (Role::End, Role::Io2)
            } else {
                (Role::End, Role::Io1)
            };
            (vec![(Role::End, Role::S2)], vec![incorrect])
        }
        HeadClass::Induction => {
            let incorrect = if has(Role::Io2) {
                (Role::Io2, Role::Io1Next)
            } else {
                (Role::S2, Role::Io1Next)
            };
            (vec![(Role::S2, Role::S1Next)], vec![incorrect])
        }
        HeadClass::DuplicateToken => {
            let incorrect = if has(Role::Io2) {
                (Role::Io2, Role::Io1)
            } else {
                (Role::S2, Role::Io1)
            };
            (vec![(Role::S2, Role::S1)], vec![incorrect])
        }
        HeadClass::PreviousToken => (
            vec![(Role::S1Next, Role::S1)],
            vec![(Role::Io1Next, Role::Io1)],
        ),
    }
}

fn summed(stats: &AttentionStats, head: HeadId, pairs: &[(Role, Role)]) -> Option<f64> {
    let mut total = 0.0;
    let mut found = false;
    for &(q, k) in pairs {
        if let Some(v) = stats.mean(head, q, k) {
            total += v;
            found = true;
        }
    }
    found.then_some(total)
}

/// Attention to the answer-favoring token over the answer-opposing token.
/// `None` when the opposing attention is zero (flagged infinite, excluded
/// from aggregates).
pub fn confidence_ratio(
    stats: &AttentionStats,
    head: HeadId,
    class: HeadClass,
    roles: &RoleMap,
) -> Result<Option<f64>> {
    let (correct, incorrect) = characteristic_pairs(class, roles);
    let c = summed(stats, head, &correct)
        .ok_or_else(|| Error::Other(format!("no correct-side attention stats for {head}")))?;
    let i = summed(stats, head, &incorrect)
        .ok_or_else(|| Error::Other(format!("no incorrect-side attention stats for {head}")))?;
    if i == 0.0 {
        return Ok(None);
    }
    Ok(Some(c / i))
}

/// Attention to one key role in the circuit context relative to the model
/// context, read at the class's characteristic query for that role.
/// 1 means the head behaves in the circuit as it does in the model.
pub fn functional_faithfulness(
    circuit_stats: &AttentionStats,
    model_stats: &AttentionStats,
    head: HeadId,
    class: HeadClass,
    key_role: Role,
    roles: &RoleMap,
) -> Result<Option<f64>> {
    let (correct, incorrect) = characteristic_pairs(class, roles);
    let pair = correct
        .iter()
        .chain(incorrect.iter())
        .find(|(_, k)| *k == key_role)
        .copied()
        .ok_or_else(|| {
            Error::Other(format!("{key_role} is not a characteristic key for {class}"))
        })?;
    let c = circuit_stats
        .mean(head, pair.0, pair.1)
        .ok_or_else(|| Error::Other(format!("missing circuit stats for {head}")))?;
    let m = model_stats
        .mean(head, pair.0, pair.1)
        .ok_or_else(|| Error::Other(format!("missing model stats for {head}")))?;
    if m == 0.0 {
        return Ok(None);
    }
    Ok(Some(c / m))
}

/// Absolute shift of a head's characteristic attention between two
/// datasets (e.g. the base task vs a variant), within one context. The
/// pair measured is the head's base-task correct pair.
pub fn attention_deviation(
    head: HeadId,
    class: HeadClass,
    base_stats: &AttentionStats,
    variant_stats: &AttentionStats,
    base_roles: &RoleMap,
) -> Result<f64> {
    let (correct, _) = characteristic_pairs(class, base_roles);
    let b = summed(base_stats, head, &correct)
        .ok_or_else(|| Error::Other(format!("missing base stats for {head}")))?;
    let v = summed(variant_stats, head, &correct)
        .ok_or_else(|| Error::Other(format!("missing variant stats for {head}")))?;
    Ok((v - b).abs())
}

/// One row of the S2-hacking diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S2HackingRow {
    pub head: HeadId,
    pub class: HeadClass,
    pub model_ratio: Option<f64>,
    pub circuit_ratio: Option<f64>,
    pub ff_s: Option<f64>,
    pub ff_io: Option<f64>,
    pub flagged: bool,
}

/// Compare circuit and model confidence ratios for every given head.
/// A head is flagged when the circuit inflates its confidence by more
/// than `flag_factor` while the model itself was not confident (model
/// ratio below 1.5).
pub fn s2_hacking_report(
    nodes: &[HeadNode],
    circuit_stats: &AttentionStats,
    model_stats: &AttentionStats,
    roles: &RoleMap,
    flag_factor: f64,
) -> Result<Vec<S2HackingRow>> {
    let mut rows = Vec::with_capacity(nodes.len());
    for node in nodes {
        let head = node.id();
        let model_ratio = confidence_ratio(model_stats, head, node.class, roles)?;
        let circuit_ratio = confidence_ratio(circuit_stats, head, node.class, roles)?;
        let (correct, incorrect) = characteristic_pairs(node.class, roles);
        let s_key = correct.first().map(|&(_, k)| k);
        let io_key = incorrect.first().map(|&(_, k)| k);
        let ff = |key: Option<Role>| -> Result<Option<f64>> {
            match key {
                Some(k) => {
                    functional_faithfulness(circuit_stats, model_stats, head, node.class, k, roles)
                }
                None => Ok(None),
            }
        };
        let flagged = match (model_ratio, circuit_ratio) {
            (Some(m), Some(c)) => c > flag_factor * m && m < 1.5,
            _ => false,
        };
        rows.push(S2HackingRow {
            head,
            class: node.class,
            model_ratio,
            circuit_ratio,
            ff_s: ff(s_key)?,
            ff_io: ff(io_key)?,
            flagged,
        });
    }
    Ok(rows)
}

/// Separate knockout evaluations per name order. Returns whatever strata
/// exist; a single-order dataset yields one entry.
pub fn order_stratified_eval(
    model: &Model,
    circuit: &CircuitSpec,
    dataset: &[PromptExample],
    means: &MeanCache,
) -> Result<Vec<(Order, MetricReport)>> {
    let mut out = Vec::new();
    for order in [Order::IoFirst, Order::SFirst] {
        let stratum: Vec<PromptExample> = dataset
            .iter()
            .filter(|ex| ex.order == order)
            .cloned()
            .collect();
        if stratum.is_empty() {
            continue;
        }
        out.push((order, evaluate_circuit(model, circuit, &stratum, means)?));
    }
    if out.is_empty() {
        return Err(Error::Other("empty dataset for order stratification".into()));
    }
    Ok(out)
}

/// Mean attention of one previous-token head to each name stream, within
/// one order stratum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcfsRow {
    pub head: HeadId,
    pub order: Order,
    pub n: usize,
    /// Attention from S1+1 to S1.
    pub attn_s: f64,
    /// Attention from IO1+1 to IO1.
    pub attn_io: f64,
}

/// The previous-token heads the "first come, first serve" analysis
/// focuses on: 2.2 and 4.11.
pub fn fcfs_heads() -> Vec<HeadId> {
    vec![HeadId::new(2, 2), HeadId::new(4, 11)]
}

/// "First come, first serve" check: how previous-token heads split their
/// attention between the two name streams, per order.
pub fn first_come_first_serve_check(
    model: &Model,
    dataset: &[PromptExample],
    heads: &[HeadId],
) -> Result<Vec<FcfsRow>> {
    let mut rows = Vec::new();
    for order in [Order::IoFirst, Order::SFirst] {
        let stratum: Vec<PromptExample> = dataset
            .iter()
            .filter(|ex| ex.order == order)
            .cloned()
            .collect();
        if stratum.is_empty() {
            continue;
        }
        let stats = collect_attention_stats(model, &stratum, heads, None)?;
        for &head in heads {
            let attn_s = stats
                .mean(head, Role::S1Next, Role::S1)
                .ok_or_else(|| Error::Other(format!("missing S-stream stats for {head}")))?;
            let attn_io = stats
                .mean(head, Role::Io1Next, Role::Io1)
                .ok_or_else(|| Error::Other(format!("missing IO-stream stats for {head}")))?;
            rows.push(FcfsRow {
                head,
                order,
                n: stratum.len(),
                attn_s,
                attn_io,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn roles_double() -> RoleMap {
        let mut m = BTreeMap::new();
        for (i, r) in [
            Role::S1,
            Role::S1Next,
            Role::Io1,
            Role::Io1Next,
            Role::Io2,
            Role::Io2Next,
            Role::S2,
            Role::End,
        ]
        .into_iter()
        .enumerate()
        {
            m.insert(r, i);
        }
        RoleMap(m)
    }

    fn stats(entries: &[((HeadId, Role, Role), f64)]) -> AttentionStats {
        AttentionStats {
            context: Context::Model,
            n: 1,
            means: entries.iter().copied().collect(),
        }
    }

    #[test]
    fn confidence_ratio_uses_class_pairs() {
        let head = HeadId::new(8, 6);
        let s = stats(&[
            ((head, Role::End, Role::S2), 0.6),
            ((head, Role::End, Role::Io2), 0.3),
        ]);
        let r = confidence_ratio(&s, head, HeadClass::SInhibition, &roles_double())
            .unwrap()
            .unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_is_excluded_not_an_error() {
        let head = HeadId::new(8, 6);
        let s = stats(&[
            ((head, Role::End, Role::S2), 0.6),
            ((head, Role::End, Role::Io2), 0.0),
        ]);
        assert!(confidence_ratio(&s, head, HeadClass::SInhibition, &roles_double())
            .unwrap()
            .is_none());
    }

    #[test]
    fn functional_faithfulness_is_circuit_over_model() {
        let head = HeadId::new(8, 6);
        let c = stats(&[((head, Role::End, Role::S2), 0.8)]);
        let mut m = stats(&[((head, Role::End, Role::S2), 0.4)]);
        m.context = Context::Model;
        let ff = functional_faithfulness(
            &c,
            &m,
            head,
            HeadClass::SInhibition,
            Role::S2,
            &roles_double(),
        )
        .unwrap()
        .unwrap();
        assert!((ff - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deviation_is_absolute_difference() {
        let head = HeadId::new(3, 0);
        let base = stats(&[((head, Role::S2, Role::S1), 0.5)]);
        let var = stats(&[((head, Role::S2, Role::S1), 0.35)]);
        // base-task layout: no IO2 role
        let mut m = BTreeMap::new();
        for (i, r) in [Role::S1, Role::Io1, Role::S2, Role::End].into_iter().enumerate() {
            m.insert(r, i);
        }
        let d =
            attention_deviation(head, HeadClass::DuplicateToken, &base, &var, &RoleMap(m))
                .unwrap();
        assert!((d - 0.15).abs() < 1e-12);
    }

    #[test]
    fn raising_flag_factor_never_adds_flags() {
        let roles = roles_double();
        let circuit = crate::circuit::base_ioi_circuit();
        let mut entries = Vec::new();
        for node in &circuit.nodes {
            let (correct, incorrect) = characteristic_pairs(node.class, &roles);
            for (q, k) in correct.into_iter().chain(incorrect) {
                entries.push(((node.id(), q, k), 0.4));
            }
        }
        let m = stats(&entries);
        let mut inflated = entries.clone();
        for ((head, q, k), v) in inflated.iter_mut() {
            if *q == Role::End && *k == Role::S2 && head.layer == 8 {
                *v = 0.9;
            }
        }
        let c = stats(&inflated);
        let low = s2_hacking_report(&circuit.nodes, &c, &m, &roles, 1.5).unwrap();
        let high = s2_hacking_report(&circuit.nodes, &c, &m, &roles, 2.5).unwrap();
        for (l, h) in low.iter().zip(&high) {
            assert!(!h.flagged || l.flagged);
        }
        assert!(low.iter().any(|r| r.flagged));
    }
}
