// SPDX-License-Identifier: MIT OR Apache-2.0

//! Token-level path patching.
//!
//! A path effect isolates one route through the network: the output of a
//! sender head at one source token is replaced with its value from a
//! corrupted prompt, every other head output is frozen to its clean value,
//! and only the receivers are allowed to react. MLPs are recomputed
//! throughout; freezing applies to attention-head outputs only.
//!
//! Sign convention: effects are changes of the logit difference, so a
//! negative effect means the patched path was supporting the correct
//! answer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{base_ioi_circuit, HeadClass, HeadId};
use crate::error::{Error, Result};
use crate::forward::CacheMode;
use crate::hooks::{ActivationCache, Intervention, InterventionPlan, SiteKind};
use crate::model::Model;
use crate::prompts::{corrupt_names, FilteredPools, PromptExample, Role};

/// Where a patched path is allowed to land.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Receivers {
    /// The final logits: measures the sender's direct effect on the output.
    Logits,
    /// Specific head inputs; each entry is a `(head, site)` pair with the
    /// site restricted to query, key, or value.
    Sites(Vec<(HeadId, SiteKind)>),
}

impl Receivers {
    /// Query sites of the base circuit's name movers.
    pub fn name_mover_queries() -> Receivers {
        Receivers::class_sites(HeadClass::NameMover, SiteKind::Query)
    }

    /// Value sites of the base circuit's S-inhibition heads.
    pub fn inhibition_values() -> Receivers {
        Receivers::class_sites(HeadClass::SInhibition, SiteKind::Value)
    }

    fn class_sites(class: HeadClass, site: SiteKind) -> Receivers {
        let circuit = base_ioi_circuit();
        Receivers::Sites(
            circuit
                .nodes
                .iter()
                .filter(|n| n.class == class)
                .map(|n| (n.id(), site))
                .collect(),
        )
    }

    /// Whether a head is one of the receivers (and so cannot be a sender).
    pub fn contains(&self, head: HeadId) -> bool {
        match self {
            Receivers::Logits => false,
            Receivers::Sites(sites) => sites.iter().any(|&(h, _)| h == head),
        }
    }

    fn validate(&self, sender: HeadId) -> Result<()> {
        if let Receivers::Sites(sites) = self {
            if sites.is_empty() {
                return Err(Error::Patch("empty receiver set".into()));
            }
            for &(head, site) in sites {
                if !matches!(site, SiteKind::Query | SiteKind::Key | SiteKind::Value) {
                    return Err(Error::Patch(format!(
                        "receiver site must be query/key/value, got {site}"
                    )));
                }
                if head == sender {
                    return Err(Error::Patch(format!(
                        "sender {sender} cannot also be a receiver"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One sender path: a head's output at a source token role, landing on the
/// receivers.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub sender: HeadId,
    pub source_role: Role,
    pub receivers: Receivers,
}

/// Effect of one patched path on the logit difference.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathEffect {
    pub ld_clean: f64,
    pub ld_patched: f64,
    /// `ld_patched - ld_clean`.
    pub delta: f64,
    /// Percentage change relative to `|ld_clean|`; `None` when the clean
    /// logit difference is zero.
    pub percent: Option<f64>,
}

impl PathEffect {
    fn new(ld_clean: f64, ld_patched: f64) -> Self {
        let delta = ld_patched - ld_clean;
        let percent = (ld_clean != 0.0).then(|| 100.0 * delta / ld_clean.abs());
        PathEffect {
            ld_clean,
            ld_patched,
            delta,
            percent,
        }
    }
}

/// Shared per-prompt state for sweeping many senders over one clean/corrupt
/// pair: both caches plus the clean logit difference.
pub struct PatchContext<'a> {
    model: &'a Model,
    clean: &'a PromptExample,
    clean_cache: ActivationCache,
    corrupt_cache: ActivationCache,
    ld_clean: f64,
    io: u32,
    s: u32,
}

impl<'a> PatchContext<'a> {
    pub fn new(
        model: &'a Model,
        clean: &'a PromptExample,
        corrupt: &PromptExample,
    ) -> Result<Self> {
        if clean.tokens.len() != corrupt.tokens.len() || clean.roles != corrupt.roles {
            return Err(Error::Patch(
                "clean and corrupt prompts must share token length and role layout".into(),
            ));
        }
        let io = clean.io_token(&model.tokenizer);
        let s = clean.s_token(&model.tokenizer);
        let clean_out = model.end_logits(&clean.tokens, &InterventionPlan::empty(), CacheMode::Heads)?;
        let corrupt_out =
            model.end_logits(&corrupt.tokens, &InterventionPlan::empty(), CacheMode::Heads)?;
        let ld_clean = model.logit_diff(&clean_out.logits, io, s, 0)? as f64;
        Ok(PatchContext {
            model,
            clean,
            clean_cache: clean_out.cache,
            corrupt_cache: corrupt_out.cache,
            ld_clean,
            io,
            s,
        })
    }

    pub fn ld_clean(&self) -> f64 {
        self.ld_clean
    }

    /// Run the patch for one path against the precomputed caches.
    pub fn patch(&self, path: &PathSpec) -> Result<PathEffect> {
        path.receivers.validate(path.sender)?;
        let cfg = &self.model.config;
        let len = self.clean.tokens.len();
        let source = self.clean.roles.require(path.source_role)?;

        // frozen run: every head output pinned to clean, except the
        // sender's row at the source position, which comes from corrupt
        let mut items = Vec::with_capacity(cfg.total_heads());
        for layer in 0..cfg.n_layers {
            for head in 0..cfg.n_heads {
                let site = HeadId::new(layer, head).site(SiteKind::HeadOutput);
                let mut values = self
                    .clean_cache
                    .get(&site)
                    .ok_or_else(|| Error::Patch(format!("clean cache missing {site}")))?
                    .clone();
                if HeadId::new(layer, head) == path.sender {
                    let corrupt = self
                        .corrupt_cache
                        .get(&site)
                        .ok_or_else(|| Error::Patch(format!("corrupt cache missing {site}")))?;
                    values.row_mut(source).assign(&corrupt.row(source));
                }
                items.push(Intervention::full(site, values));
            }
        }
        let frozen_plan = InterventionPlan::build(items, cfg, len)?;
        let frozen = self
            .model
            .end_logits(&self.clean.tokens, &frozen_plan, CacheMode::Heads)?;

        let ld_patched = match &path.receivers {
            Receivers::Logits => {
                self.model.logit_diff(&frozen.logits, self.io, self.s, 0)? as f64
            }
            Receivers::Sites(sites) => {
                // final run: clean forward with only the receiver sites
                // overridden to their frozen-run values
                let mut items = Vec::with_capacity(sites.len());
                for &(head, site_kind) in sites {
                    let site = head.site(site_kind);
                    let values = frozen
                        .cache
                        .get(&site)
                        .ok_or_else(|| Error::Patch(format!("frozen cache missing {site}")))?
                        .clone();
                    items.push(Intervention::full(site, values));
                }
                let plan = InterventionPlan::build(items, cfg, len)?;
                let out = self.model.end_logits(&self.clean.tokens, &plan, CacheMode::None)?;
                self.model.logit_diff(&out.logits, self.io, self.s, 0)? as f64
            }
        };
        Ok(PathEffect::new(self.ld_clean, ld_patched))
    }
}

/// One-shot form of [`PatchContext::patch`].
pub fn path_patch(
    model: &Model,
    clean: &PromptExample,
    corrupt: &PromptExample,
    path: &PathSpec,
) -> Result<PathEffect> {
    PatchContext::new(model, clean, corrupt)?.patch(path)
}

/// Build corrupted counterparts for a dataset, reusing the knockout
/// reference construction (all duplication destroyed, layout preserved).
pub fn corrupt_counterparts(
    model: &Model,
    pools: &FilteredPools,
    dataset: &[PromptExample],
    seed: u64,
) -> Result<Vec<PromptExample>> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, ex)| corrupt_names(ex, seed.wrapping_add(i as u64), pools, &model.tokenizer))
        .collect()
}

/// Mean path effects for every head and each requested source role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectMatrix {
    pub heads: Vec<HeadId>,
    pub roles: Vec<Role>,
    /// `[head, role]` percentage change of the mean logit difference.
    pub percent: Vec<Vec<f64>>,
    /// `[head, role]` raw change of the mean logit difference.
    pub delta: Vec<Vec<f64>>,
    pub mean_ld_clean: f64,
    pub n: usize,
}

impl EffectMatrix {
    pub fn get(&self, head: HeadId, role: Role) -> Option<(f64, f64)> {
        let i = self.heads.iter().position(|&h| h == head)?;
        let j = self.roles.iter().position(|&r| r == role)?;
        Some((self.percent[i][j], self.delta[i][j]))
    }
}

/// Patch every head's output from every requested source role into the
/// receivers, averaged over the dataset.
pub fn sweep_direct_effects(
    model: &Model,
    dataset: &[PromptExample],
    corrupts: &[PromptExample],
    receivers: &Receivers,
    roles: &[Role],
) -> Result<EffectMatrix> {
    if dataset.is_empty() || dataset.len() != corrupts.len() {
        return Err(Error::Patch(
            "sweep needs matching non-empty clean and corrupt datasets".into(),
        ));
    }
    let cfg = &model.config;
    // receiver heads are excluded: a head cannot send a path to itself
    let heads: Vec<HeadId> = (0..cfg.n_layers)
        .flat_map(|l| (0..cfg.n_heads).map(move |h| HeadId::new(l, h)))
        .filter(|&h| !receivers.contains(h))
        .collect();

    // per prompt: [head x role] patched logit differences, plus clean LD
    let per_prompt: Vec<(Vec<Vec<f64>>, f64)> = dataset
        .par_iter()
        .zip(corrupts)
        .map(|(clean, corrupt)| {
            let ctx = PatchContext::new(model, clean, corrupt)?;
            let mut cells = vec![vec![0.0; roles.len()]; heads.len()];
            for (i, &sender) in heads.iter().enumerate() {
                for (j, &role) in roles.iter().enumerate() {
                    let effect = ctx.patch(&PathSpec {
                        sender,
                        source_role: role,
                        receivers: receivers.clone(),
                    })?;
                    cells[i][j] = effect.ld_patched;
                }
            }
            Ok((cells, ctx.ld_clean()))
        })
        .collect::<Result<_>>()?;

    let n = per_prompt.len() as f64;
    let mean_ld_clean = per_prompt.iter().map(|(_, ld)| ld).sum::<f64>() / n;
    let mut percent = vec![vec![0.0; roles.len()]; heads.len()];
    let mut delta = vec![vec![0.0; roles.len()]; heads.len()];
    for i in 0..heads.len() {
        for j in 0..roles.len() {
            let mean_patched =
                per_prompt.iter().map(|(cells, _)| cells[i][j]).sum::<f64>() / n;
            delta[i][j] = mean_patched - mean_ld_clean;
            percent[i][j] = if mean_ld_clean != 0.0 {
                100.0 * delta[i][j] / mean_ld_clean.abs()
            } else {
                0.0
            };
        }
    }
    Ok(EffectMatrix {
        heads,
        roles: roles.to_vec(),
        percent,
        delta,
        mean_ld_clean,
        n: per_prompt.len(),
    })
}

/// Per-head asymmetry between subject-sourced and IO-sourced direct
/// effects into the S-inhibition values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionPointRow {
    pub head: HeadId,
    pub class: HeadClass,
    pub effect_s: f64,
    pub effect_io: f64,
    /// `|effect_s| - |effect_io|`; large values flag heads that treat the
    /// two duplication streams asymmetrically.
    pub score: f64,
}

/// Scan the early-circuit heads (previous-token, duplicate-token,
/// induction) for asymmetric handling of the S2 and IO2 duplicates.
/// Requires a variant with an IO2 role.
pub fn decision_point_scan(
    model: &Model,
    dataset: &[PromptExample],
    corrupts: &[PromptExample],
) -> Result<Vec<DecisionPointRow>> {
    if dataset.iter().any(|ex| !ex.roles.contains(Role::Io2)) {
        return Err(Error::Patch(
            "decision-point scan needs prompts with a second IO occurrence".into(),
        ));
    }
    let matrix = sweep_direct_effects(
        model,
        dataset,
        corrupts,
        &Receivers::inhibition_values(),
        &[Role::S2, Role::Io2],
    )?;
    let circuit = base_ioi_circuit();
    let mut rows = Vec::new();
    for node in &circuit.nodes {
        if !matches!(
            node.class,
            HeadClass::PreviousToken | HeadClass::DuplicateToken | HeadClass::Induction
        ) {
            continue;
        }
        let (_, effect_s) = matrix.get(node.id(), Role::S2).unwrap();
        let (_, effect_io) = matrix.get(node.id(), Role::Io2).unwrap();
        rows.push(DecisionPointRow {
            head: node.id(),
            class: node.class,
            effect_s,
            effect_io,
            score: effect_s.abs() - effect_io.abs(),
        });
    }
    rows.sort_by(|a, b| b.score.abs().partial_cmp(&a.score.abs()).unwrap());
    Ok(rows)
}

/// Write an effect matrix as CSV: rows are `layer.head`, one column per
/// role, percentage values.
pub fn effect_matrix_csv(matrix: &EffectMatrix) -> String {
    let mut out = String::from("head");
    for role in &matrix.roles {
        out.push_str(&format!(",{role}_percent,{role}_delta"));
    }
    out.push('\n');
    for (i, head) in matrix.heads.iter().enumerate() {
        out.push_str(&head.to_string());
        for j in 0..matrix.roles.len() {
            out.push_str(&format!(",{:.6},{:.6}", matrix.percent[i][j], matrix.delta[i][j]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receivers_reject_sender_overlap_and_bad_sites() {
        let sender = HeadId::new(7, 3);
        assert!(Receivers::inhibition_values().validate(sender).is_err());
        assert!(Receivers::inhibition_values()
            .validate(HeadId::new(0, 0))
            .is_ok());
        let bad = Receivers::Sites(vec![(HeadId::new(9, 9), SiteKind::HeadOutput)]);
        assert!(bad.validate(HeadId::new(0, 0)).is_err());
    }

    #[test]
    fn effect_arithmetic() {
        let e = PathEffect::new(2.0, 1.0);
        assert_eq!(e.delta, -1.0);
        assert_eq!(e.percent, Some(-50.0));
        let z = PathEffect::new(0.0, 1.0);
        assert_eq!(z.percent, None);
    }
}
