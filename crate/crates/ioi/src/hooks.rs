// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hook sites, activation caches, and intervention plans.
//!
//! A [`HookSite`] names one tensor produced during a forward pass. Per-head
//! sites (`query`, `key`, `value`, `head_output`, `attention_pattern`)
//! require a head index; block-level sites forbid one. [`ActivationCache`]
//! holds every site of one forward pass; an [`InterventionPlan`] replaces
//! rows of chosen sites before downstream computation consumes them.

use std::collections::HashMap;
use std::fmt;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};

/// Kind of tensor within a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    ResidualPre,
    Query,
    Key,
    Value,
    HeadOutput,
    AttentionPattern,
    AttnBlockOutput,
    MlpOutput,
    ResidualPost,
}

impl SiteKind {
    pub fn per_head(self) -> bool {
        matches!(
            self,
            SiteKind::Query
                | SiteKind::Key
                | SiteKind::Value
                | SiteKind::HeadOutput
                | SiteKind::AttentionPattern
        )
    }
}

impl fmt::Display for SiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SiteKind::ResidualPre => "residual_pre",
            SiteKind::Query => "query",
            SiteKind::Key => "key",
            SiteKind::Value => "value",
            SiteKind::HeadOutput => "head_output",
            SiteKind::AttentionPattern => "attention_pattern",
            SiteKind::AttnBlockOutput => "attn_block_output",
            SiteKind::MlpOutput => "mlp_output",
            SiteKind::ResidualPost => "residual_post",
        };
        f.write_str(s)
    }
}

/// One tensor location: layer, optional head, and site kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HookSite {
    pub layer: usize,
    pub head: Option<usize>,
    pub site: SiteKind,
}

impl HookSite {
    pub fn per_head(layer: usize, head: usize, site: SiteKind) -> Self {
        debug_assert!(site.per_head());
        HookSite {
            layer,
            head: Some(head),
            site,
        }
    }

    pub fn block(layer: usize, site: SiteKind) -> Self {
        debug_assert!(!site.per_head());
        HookSite {
            layer,
            head: None,
            site,
        }
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.layer >= cfg.n_layers {
            return Err(Error::InvalidIntervention(format!(
                "layer {} out of range (n_layers = {})",
                self.layer, cfg.n_layers
            )));
        }
        match (self.site.per_head(), self.head) {
            (true, Some(h)) if h < cfg.n_heads => Ok(()),
            (true, Some(h)) => Err(Error::InvalidIntervention(format!(
                "head {h} out of range (n_heads = {})",
                cfg.n_heads
            ))),
            (true, None) => Err(Error::InvalidIntervention(format!(
                "site {} requires a head index",
                self.site
            ))),
            (false, None) => Ok(()),
            (false, Some(_)) => Err(Error::InvalidIntervention(format!(
                "site {} does not take a head index",
                self.site
            ))),
        }
    }

    /// Row width of this site's tensor for a prompt of `len` tokens.
    pub fn width(&self, cfg: &ModelConfig, len: usize) -> usize {
        match self.site {
            SiteKind::Query | SiteKind::Key | SiteKind::Value | SiteKind::HeadOutput => cfg.d_head,
            SiteKind::AttentionPattern => len,
            _ => cfg.d_model,
        }
    }
}

impl fmt::Display for HookSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.head {
            Some(h) => write!(f, "L{}H{}.{}", self.layer, h, self.site),
            None => write!(f, "L{}.{}", self.layer, self.site),
        }
    }
}

/// All intermediate tensors of one forward pass, keyed by hook site.
///
/// Per-head sites are `[position, d_head]`; `attention_pattern` is
/// `[dst_position, src_position]`; block sites are `[position, d_model]`.
/// Values are stored post-intervention, so downstream consumers and the
/// cache always agree.
#[derive(Debug, Clone, Default)]
pub struct ActivationCache {
    entries: HashMap<HookSite, Array2<f32>>,
    len: usize,
}

impl ActivationCache {
    pub fn new(len: usize) -> Self {
        ActivationCache {
            entries: HashMap::new(),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn insert(&mut self, site: HookSite, value: Array2<f32>) {
        self.entries.insert(site, value);
    }

    pub fn get(&self, site: &HookSite) -> Option<&Array2<f32>> {
        self.entries.get(site)
    }

    pub fn sites(&self) -> impl Iterator<Item = &HookSite> {
        self.entries.keys()
    }

    /// Attention row for `head` in `layer` at destination position `dst`.
    pub fn attention_row(&self, layer: usize, head: usize, dst: usize) -> Option<ArrayView1<'_, f32>> {
        self.get(&HookSite::per_head(layer, head, SiteKind::AttentionPattern))
            .map(|p| p.row(dst))
    }

    /// Check that every cached attention row is a causal probability
    /// distribution: sums to one and puts no mass on future positions.
    pub fn validate_attention(&self, tol: f32) -> Result<()> {
        for (site, value) in &self.entries {
            if site.site != SiteKind::AttentionPattern {
                continue;
            }
            for (dst, row) in value.rows().into_iter().enumerate() {
                let sum: f32 = row.sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::Other(format!(
                        "{site} row {dst} sums to {sum}, expected 1"
                    )));
                }
                if row.iter().skip(dst + 1).any(|&x| x != 0.0) {
                    return Err(Error::Other(format!(
                        "{site} row {dst} has mass on future positions"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Positions an intervention applies to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Positions {
    All,
    Some(Vec<usize>),
}

impl Positions {
    pub fn resolve(&self, len: usize) -> Vec<usize> {
        match self {
            Positions::All => (0..len).collect(),
            Positions::Some(v) => v.clone(),
        }
    }
}

/// Replace the rows of `target` at `positions` with rows of `values`.
///
/// `values` has one row per resolved position, in the same order. For
/// key/value sites positions index the source axis; for queries,
/// head outputs, and block sites they index the destination axis.
#[derive(Debug, Clone)]
pub struct Intervention {
    pub target: HookSite,
    pub positions: Positions,
    pub values: Array2<f32>,
}

impl Intervention {
    /// Replacement covering all positions with a full `[len, width]` tensor.
    pub fn full(target: HookSite, values: Array2<f32>) -> Self {
        Intervention {
            target,
            positions: Positions::All,
            values,
        }
    }

    pub fn at(target: HookSite, positions: Vec<usize>, values: Array2<f32>) -> Self {
        Intervention {
            target,
            positions: Positions::Some(positions),
            values,
        }
    }
}

/// A validated set of interventions for one forward pass.
#[derive(Debug, Clone, Default)]
pub struct InterventionPlan {
    // site -> (position, item index, row index within the item's values)
    by_site: HashMap<HookSite, Vec<(usize, usize, usize)>>,
    items: Vec<Intervention>,
}

impl InterventionPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build a plan, rejecting out-of-range targets, shape mismatches, and
    /// conflicting replacements of the same (site, position).
    pub fn build(items: Vec<Intervention>, cfg: &ModelConfig, len: usize) -> Result<Self> {
        let mut by_site: HashMap<HookSite, Vec<(usize, usize, usize)>> = HashMap::new();
        let mut seen: HashMap<(HookSite, usize), ()> = HashMap::new();
        for (idx, item) in items.iter().enumerate() {
            item.target.validate(cfg)?;
            let positions = item.positions.resolve(len);
            let width = item.target.width(cfg, len);
            if item.values.nrows() != positions.len() || item.values.ncols() != width {
                return Err(Error::InvalidIntervention(format!(
                    "values for {} have shape {:?}, expected [{}, {}]",
                    item.target,
                    item.values.shape(),
                    positions.len(),
                    width
                )));
            }
            for (row, &pos) in positions.iter().enumerate() {
                if pos >= len {
                    return Err(Error::InvalidIntervention(format!(
                        "position {pos} out of range for prompt of length {len}"
                    )));
                }
                if seen.insert((item.target, pos), ()).is_some() {
                    return Err(Error::ConflictingIntervention {
                        layer: item.target.layer,
                        site: item.target.to_string(),
                        position: pos,
                    });
                }
                by_site.entry(item.target).or_default().push((pos, idx, row));
            }
        }
        Ok(InterventionPlan { by_site, items })
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of (site, position) replacements in the plan.
    pub fn num_targets(&self) -> usize {
        self.by_site.values().map(|v| v.len()).sum()
    }

    /// Apply replacements for `site` to `tensor` in place.
    pub(crate) fn apply(&self, site: &HookSite, tensor: &mut Array2<f32>) {
        if let Some(rows) = self.by_site.get(site) {
            for &(pos, item, row) in rows {
                tensor
                    .row_mut(pos)
                    .assign(&self.items[item].values.row(row));
            }
        }
    }
}
