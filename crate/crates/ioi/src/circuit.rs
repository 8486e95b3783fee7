// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention-head circuits over token roles.
//!
//! A circuit is a set of head nodes plus edges describing which inputs each
//! head is allowed to read and where its output goes. Edges are
//! `(source, destination, site, position_role)` tuples: the source is
//! either a token role or another head, the destination a head (at one of
//! its `query` / `key` / `value` inputs) or the logits.
//!
//! [`ablation_targets`] lowers a circuit to concrete mean-ablation targets
//! for one prompt: everything outside the circuit is knocked out, and
//! circuit heads keep clean activations only at the positions their edges
//! license. Queries are never ablated; a head's behaviour at its active
//! positions is carried by which keys and values it is allowed to see.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::hooks::{HookSite, SiteKind};
use crate::prompts::{Role, RoleMap};

/// Functional class of a head within the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HeadClass {
    NameMover,
    NegativeNameMover,
    BackupNameMover,
    SInhibition,
    Induction,
    DuplicateToken,
    PreviousToken,
}

impl fmt::Display for HeadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One attention head, written `layer.head` in serialized form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub const fn new(layer: usize, head: usize) -> Self {
        HeadId { layer, head }
    }

    pub fn site(self, kind: SiteKind) -> HookSite {
        HookSite::per_head(self.layer, self.head, kind)
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.layer, self.head)
    }
}

impl FromStr for HeadId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (l, h) = s.split_once('.').ok_or_else(|| Error::Parse {
            what: "head id".into(),
            detail: format!("expected `layer.head`, got `{s}`"),
        })?;
        let parse = |x: &str| {
            x.parse::<usize>().map_err(|_| Error::Parse {
                what: "head id".into(),
                detail: format!("non-numeric component in `{s}`"),
            })
        };
        Ok(HeadId::new(parse(l)?, parse(h)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HeadNode {
    pub layer: usize,
    pub head: usize,
    pub class: HeadClass,
}

impl HeadNode {
    pub fn id(&self) -> HeadId {
        HeadId::new(self.layer, self.head)
    }
}

/// An edge source: a token role or an upstream head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeSource {
    Role(Role),
    Head(HeadId),
}

impl fmt::Display for EdgeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeSource::Role(r) => write!(f, "{r}"),
            EdgeSource::Head(h) => write!(f, "{h}"),
        }
    }
}

impl FromStr for EdgeSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(role) = s.parse::<Role>() {
            return Ok(EdgeSource::Role(role));
        }
        Ok(EdgeSource::Head(s.parse()?))
    }
}

/// An edge destination: a downstream head or the logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeDst {
    Head(HeadId),
    Logits,
}

impl fmt::Display for EdgeDst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeDst::Head(h) => write!(f, "{h}"),
            EdgeDst::Logits => f.write_str("LOGITS"),
        }
    }
}

impl FromStr for EdgeDst {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "LOGITS" {
            return Ok(EdgeDst::Logits);
        }
        Ok(EdgeDst::Head(s.parse()?))
    }
}

/// The destination site an edge feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSite {
    Query,
    Key,
    Value,
    Logits,
}

impl fmt::Display for EdgeSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeSite::Query => "query",
            EdgeSite::Key => "key",
            EdgeSite::Value => "value",
            EdgeSite::Logits => "logits",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CircuitEdge {
    #[serde(with = "edge_src_str")]
    pub src: EdgeSource,
    #[serde(with = "edge_dst_str")]
    pub dst: EdgeDst,
    pub site: EdgeSite,
    /// Role at whose token position the destination reads the source.
    pub position_role: Role,
}

impl CircuitEdge {
    fn new(src: EdgeSource, dst: EdgeDst, site: EdgeSite, position_role: Role) -> Self {
        CircuitEdge {
            src,
            dst,
            site,
            position_role,
        }
    }
}

mod edge_src_str {
    use super::EdgeSource;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &EdgeSource, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EdgeSource, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod edge_dst_str {
    use super::EdgeDst;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &EdgeDst, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<EdgeDst, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A named circuit: nodes, edges, and an `unrestricted` escape hatch that
/// marks the whole model as the "circuit" (no knockout at all).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub name: String,
    pub nodes: Vec<HeadNode>,
    pub edges: Vec<CircuitEdge>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub unrestricted: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl CircuitSpec {
    /// The whole model: evaluation under this spec applies no interventions.
    pub fn whole_model() -> Self {
        CircuitSpec {
            name: "whole-model".into(),
            nodes: Vec::new(),
            edges: Vec::new(),
            unrestricted: true,
        }
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.unrestricted {
            return Ok(());
        }
        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if node.layer >= cfg.n_layers || node.head >= cfg.n_heads {
                return Err(Error::Circuit(format!(
                    "node {} out of range for a {}x{} model",
                    node.id(),
                    cfg.n_layers,
                    cfg.n_heads
                )));
            }
            if !seen.insert(node.id()) {
                return Err(Error::Circuit(format!("duplicate node {}", node.id())));
            }
        }
        let mut seen_edges = BTreeSet::new();
        for edge in &self.edges {
            if let EdgeSource::Head(h) = edge.src {
                if !seen.contains(&h) {
                    return Err(Error::Circuit(format!("edge source {h} is not a node")));
                }
            }
            match (edge.dst, edge.site) {
                (EdgeDst::Logits, EdgeSite::Logits) => {}
                (EdgeDst::Logits, site) => {
                    return Err(Error::Circuit(format!(
                        "edge into LOGITS must use the logits site, got {site}"
                    )))
                }
                (EdgeDst::Head(_), EdgeSite::Logits) => {
                    return Err(Error::Circuit(
                        "logits site requires the LOGITS destination".into(),
                    ))
                }
                (EdgeDst::Head(h), _) => {
                    if !seen.contains(&h) {
                        return Err(Error::Circuit(format!(
                            "edge destination {h} is not a node"
                        )));
                    }
                }
            }
            if !seen_edges.insert(*edge) {
                return Err(Error::Circuit(format!(
                    "duplicate edge {} -> {} at {}",
                    edge.src, edge.dst, edge.site
                )));
            }
        }
        Ok(())
    }

    pub fn head_ids(&self) -> BTreeSet<HeadId> {
        self.nodes.iter().map(HeadNode::id).collect()
    }

    pub fn class_of(&self, id: HeadId) -> Option<HeadClass> {
        self.nodes
            .iter()
            .find(|n| n.id() == id)
            .map(|n| n.class)
    }

    fn heads_of_class(&self, class: HeadClass) -> Vec<HeadId> {
        self.nodes
            .iter()
            .filter(|n| n.class == class)
            .map(HeadNode::id)
            .collect()
    }

    /// Duplicate-occurrence roles with input paths into the duplicate-token
    /// heads; these license duplication detection for that occurrence.
    pub fn licensed_duplicates(&self) -> BTreeSet<Role> {
        self.edges
            .iter()
            .filter_map(|e| match (e.src, e.dst) {
                (EdgeSource::Role(r), EdgeDst::Head(h))
                    if r.is_duplicate_occurrence()
                        && self.class_of(h) == Some(HeadClass::DuplicateToken) =>
                {
                    Some(r)
                }
                _ => None,
            })
            .collect()
    }

    /// Grow the circuit with input paths for one more duplicated name
    /// occurrence: two edges (key and value) into each duplicate-token head
    /// and each previous-token head. Idempotent.
    pub fn add_input_paths(&self, role: Role) -> Result<CircuitSpec> {
        if !role.is_duplicate_occurrence() {
            return Err(Error::Circuit(format!(
                "{role} is not a duplicate name occurrence"
            )));
        }
        let prev = role.previous_occurrence().unwrap();
        let mut out = self.clone();
        out.name = format!("{}+{}", self.name, role);
        for class in [HeadClass::DuplicateToken, HeadClass::PreviousToken] {
            for head in self.heads_of_class(class) {
                for site in [EdgeSite::Key, EdgeSite::Value] {
                    let edge = CircuitEdge::new(
                        EdgeSource::Role(role),
                        EdgeDst::Head(head),
                        site,
                        prev,
                    );
                    if !out.edges.contains(&edge) {
                        out.edges.push(edge);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Fraction of `other`'s nodes also present in `base`.
pub fn node_overlap(base: &CircuitSpec, other: &CircuitSpec) -> f64 {
    let b = base.head_ids();
    let o = other.head_ids();
    if o.is_empty() {
        return 0.0;
    }
    o.intersection(&b).count() as f64 / o.len() as f64
}

/// Fraction of `other`'s edges also present in `base`.
pub fn edge_overlap(base: &CircuitSpec, other: &CircuitSpec) -> f64 {
    let b: BTreeSet<_> = base.edges.iter().collect();
    let o: BTreeSet<_> = other.edges.iter().collect();
    if o.is_empty() {
        return 0.0;
    }
    o.intersection(&b).count() as f64 / o.len() as f64
}

/// The 26-node, 110-edge circuit for the base task.
pub fn base_ioi_circuit() -> CircuitSpec {
    use HeadClass::*;
    let roster: &[(HeadClass, &[(usize, usize)])] = &[
        (DuplicateToken, &[(0, 1), (0, 10), (3, 0)]),
        (PreviousToken, &[(2, 2), (4, 11)]),
        (Induction, &[(5, 5), (5, 8), (5, 9), (6, 9)]),
        (SInhibition, &[(7, 3), (7, 9), (8, 6), (8, 10)]),
        (
            BackupNameMover,
            &[
                (9, 0),
                (9, 7),
                (10, 1),
                (10, 2),
                (10, 6),
                (10, 10),
                (11, 2),
                (11, 6),
            ],
        ),
        (NameMover, &[(9, 6), (9, 9), (10, 0)]),
        (NegativeNameMover, &[(10, 7), (11, 10)]),
    ];

    let mut nodes = Vec::new();
    let mut by_class: BTreeMap<HeadClass, Vec<HeadId>> = BTreeMap::new();
    for &(class, heads) in roster {
        for &(layer, head) in heads {
            nodes.push(HeadNode { layer, head, class });
            by_class.entry(class).or_default().push(HeadId::new(layer, head));
        }
    }
    nodes.sort();

    let mut edges = Vec::new();
    fn role_in(edges: &mut Vec<CircuitEdge>, role: Role, dst: HeadId, site: EdgeSite, at: Role) {
        edges.push(CircuitEdge::new(
            EdgeSource::Role(role),
            EdgeDst::Head(dst),
            site,
            at,
        ));
    }
    fn head_in(edges: &mut Vec<CircuitEdge>, src: HeadId, dst: HeadId, site: EdgeSite, at: Role) {
        edges.push(CircuitEdge::new(
            EdgeSource::Head(src),
            EdgeDst::Head(dst),
            site,
            at,
        ));
    }

    // S2 feeds the keys and values the duplicate detectors compare against,
    // read at the first subject occurrence.
    for &h in &by_class[&DuplicateToken] {
        role_in(&mut edges, Role::S2, h, EdgeSite::Key, Role::S1);
        role_in(&mut edges, Role::S2, h, EdgeSite::Value, Role::S1);
    }
    for &h in &by_class[&PreviousToken] {
        role_in(&mut edges, Role::S2, h, EdgeSite::Key, Role::S1);
        role_in(&mut edges, Role::S2, h, EdgeSite::Value, Role::S1);
    }

    for &ind in &by_class[&Induction] {
        // duplicate detectors drive induction queries at the repeat;
        // previous-token features carry the matched value one step ahead
        for &dt in &by_class[&DuplicateToken] {
            head_in(&mut edges, dt, ind, EdgeSite::Query, Role::S2);
        }
        for &pt in &by_class[&PreviousToken] {
            head_in(&mut edges, pt, ind, EdgeSite::Value, Role::S1Next);
        }
    }

    for &si in &by_class[&SInhibition] {
        for &dt in &by_class[&DuplicateToken] {
            head_in(&mut edges, dt, si, EdgeSite::Value, Role::S2);
        }
        for &ind in &by_class[&Induction] {
            head_in(&mut edges, ind, si, EdgeSite::Value, Role::S2);
        }
    }

    for &nm in &by_class[&NameMover] {
        for &si in &by_class[&SInhibition] {
            head_in(&mut edges, si, nm, EdgeSite::Query, Role::End);
        }
    }
    for &neg in &by_class[&NegativeNameMover] {
        for &si in &by_class[&SInhibition] {
            head_in(&mut edges, si, neg, EdgeSite::Query, Role::End);
        }
    }

    // name movers read both candidate names; the subject value is also
    // available at its repeat
    for &nm in &by_class[&NameMover] {
        role_in(&mut edges, Role::Io1, nm, EdgeSite::Key, Role::Io1);
        role_in(&mut edges, Role::Io1, nm, EdgeSite::Value, Role::Io1);
        role_in(&mut edges, Role::S1, nm, EdgeSite::Key, Role::S1);
        role_in(&mut edges, Role::S1, nm, EdgeSite::Value, Role::S1);
        role_in(&mut edges, Role::S2, nm, EdgeSite::Value, Role::S2);
    }
    for &neg in &by_class[&NegativeNameMover] {
        role_in(&mut edges, Role::Io1, neg, EdgeSite::Key, Role::Io1);
        role_in(&mut edges, Role::Io1, neg, EdgeSite::Value, Role::Io1);
    }

    for class in [NameMover, NegativeNameMover, BackupNameMover] {
        for &h in &by_class[&class] {
            edges.push(CircuitEdge::new(
                EdgeSource::Head(h),
                EdgeDst::Logits,
                EdgeSite::Logits,
                Role::End,
            ));
        }
    }

    CircuitSpec {
        name: "base-ioi".into(),
        nodes,
        edges,
        unrestricted: false,
    }
}

/// Mean-ablation targets implementing circuit knockout for one prompt:
/// every `(site, positions)` pair listed is to be replaced with reference
/// means. Sorted and deterministic.
pub fn ablation_targets(
    circuit: &CircuitSpec,
    cfg: &ModelConfig,
    roles: &RoleMap,
    len: usize,
) -> Result<Vec<(HookSite, Vec<usize>)>> {
    if circuit.unrestricted {
        return Ok(Vec::new());
    }
    circuit.validate(cfg)?;

    // per circuit head: positions where z stays clean, and per-site
    // positions where k/v stay clean
    let mut active: BTreeMap<HeadId, BTreeSet<usize>> = BTreeMap::new();
    let mut keep_kv: BTreeMap<(HeadId, SiteKind), BTreeSet<usize>> = BTreeMap::new();
    for node in &circuit.nodes {
        active.insert(node.id(), BTreeSet::new());
        keep_kv.insert((node.id(), SiteKind::Key), BTreeSet::new());
        keep_kv.insert((node.id(), SiteKind::Value), BTreeSet::new());
    }

    let duplicates = circuit.licensed_duplicates();
    for &r in &duplicates {
        if !roles.contains(r) {
            return Err(Error::Circuit(format!(
                "circuit licenses {r} but the prompt variant has no such role"
            )));
        }
    }
    let end = roles.require(Role::End)?;

    for node in &circuit.nodes {
        let id = node.id();
        match node.class {
            HeadClass::DuplicateToken => {
                for &r in &duplicates {
                    let prev = r.previous_occurrence().unwrap();
                    active.get_mut(&id).unwrap().insert(roles.require(r)?);
                    for site in [SiteKind::Key, SiteKind::Value] {
                        keep_kv
                            .get_mut(&(id, site))
                            .unwrap()
                            .insert(roles.require(prev)?);
                    }
                }
            }
            HeadClass::PreviousToken => {
                for &r in &duplicates {
                    let prev = roles.require(r.previous_occurrence().unwrap())?;
                    active.get_mut(&id).unwrap().insert(prev + 1);
                    for site in [SiteKind::Key, SiteKind::Value] {
                        keep_kv.get_mut(&(id, site)).unwrap().insert(prev);
                    }
                }
            }
            HeadClass::Induction => {
                for &r in &duplicates {
                    let prev = roles.require(r.previous_occurrence().unwrap())?;
                    active.get_mut(&id).unwrap().insert(roles.require(r)?);
                    for site in [SiteKind::Key, SiteKind::Value] {
                        keep_kv.get_mut(&(id, site)).unwrap().insert(prev + 1);
                    }
                }
            }
            HeadClass::SInhibition => {
                active.get_mut(&id).unwrap().insert(end);
                for &r in &duplicates {
                    let pos = roles.require(r)?;
                    for site in [SiteKind::Key, SiteKind::Value] {
                        keep_kv.get_mut(&(id, site)).unwrap().insert(pos);
                    }
                }
            }
            HeadClass::NameMover | HeadClass::NegativeNameMover | HeadClass::BackupNameMover => {
                active.get_mut(&id).unwrap().insert(end);
                for edge in &circuit.edges {
                    let (EdgeSource::Role(r), EdgeDst::Head(h)) = (edge.src, edge.dst) else {
                        continue;
                    };
                    if h != id {
                        continue;
                    }
                    let site = match edge.site {
                        EdgeSite::Key => SiteKind::Key,
                        EdgeSite::Value => SiteKind::Value,
                        _ => continue,
                    };
                    if roles.contains(r) {
                        keep_kv.get_mut(&(id, site)).unwrap().insert(roles.require(r)?);
                    }
                }
            }
        }
    }

    let mut targets = Vec::new();
    for layer in 0..cfg.n_layers {
        for head in 0..cfg.n_heads {
            let id = HeadId::new(layer, head);
            match active.get(&id) {
                // outside the circuit: head output replaced everywhere
                None => targets.push((id.site(SiteKind::HeadOutput), (0..len).collect())),
                Some(keep) => {
                    let z_out: Vec<usize> = (0..len).filter(|p| !keep.contains(p)).collect();
                    if !z_out.is_empty() {
                        targets.push((id.site(SiteKind::HeadOutput), z_out));
                    }
                    for site in [SiteKind::Key, SiteKind::Value] {
                        let licensed = &keep_kv[&(id, site)];
                        let out: Vec<usize> =
                            (0..len).filter(|p| !licensed.contains(p)).collect();
                        if !out.is_empty() {
                            targets.push((id.site(site), out));
                        }
                    }
                }
            }
        }
    }
    Ok(targets)
}
