// SPDX-License-Identifier: MIT OR Apache-2.0
#![allow(dead_code)] // each test binary uses a different subset

//! Shared fixture loading for integration tests.
//!
//! `tests/fixtures/tiny-gpt2` holds a small randomly-initialized model in
//! the standard GPT-2 checkpoint format, its tokenizer files, and frozen
//! outputs of a public reference implementation on the same files. Tests
//! that need the real GPT-2 small checkpoint read its directory from
//! `GPT2_SMALL_DIR` and skip when it is unset.

use std::path::PathBuf;

use ioi_circuits::model::Model;
use ioi_circuits::prompts::{FilteredPools, WordPools};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny-gpt2")
}

pub fn fixture_model() -> Model {
    Model::load_dir(&fixture_dir()).expect("fixture model loads")
}

pub fn fixture_pools(model: &Model) -> FilteredPools {
    WordPools::builtin()
        .filter(&model.tokenizer)
        .expect("builtin pools filter against fixture tokenizer")
}

/// Directory with the real GPT-2 small checkpoint, when available.
pub fn real_model_dir() -> Option<PathBuf> {
    std::env::var_os("GPT2_SMALL_DIR").map(PathBuf::from)
}

/// A miniature circuit with one head per class, sized for the fixture's
/// 4x4 head grid. Mirrors the edge structure of the full circuit.
pub fn tiny_circuit() -> ioi_circuits::circuit::CircuitSpec {
    use ioi_circuits::circuit::{
        CircuitEdge, CircuitSpec, EdgeDst, EdgeSite, EdgeSource, HeadClass, HeadId, HeadNode,
    };
    use ioi_circuits::prompts::Role;

    let dt = HeadId::new(0, 1);
    let pt = HeadId::new(0, 2);
    let ind = HeadId::new(1, 1);
    let si = HeadId::new(2, 0);
    let nm = HeadId::new(3, 1);
    let neg = HeadId::new(3, 2);
    let backup = HeadId::new(3, 0);

    let nodes = vec![
        HeadNode { layer: 0, head: 1, class: HeadClass::DuplicateToken },
        HeadNode { layer: 0, head: 2, class: HeadClass::PreviousToken },
        HeadNode { layer: 1, head: 1, class: HeadClass::Induction },
        HeadNode { layer: 2, head: 0, class: HeadClass::SInhibition },
        HeadNode { layer: 3, head: 1, class: HeadClass::NameMover },
        HeadNode { layer: 3, head: 2, class: HeadClass::NegativeNameMover },
        HeadNode { layer: 3, head: 0, class: HeadClass::BackupNameMover },
    ];

    let role = |r: Role, dst: HeadId, site: EdgeSite, at: Role| CircuitEdge {
        src: EdgeSource::Role(r),
        dst: EdgeDst::Head(dst),
        site,
        position_role: at,
    };
    let head = |src: HeadId, dst: HeadId, site: EdgeSite, at: Role| CircuitEdge {
        src: EdgeSource::Head(src),
        dst: EdgeDst::Head(dst),
        site,
        position_role: at,
    };
    let logits = |src: HeadId| CircuitEdge {
        src: EdgeSource::Head(src),
        dst: EdgeDst::Logits,
        site: EdgeSite::Logits,
        position_role: Role::End,
    };

    let edges = vec![
        role(Role::S2, dt, EdgeSite::Key, Role::S1),
        role(Role::S2, dt, EdgeSite::Value, Role::S1),
        role(Role::S2, pt, EdgeSite::Key, Role::S1),
        role(Role::S2, pt, EdgeSite::Value, Role::S1),
        head(dt, ind, EdgeSite::Query, Role::S2),
        head(pt, ind, EdgeSite::Value, Role::S1Next),
        head(dt, si, EdgeSite::Value, Role::S2),
        head(ind, si, EdgeSite::Value, Role::S2),
        head(si, nm, EdgeSite::Query, Role::End),
        head(si, neg, EdgeSite::Query, Role::End),
        role(Role::Io1, nm, EdgeSite::Key, Role::Io1),
        role(Role::Io1, nm, EdgeSite::Value, Role::Io1),
        role(Role::S1, nm, EdgeSite::Key, Role::S1),
        role(Role::S1, nm, EdgeSite::Value, Role::S1),
        role(Role::S2, nm, EdgeSite::Value, Role::S2),
        role(Role::Io1, neg, EdgeSite::Key, Role::Io1),
        role(Role::Io1, neg, EdgeSite::Value, Role::Io1),
        logits(nm),
        logits(neg),
        logits(backup),
    ];

    CircuitSpec {
        name: "tiny-fixture-circuit".into(),
        nodes,
        edges,
        unrestricted: false,
    }
}
