// SPDX-License-Identifier: MIT OR Apache-2.0
#![allow(dead_code)]

//! Shared setup for the examples.
//!
//! Every example works against the real GPT-2 small checkpoint when
//! `GPT2_SMALL_DIR` points at one (`model.safetensors` + `vocab.json` +
//! `merges.txt`). Without it they fall back to the tiny randomly
//! initialized model bundled for the test suite, so each example runs
//! out of the box — the printed numbers are then only illustrative.

use std::path::PathBuf;

use ioi_circuits::circuit::{
    base_ioi_circuit, CircuitEdge, CircuitSpec, EdgeDst, EdgeSite, EdgeSource, HeadClass, HeadId,
    HeadNode,
};
use ioi_circuits::model::Model;
use ioi_circuits::prompts::{FilteredPools, Role, WordPools};

pub fn load_model() -> Model {
    let dir = match std::env::var_os("GPT2_SMALL_DIR") {
        Some(d) => PathBuf::from(d),
        None => {
            eprintln!(
                "GPT2_SMALL_DIR is not set; using the bundled tiny demo model.\n\
                 Numbers below are illustrative only — point GPT2_SMALL_DIR at a\n\
                 GPT-2 small checkpoint to reproduce the real measurements.\n"
            );
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny-gpt2")
        }
    };
    Model::load_dir(&dir).expect("model checkpoint loads")
}

pub fn load_pools(model: &Model) -> FilteredPools {
    WordPools::builtin()
        .filter(&model.tokenizer)
        .expect("builtin word pools filter against the tokenizer")
}

/// The studied circuit when the model is GPT-2 small, or a one-head-per-class
/// stand-in sized for the 4x4 demo model otherwise.
pub fn circuit_for(model: &Model) -> CircuitSpec {
    if model.config.n_layers >= 12 && model.config.n_heads >= 12 {
        return base_ioi_circuit();
    }

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
        name: "demo-circuit".into(),
        nodes,
        edges,
        unrestricted: false,
    }
}
