// SPDX-License-Identifier: MIT OR Apache-2.0

//! The instrumentation layer everything else is built on: run a forward
//! pass with a full activation cache, read per-head attention, and
//! replace a single head's output at chosen positions.
//!
//! Run with `cargo run --example hooked_forward`.

#[path = "support/mod.rs"]
mod support;

use ndarray::Array2;

use ioi_circuits::hooks::{HookSite, Intervention, InterventionPlan, SiteKind};
use ioi_circuits::model::logit_diff;
use ioi_circuits::prompts::{generate_dataset, Role, Variant};

fn main() {
    let model = support::load_model();
    let pools = support::load_pools(&model);
    let ex = &generate_dataset(&model.tokenizer, &pools, Variant::Base, 1, 0, 1.0).unwrap()[0];

    println!("prompt: {}", ex.text);
    let (logits, cache) = model.forward(&ex.tokens).unwrap();
    let end = ex.roles.end();
    let (io, s) = (ex.io_token(&model.tokenizer), ex.s_token(&model.tokenizer));
    let ld = logit_diff(&logits, io, s, end, model.config.vocab_size).unwrap();
    println!("clean logit diff (IO - S at END): {ld:+.3}");

    // the cache holds every per-head site: queries, keys, values, head
    // outputs, and attention patterns
    println!("cached sites: {}", cache.num_entries());
    let s1 = ex.roles.require(Role::S1).unwrap();
    let row = cache.attention_row(0, 0, end).unwrap();
    println!(
        "head 0.0 attention END->S1: {:.3} (row sums to {:.3})",
        row[s1],
        row.sum()
    );

    // zero a first-layer head's output everywhere except the END position
    // and rerun; interventions replace rows *after* the site is computed,
    // so the change propagates through every later layer
    let site = HookSite::per_head(0, 0, SiteKind::HeadOutput);
    let positions: Vec<usize> = (0..end).collect();
    let zeros = Array2::zeros((positions.len(), model.config.d_head));
    let plan = InterventionPlan::build(
        vec![Intervention::at(site, positions, zeros)],
        &model.config,
        ex.tokens.len(),
    )
    .unwrap();
    let (patched, _) = model.forward_with_interventions(&ex.tokens, &plan).unwrap();
    let ld_patched = logit_diff(&patched, io, s, end, model.config.vocab_size).unwrap();
    println!(
        "after zeroing head 0.0 outside END: {ld_patched:+.3} (delta {:+.4})",
        ld_patched - ld
    );
}
