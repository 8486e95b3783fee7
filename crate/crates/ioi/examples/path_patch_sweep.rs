// SPDX-License-Identifier: MIT OR Apache-2.0

//! Path patching: swap one head's output at one source position for its
//! value on a corrupted prompt, while freezing every other head, and
//! measure how the logit difference moves.
//!
//! Because every other head is frozen, only the *direct* path from the
//! patched activation to the receivers is live. A head's direct effect
//! on the logits therefore comes from its output at the final (END)
//! position; patches at earlier positions reach the logits only through
//! downstream receivers, which is what the second sweep measures.
//!
//! Run with `cargo run --release --example path_patch_sweep`.

#[path = "support/mod.rs"]
mod support;

use ioi_circuits::circuit::{HeadClass, HeadId};
use ioi_circuits::hooks::SiteKind;
use ioi_circuits::patching::{corrupt_counterparts, sweep_direct_effects, Receivers};
use ioi_circuits::prompts::{generate_dataset, Role, Variant};

fn main() {
    let model = support::load_model();
    let pools = support::load_pools(&model);
    let circuit = support::circuit_for(&model);

    let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 8, 0, 0.5).unwrap();
    // corrupted counterparts: identical template and role layout, but all
    // names fresh and distinct, so duplication-derived signals vanish
    let corrupts = corrupt_counterparts(&model, &pools, &data, 1).unwrap();

    // sweep 1: every head's END-position output straight into the logits
    let matrix =
        sweep_direct_effects(&model, &data, &corrupts, &Receivers::Logits, &[Role::End]).unwrap();
    let mut ranked: Vec<_> = matrix
        .heads
        .iter()
        .map(|&h| (h, matrix.get(h, Role::End).unwrap()))
        .collect();
    ranked.sort_by(|a, b| b.1 .1.abs().total_cmp(&a.1 .1.abs()));

    println!("mean clean logit diff: {:+.3} over {} prompts", matrix.mean_ld_clean, matrix.n);
    println!("top direct effects on the logits (patched at END):");
    for (head, (pct, delta)) in ranked.iter().take(6) {
        println!("  {head}: delta {delta:+.4}  ({pct:+.1}% of clean LD)");
    }

    // sweep 2: duplicate-name positions into the S-inhibition values —
    // which duplication stream do the inhibition heads actually read?
    let receivers = if model.config.n_layers >= 12 {
        Receivers::inhibition_values()
    } else {
        Receivers::Sites(
            circuit
                .nodes
                .iter()
                .filter(|n| n.class == HeadClass::SInhibition)
                .map(|n| (n.id(), SiteKind::Value))
                .collect(),
        )
    };
    let roles = [Role::S2, Role::Io2];
    let matrix = sweep_direct_effects(&model, &data, &corrupts, &receivers, &roles).unwrap();
    let mut ranked: Vec<(HeadId, f64, f64)> = matrix
        .heads
        .iter()
        .map(|&h| {
            let s = matrix.get(h, Role::S2).unwrap().1;
            let io = matrix.get(h, Role::Io2).unwrap().1;
            (h, s, io)
        })
        .collect();
    ranked.sort_by(|a, b| (b.1.abs() + b.2.abs()).total_cmp(&(a.1.abs() + a.2.abs())));

    println!("\ntop paths into the S-inhibition values (delta of the logit diff):");
    for (head, s, io) in ranked.iter().take(6) {
        println!("  {head}: from S2 {s:+.6}   from IO2 {io:+.6}");
    }
    println!("\nheads that respond to S2 but not IO2 track the *subject* duplication");
    println!("stream specifically — the asymmetry the DoubleIO variant is built to probe.");
}
