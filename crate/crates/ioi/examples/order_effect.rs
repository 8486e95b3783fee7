// SPDX-License-Identifier: MIT OR Apache-2.0

//! Stratify the evaluation by name order and inspect the early
//! previous-token heads that cause the asymmetry.
//!
//! Prompts where the IO name appears before the subject ("IO-first") are
//! systematically easier than the reverse. The mechanism is a
//! first-come-first-serve effect in the previous-token heads: head 2.2
//! of GPT-2 small copies whichever name came *first* much more strongly,
//! while 4.11 treats both names roughly symmetrically.
//!
//! Run with `cargo run --release --example order_effect`.

#[path = "support/mod.rs"]
mod support;

use ioi_circuits::ablation::{build_reference_dataset, MeanCache};
use ioi_circuits::analysis::{fcfs_heads, first_come_first_serve_check, order_stratified_eval};
use ioi_circuits::circuit::HeadId;
use ioi_circuits::prompts::{generate_dataset, Variant};

fn main() {
    let model = support::load_model();
    let pools = support::load_pools(&model);
    let circuit = support::circuit_for(&model);

    let data = generate_dataset(&model.tokenizer, &pools, Variant::Base, 24, 0, 0.5).unwrap();
    let reference = build_reference_dataset(&model, &pools, &data, 16, 1).unwrap();
    let means = MeanCache::compute(&model, &reference).unwrap();

    println!("{:<10} {:>3} {:>10} {:>12}", "order", "n", "model LD", "circuit LD");
    for (order, report) in order_stratified_eval(&model, &circuit, &data, &means).unwrap() {
        println!(
            "{:<10} {:>3} {:>10.3} {:>12.3}",
            order.to_string(),
            report.n,
            report.mean_model,
            report.mean_circuit,
        );
    }

    // previous-token heads: attention from the token after each name back
    // to the name itself, split by which name came first
    let heads: Vec<HeadId> = if model.config.n_layers >= 12 {
        fcfs_heads()
    } else {
        circuit
            .nodes
            .iter()
            .filter(|n| matches!(n.class, ioi_circuits::circuit::HeadClass::PreviousToken))
            .map(|n| n.id())
            .collect()
    };
    println!("\nfirst-come-first-serve check (attention to S1 vs IO1 from the next token):");
    for row in first_come_first_serve_check(&model, &data, &heads).unwrap() {
        println!(
            "  {} | {:<10} n={:<3} attn->S1 {:.3}  attn->IO1 {:.3}",
            row.head, row.order.to_string(), row.n, row.attn_s, row.attn_io,
        );
    }
}
