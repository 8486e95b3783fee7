// SPDX-License-Identifier: MIT OR Apache-2.0

//! Diagnose "S2 hacking": heads whose class-characteristic attention
//! ratio looks healthy *inside the ablated circuit* but not in the full
//! model, on prompts where the IO name is also duplicated.
//!
//! The confidence ratio divides a head's attention on its
//! class-characteristic correct pairs (e.g. an induction head attending
//! from S2 back to S1+1) by its attention on the incorrect, IO-stream
//! analogue. A head is flagged when the circuit ratio beats the model
//! ratio by a factor while the model ratio itself is weak — evidence the
//! knockout *created* the behavior rather than exposed it.
//!
//! Run with `cargo run --release --example s2_hacking`.

#[path = "support/mod.rs"]
mod support;

use ioi_circuits::ablation::{build_reference_dataset, MeanCache};
use ioi_circuits::analysis::{collect_attention_stats, s2_hacking_report};
use ioi_circuits::circuit::HeadId;
use ioi_circuits::prompts::{generate_dataset, Variant};

fn main() {
    let model = support::load_model();
    let pools = support::load_pools(&model);
    let circuit = support::circuit_for(&model);

    let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 16, 0, 0.5).unwrap();
    let reference = build_reference_dataset(&model, &pools, &data, 12, 1).unwrap();
    let means = MeanCache::compute(&model, &reference).unwrap();

    let heads: Vec<HeadId> = circuit.nodes.iter().map(|n| n.id()).collect();
    let model_stats = collect_attention_stats(&model, &data, &heads, None).unwrap();
    let circuit_stats =
        collect_attention_stats(&model, &data, &heads, Some((&circuit, &means))).unwrap();

    let report = s2_hacking_report(
        &circuit.nodes,
        &circuit_stats,
        &model_stats,
        &data[0].roles,
        1.5,
    )
    .unwrap();

    println!(
        "{:<6} {:<18} {:>11} {:>13} {:>8}",
        "head", "class", "model ratio", "circuit ratio", "flagged"
    );
    let fmt = |r: Option<f64>| r.map_or("    -".into(), |v| format!("{v:9.2}"));
    for row in &report {
        println!(
            "{:<6} {:<18} {:>11} {:>13} {:>8}",
            row.head.to_string(),
            format!("{:?}", row.class),
            fmt(row.model_ratio),
            fmt(row.circuit_ratio),
            if row.flagged { "YES" } else { "" },
        );
    }
    println!("\non GPT-2 small, heads 8.6, 5.9, 5.5 and 3.0 are flagged on DoubleIO");
    println!("while no head is flagged on the base task.");
}
