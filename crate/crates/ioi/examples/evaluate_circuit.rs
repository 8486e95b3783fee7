// SPDX-License-Identifier: MIT OR Apache-2.0

//! Knockout-evaluate a circuit: mean-ablate everything outside it and
//! compare the logit difference (IO name minus repeated name, at the
//! final position) against the full model.
//!
//! Faithfulness is circuit LD / model LD. On GPT-2 small the base
//! circuit is faithful on the base task (~0.9) but *overshoots* on the
//! DoubleIO and TripleIO variants — it outperforms the model it was
//! extracted from, which is the first hint that it is not the mechanism
//! the full model uses there.
//!
//! Run with `cargo run --release --example evaluate_circuit`.

#[path = "support/mod.rs"]
mod support;

use ioi_circuits::ablation::{build_reference_dataset, evaluate_circuit, MeanCache};
use ioi_circuits::circuit::CircuitSpec;
use ioi_circuits::prompts::{generate_dataset, Variant};

fn main() {
    let model = support::load_model();
    let pools = support::load_pools(&model);
    let circuit = support::circuit_for(&model);

    println!("circuit `{}`: {} heads, {} edges", circuit.name, circuit.nodes.len(), circuit.edges.len());
    println!("{:<10} {:>10} {:>12} {:>13}", "variant", "model LD", "circuit LD", "faithfulness");

    for variant in [Variant::Base, Variant::Double, Variant::Triple] {
        let data = generate_dataset(&model.tokenizer, &pools, variant, 24, 0, 0.5).unwrap();

        // ablation means come from a reference set with the same templates
        // but fresh, mutually distinct names: no duplication to detect
        let reference = build_reference_dataset(&model, &pools, &data, 16, 1).unwrap();
        let means = MeanCache::compute(&model, &reference).unwrap();

        let report = evaluate_circuit(&model, &circuit, &data, &means).unwrap();
        println!(
            "{:<10} {:>10.3} {:>12.3} {:>13.3}",
            variant.to_string(),
            report.mean_model,
            report.mean_circuit,
            report.faithfulness,
        );

        // sanity: the whole-model "circuit" ablates nothing, so its
        // faithfulness is exactly 1
        let whole = evaluate_circuit(&model, &CircuitSpec::whole_model(), &data, &means).unwrap();
        assert!((whole.faithfulness - 1.0).abs() < 1e-4);
    }
}
