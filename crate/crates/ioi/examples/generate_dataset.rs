// SPDX-License-Identifier: MIT OR Apache-2.0

//! Generate aligned prompt datasets for the three task variants.
//!
//! Each prompt mentions two names; the model should complete it with the
//! name that was *not* repeated (the indirect object, "IO"). The Double
//! and Triple variants repeat the IO name itself two or three times,
//! which turns the base task's shortcut — "pick the non-duplicated
//! name" — into a trap.
//!
//! Run with `cargo run --example generate_dataset`.

#[path = "support/mod.rs"]
mod support;

use ioi_circuits::prompts::{generate_dataset, to_jsonl, Variant};

fn main() {
    let model = support::load_model();
    let pools = support::load_pools(&model);

    for variant in [Variant::Base, Variant::Double, Variant::Triple] {
        // seeded and deterministic: same (variant, n, seed, mix) => same data
        let data = generate_dataset(&model.tokenizer, &pools, variant, 4, 0, 0.5)
            .expect("dataset generation");

        println!("=== {variant} ===");
        let ex = &data[0];
        println!("prompt: {}", ex.text);
        println!("answer: {} (distractor: {})", ex.io_name, ex.s_name);

        // every example carries a token-level role map; interventions and
        // attention statistics are all phrased in terms of these roles
        let labels: Vec<String> = ex
            .roles
            .0
            .iter()
            .map(|(role, pos)| format!("{role}@{pos}"))
            .collect();
        println!("roles:  {}", labels.join(" "));

        // serialize for the CLI or later runs
        let jsonl = to_jsonl(&data);
        println!("jsonl:  {} lines, first 80 chars:", data.len());
        println!("        {}...\n", &jsonl.lines().next().unwrap()[..80]);
    }
}
