// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance gate: one test per criterion, each printing a single
//! PASS / FAIL / SKIP line.
//!
//! Criteria 1-3 and 5-7 reproduce published behavioral numbers and need
//! the real GPT-2 small checkpoint; point `GPT2_SMALL_DIR` at a directory
//! with `model.safetensors`, `vocab.json`, and `merges.txt` to run them.
//! Without it they report SKIP. Criteria 4 (structural, exact) and 8
//! (property suite) always run, using the bundled fixture model where
//! weights are needed.

mod common;

use std::sync::OnceLock;

use ioi_circuits::ablation::{
    build_reference_dataset, evaluate_circuit, MeanCache, MetricReport,
};
use ioi_circuits::analysis::{
    attention_deviation, collect_attention_stats, fcfs_heads, first_come_first_serve_check,
    s2_hacking_report, AttentionStats,
};
use ioi_circuits::circuit::{
    base_ioi_circuit, edge_overlap, node_overlap, CircuitSpec, HeadId,
};
use ioi_circuits::model::Model;
use ioi_circuits::prompts::{generate_dataset, FilteredPools, Order, Role, Variant, WordPools};

const SEED: u64 = 0;
const N: usize = 200;
const REF_N: usize = 100;

struct RealEnv {
    model: Model,
    pools: FilteredPools,
}

fn real_env() -> Option<&'static RealEnv> {
    static ENV: OnceLock<Option<RealEnv>> = OnceLock::new();
    ENV.get_or_init(|| {
        let dir = common::real_model_dir()?;
        let model = Model::load_dir(&dir).expect("GPT2_SMALL_DIR points at a loadable checkpoint");
        let pools = WordPools::builtin().filter(&model.tokenizer).unwrap();
        Some(RealEnv { model, pools })
    })
    .as_ref()
}

fn skip(criterion: &str) {
    println!("ACCEPTANCE {criterion}: SKIP (set GPT2_SMALL_DIR to a GPT-2 small checkpoint)");
}

struct VariantRun {
    dataset: Vec<ioi_circuits::prompts::PromptExample>,
    means: MeanCache,
    model_report: MetricReport,
    circuit_report: MetricReport,
    circuit: CircuitSpec,
}

fn run_variant(env: &RealEnv, variant: Variant) -> VariantRun {
    let dataset = generate_dataset(&env.model.tokenizer, &env.pools, variant, N, SEED, 0.5).unwrap();
    let reference =
        build_reference_dataset(&env.model, &env.pools, &dataset, REF_N, SEED + 1).unwrap();
    let means = MeanCache::compute(&env.model, &reference).unwrap();
    let circuit = base_ioi_circuit();
    let circuit_report = evaluate_circuit(&env.model, &circuit, &dataset, &means).unwrap();
    let whole = CircuitSpec::whole_model();
    let model_report = evaluate_circuit(&env.model, &whole, &dataset, &means).unwrap();
    VariantRun {
        dataset,
        means,
        model_report,
        circuit_report,
        circuit,
    }
}

fn variant_runs(env: &'static RealEnv) -> &'static [VariantRun; 3] {
    static RUNS: OnceLock<[VariantRun; 3]> = OnceLock::new();
    RUNS.get_or_init(|| {
        [
            run_variant(env, Variant::Base),
            run_variant(env, Variant::Double),
            run_variant(env, Variant::Triple),
        ]
    })
}

#[test]
fn acceptance_1_model_baselines() {
    let Some(env) = real_env() else {
        return skip("1 (model baselines)");
    };
    let runs = variant_runs(env);
    let expected = [3.484, 2.118, 1.227];
    let mut ok = true;
    for (run, want) in runs.iter().zip(expected) {
        ok &= (run.model_report.mean_model - want).abs() <= 0.5;
    }
    println!(
        "ACCEPTANCE 1 (model baselines): {} (LD = {:.3}/{:.3}/{:.3}, expected 3.484/2.118/1.227 ± 0.5)",
        if ok { "PASS" } else { "FAIL" },
        runs[0].model_report.mean_model,
        runs[1].model_report.mean_model,
        runs[2].model_report.mean_model,
    );
    assert!(ok);
}

#[test]
fn acceptance_2_base_circuit_knockout() {
    let Some(env) = real_env() else {
        return skip("2 (base-circuit knockout)");
    };
    let runs = variant_runs(env);
    let expected = [(3.119, 0.6), (2.722, 0.7), (3.174, 0.8)];
    let mut ok = true;
    for (run, (want, tol)) in runs.iter().zip(expected) {
        ok &= (run.circuit_report.mean_circuit - want).abs() <= tol;
    }
    // sign checks hold regardless of tolerance
    for run in &runs[1..] {
        ok &= run.circuit_report.mean_circuit - run.model_report.mean_model > 0.0;
    }
    println!(
        "ACCEPTANCE 2 (base-circuit knockout): {} (circuit LD = {:.3}/{:.3}/{:.3})",
        if ok { "PASS" } else { "FAIL" },
        runs[0].circuit_report.mean_circuit,
        runs[1].circuit_report.mean_circuit,
        runs[2].circuit_report.mean_circuit,
    );
    assert!(ok);
}

#[test]
fn acceptance_3_faithfulness() {
    let Some(env) = real_env() else {
        return skip("3 (faithfulness)");
    };
    let runs = variant_runs(env);
    let f_base = runs[0].circuit_report.faithfulness;
    let f_double = runs[1].circuit_report.faithfulness;
    let f_triple = runs[2].circuit_report.faithfulness;

    let double_edited = runs[1].circuit.add_input_paths(Role::Io2).unwrap();
    let triple_edited = runs[2]
        .circuit
        .add_input_paths(Role::Io2)
        .unwrap()
        .add_input_paths(Role::Io3)
        .unwrap();
    let f_double_edit = evaluate_circuit(&env.model, &double_edited, &runs[1].dataset, &runs[1].means)
        .unwrap()
        .faithfulness;
    let f_triple_edit = evaluate_circuit(&env.model, &triple_edited, &runs[2].dataset, &runs[2].means)
        .unwrap()
        .faithfulness;

    let ok = (f_base - 0.895).abs() <= 0.15
        && f_double > 1.1
        && f_triple > 2.0
        && (f_double_edit - 0.765).abs() <= 0.15
        && (f_triple_edit - 0.778).abs() <= 0.15;
    println!(
        "ACCEPTANCE 3 (faithfulness): {} (base {:.3}, double {:.3}, triple {:.3}, +IO2 {:.3}, +IO2+IO3 {:.3})",
        if ok { "PASS" } else { "FAIL" },
        f_base, f_double, f_triple, f_double_edit, f_triple_edit,
    );
    assert!(ok);
}

#[test]
fn acceptance_4_structural_exact() {
    let base = base_ioi_circuit();
    let double = base.add_input_paths(Role::Io2).unwrap();
    let triple = double.add_input_paths(Role::Io3).unwrap();
    let ok = base.nodes.len() == 26
        && base.edges.len() == 110
        && double.edges.len() == 120
        && triple.edges.len() == 130
        && format!("{:.2}", 100.0 * edge_overlap(&base, &double)) == "91.67"
        && format!("{:.2}", 100.0 * edge_overlap(&base, &triple)) == "84.62"
        && node_overlap(&base, &double) == 1.0
        && node_overlap(&base, &triple) == 1.0;
    println!(
        "ACCEPTANCE 4 (structural, exact): {} (nodes {}, edges {}/{}/{}, overlaps {:.2}%/{:.2}%)",
        if ok { "PASS" } else { "FAIL" },
        base.nodes.len(),
        base.edges.len(),
        double.edges.len(),
        triple.edges.len(),
        100.0 * edge_overlap(&base, &double),
        100.0 * edge_overlap(&base, &triple),
    );
    assert!(ok);
}

fn stats_pair(
    env: &RealEnv,
    run: &VariantRun,
) -> (AttentionStats, AttentionStats) {
    let heads: Vec<HeadId> = run.circuit.nodes.iter().map(|n| n.id()).collect();
    let model = collect_attention_stats(&env.model, &run.dataset, &heads, None).unwrap();
    let circuit = collect_attention_stats(
        &env.model,
        &run.dataset,
        &heads,
        Some((&run.circuit, &run.means)),
    )
    .unwrap();
    (model, circuit)
}

#[test]
fn acceptance_5_s2_hacking_signature() {
    let Some(env) = real_env() else {
        return skip("5 (S2-hacking signature)");
    };
    let runs = variant_runs(env);
    let (model_stats_d, circuit_stats_d) = stats_pair(env, &runs[1]);
    let roles_d = &runs[1].dataset[0].roles;
    let report_d = s2_hacking_report(
        &runs[1].circuit.nodes,
        &circuit_stats_d,
        &model_stats_d,
        roles_d,
        1.5,
    )
    .unwrap();
    let flagged: Vec<HeadId> = report_d.iter().filter(|r| r.flagged).map(|r| r.head).collect();
    let required = [
        HeadId::new(8, 6),
        HeadId::new(5, 9),
        HeadId::new(5, 5),
        HeadId::new(3, 0),
    ];
    let mut ok = required.iter().all(|h| flagged.contains(h));
    let r86 = report_d.iter().find(|r| r.head == HeadId::new(8, 6)).unwrap();
    ok &= matches!(r86.model_ratio, Some(m) if (0.7..=1.5).contains(&m));

    // no flags on the base task
    let (model_stats_b, circuit_stats_b) = stats_pair(env, &runs[0]);
    let report_b = s2_hacking_report(
        &runs[0].circuit.nodes,
        &circuit_stats_b,
        &model_stats_b,
        &runs[0].dataset[0].roles,
        1.5,
    )
    .unwrap();
    ok &= report_b.iter().all(|r| !r.flagged);

    println!(
        "ACCEPTANCE 5 (S2-hacking signature): {} (DoubleIO flags: {:?}; BaseIOI flags: {})",
        if ok { "PASS" } else { "FAIL" },
        flagged.iter().map(HeadId::to_string).collect::<Vec<_>>(),
        report_b.iter().filter(|r| r.flagged).count(),
    );
    assert!(ok);
}

#[test]
fn acceptance_6_attention_deviation() {
    let Some(env) = real_env() else {
        return skip("6 (attention deviation)");
    };
    let runs = variant_runs(env);
    let (_, circuit_stats_b) = stats_pair(env, &runs[0]);
    let (_, circuit_stats_d) = stats_pair(env, &runs[1]);
    let base_roles = &runs[0].dataset[0].roles;

    let mut low = 0usize;
    let mut dev86 = 0.0;
    let nodes = &runs[0].circuit.nodes;
    for node in nodes {
        let d = attention_deviation(
            node.id(),
            node.class,
            &circuit_stats_b,
            &circuit_stats_d,
            base_roles,
        )
        .unwrap();
        if d < 0.1 {
            low += 1;
        }
        if node.id() == HeadId::new(8, 6) {
            dev86 = d;
        }
    }
    let ok = low as f64 >= 0.8 * nodes.len() as f64 && dev86 > 0.1;
    println!(
        "ACCEPTANCE 6 (attention deviation): {} ({}/{} heads < 0.1; head 8.6 = {:.3})",
        if ok { "PASS" } else { "FAIL" },
        low,
        nodes.len(),
        dev86,
    );
    assert!(ok);
}

#[test]
fn acceptance_7_order_effect() {
    let Some(env) = real_env() else {
        return skip("7 (order effect)");
    };
    let runs = variant_runs(env);
    let run = &runs[1];
    let split = |order: Order| -> Vec<_> {
        run.dataset
            .iter()
            .filter(|ex| ex.order == order)
            .cloned()
            .collect()
    };
    let io_first = split(Order::IoFirst);
    let s_first = split(Order::SFirst);
    let eval = |data: &[_], circuit: &CircuitSpec| {
        evaluate_circuit(&env.model, circuit, data, &run.means).unwrap()
    };
    let whole = CircuitSpec::whole_model();
    let ok_ld = eval(&io_first, &whole).mean_model > eval(&s_first, &whole).mean_model
        && eval(&io_first, &run.circuit).mean_circuit
            > eval(&s_first, &run.circuit).mean_circuit;

    // head 2.2 prefers whichever name came first, by at least 2x; 4.11 is
    // roughly symmetric
    let fcfs = first_come_first_serve_check(&env.model, &run.dataset, &fcfs_heads()).unwrap();
    let get = |head: HeadId, order: Order| {
        fcfs.iter()
            .find(|r| r.head == head && r.order == order)
            .unwrap()
    };
    let h22_io = get(HeadId::new(2, 2), Order::IoFirst);
    let h22_s = get(HeadId::new(2, 2), Order::SFirst);
    let ok_22 = h22_io.attn_io >= 2.0 * h22_io.attn_s && h22_s.attn_s >= 2.0 * h22_s.attn_io;
    let ok_411 = [Order::IoFirst, Order::SFirst].iter().all(|&o| {
        let r = get(HeadId::new(4, 11), o);
        let ratio = r.attn_s / r.attn_io.max(1e-9);
        (0.5..=2.0).contains(&ratio)
    });
    let ok = ok_ld && ok_22 && ok_411;
    println!(
        "ACCEPTANCE 7 (order effect): {} (LD gap {}, 2.2 fcfs {}, 4.11 symmetric {})",
        if ok { "PASS" } else { "FAIL" },
        ok_ld,
        ok_22,
        ok_411,
    );
    assert!(ok);
}

#[test]
fn acceptance_8_property_suite() {
    // the numeric property suite runs on the bundled fixture model; the
    // individual properties are also enforced as dedicated tests in
    // forward_oracle.rs and pipeline.rs
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);
    let mut ok = true;

    // forward logits match the reference implementation on 10 prompts
    // (checked in detail in forward_oracle.rs; re-assert the bound here)
    {
        use safetensors::SafeTensors;
        let dir = common::fixture_dir();
        let tokens: Vec<Vec<u32>> = serde_json::from_str(
            &std::fs::read_to_string(dir.join("reference_tokens.json")).unwrap(),
        )
        .unwrap();
        let bytes = std::fs::read(dir.join("reference_logits.safetensors")).unwrap();
        let st = SafeTensors::deserialize(&bytes).unwrap();
        for (i, seq) in tokens.iter().enumerate() {
            let (logits, cache) = model.forward(seq).unwrap();
            let t = st.tensor(&format!("logits_{i}")).unwrap();
            let reference: Vec<f32> = t
                .data()
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            let max_abs = logits
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            ok &= max_abs < 1e-3;
            // attention rows sum to 1 +- 1e-5 with zero future mass
            ok &= cache.validate_attention(1e-5).is_ok();
        }
    }

    // logit_diff equals the log-probability difference within 1e-5
    {
        use ioi_circuits::forward::log_softmax;
        use ioi_circuits::model::logit_diff;
        let tokens = model.tokenize("Then, John and Mary went to the store. John gave a ring to");
        let (logits, _) = model.forward(&tokens).unwrap();
        let end = tokens.len() - 1;
        let (io, s) = (model.tokenize(" Mary")[0], model.tokenize(" John")[0]);
        let ld = logit_diff(&logits, io, s, end, model.config.vocab_size).unwrap();
        let lp = log_softmax(&logits.row(end).to_owned());
        ok &= (ld - (lp[io as usize] - lp[s as usize])).abs() < 1e-5;
    }

    // whole-model circuit faithfulness = 1 +- 1e-4; identity patching and
    // layer causality
    {
        use ioi_circuits::patching::{path_patch, PathSpec, Receivers};
        let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 6, 5, 0.5).unwrap();
        let reference = build_reference_dataset(&model, &pools, &data, 5, 6).unwrap();
        let means = MeanCache::compute(&model, &reference).unwrap();
        let whole = CircuitSpec::whole_model();
        let report = evaluate_circuit(&model, &whole, &data, &means).unwrap();
        ok &= (report.faithfulness - 1.0).abs() < 1e-4;

        for layer in 0..model.config.n_layers {
            for head in 0..model.config.n_heads {
                let effect = path_patch(
                    &model,
                    &data[0],
                    &data[0],
                    &PathSpec {
                        sender: HeadId::new(layer, head),
                        source_role: Role::S2,
                        receivers: Receivers::Logits,
                    },
                )
                .unwrap();
                ok &= effect.delta.abs() < 1e-4;
            }
        }

        // senders above every receiver have exactly zero effect
        use ioi_circuits::hooks::SiteKind;
        let corrupt = ioi_circuits::patching::corrupt_counterparts(&model, &pools, &data, 9)
            .unwrap();
        let ctx = ioi_circuits::patching::PatchContext::new(&model, &data[0], &corrupt[0]).unwrap();
        for head in 0..model.config.n_heads {
            let effect = ctx
                .patch(&PathSpec {
                    sender: HeadId::new(3, head),
                    source_role: Role::S2,
                    receivers: Receivers::Sites(vec![(HeadId::new(0, 0), SiteKind::Value)]),
                })
                .unwrap();
            ok &= effect.delta == 0.0;
        }
    }

    println!(
        "ACCEPTANCE 8 (property suite): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok);
}
