// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end pipeline checks on the fixture model: dataset generation,
//! mean-cache construction, knockout evaluation, path patching, and the
//! analysis reports. These verify machinery, not the behavioral numbers
//! that require the real checkpoint.

mod common;

use ioi_circuits::ablation::{
    build_reference_dataset, evaluate_circuit, faithfulness, MeanCache,
};
use ioi_circuits::analysis::{
    collect_attention_stats, first_come_first_serve_check, order_stratified_eval,
    s2_hacking_report,
};
use ioi_circuits::circuit::{CircuitSpec, HeadId};
use ioi_circuits::patching::{
    corrupt_counterparts, path_patch, sweep_direct_effects, PatchContext, PathSpec, Receivers,
};
use ioi_circuits::prompts::{generate_dataset, from_jsonl, to_jsonl, Order, Role, Variant};

#[test]
fn dataset_generation_is_seeded_and_aligned() {
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);

    for variant in [Variant::Base, Variant::Double, Variant::Triple] {
        let data = generate_dataset(&model.tokenizer, &pools, variant, 24, 7, 0.5).unwrap();
        assert_eq!(data.len(), 24);
        let io_first = data.iter().filter(|ex| ex.order == Order::IoFirst).count();
        assert_eq!(io_first, 12);
        for ex in &data {
            // END is the last token and the answer is not in the prompt
            assert_eq!(ex.roles.get(Role::End), Some(ex.tokens.len() - 1));
            assert_ne!(ex.io_name, ex.s_name);
            let io_occurrences = ex
                .tokens
                .iter()
                .filter(|&&t| t == ex.io_token(&model.tokenizer))
                .count();
            assert_eq!(io_occurrences, variant.io_occurrences());
        }
        // same seed, same dataset; different seed differs
        let again = generate_dataset(&model.tokenizer, &pools, variant, 24, 7, 0.5).unwrap();
        assert_eq!(to_jsonl(&data), to_jsonl(&again));
        let other = generate_dataset(&model.tokenizer, &pools, variant, 24, 8, 0.5).unwrap();
        assert_ne!(to_jsonl(&data), to_jsonl(&other));
        // jsonl round-trip
        let back = from_jsonl(&to_jsonl(&data)).unwrap();
        assert_eq!(to_jsonl(&back), to_jsonl(&data));
    }
}

#[test]
fn corrupted_references_destroy_all_duplication() {
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);
    let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 8, 3, 0.5).unwrap();
    let reference = build_reference_dataset(&model, &pools, &data, 6, 11).unwrap();
    // 6 per (template, order) group present in the dataset
    let groups: std::collections::HashSet<_> = data.iter().map(|ex| ex.group_key()).collect();
    assert_eq!(reference.len(), groups.len() * 6);
    for ex in &reference {
        let name_positions: Vec<usize> = [Role::Io1, Role::Io2, Role::S1, Role::S2]
            .iter()
            .filter_map(|&r| ex.roles.get(r))
            .collect();
        let names: std::collections::HashSet<u32> =
            name_positions.iter().map(|&p| ex.tokens[p]).collect();
        assert_eq!(names.len(), name_positions.len(), "duplicated name survives");
    }
}

#[test]
fn mean_cache_is_deterministic_and_whole_model_is_faithful() {
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);
    let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 10, 5, 0.5).unwrap();
    let reference = build_reference_dataset(&model, &pools, &data, 8, 17).unwrap();
    let means_a = MeanCache::compute(&model, &reference).unwrap();
    let means_b = MeanCache::compute(&model, &reference).unwrap();
    assert_eq!(means_a.num_groups(), means_b.num_groups());

    let whole = CircuitSpec::whole_model();
    let report = evaluate_circuit(&model, &whole, &data, &means_a).unwrap();
    assert!((report.faithfulness - 1.0).abs() < 1e-4);
    for row in &report.rows {
        assert_eq!(row.logit_diff_model, row.logit_diff_circuit);
    }
}

#[test]
fn knockout_changes_the_computation_but_runs_everywhere() {
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);
    let circuit = common::tiny_circuit();

    for variant in [Variant::Base, Variant::Double, Variant::Triple] {
        let circuit = match variant {
            Variant::Base => circuit.clone(),
            Variant::Double => circuit.add_input_paths(Role::Io2).unwrap(),
            Variant::Triple => circuit
                .add_input_paths(Role::Io2)
                .unwrap()
                .add_input_paths(Role::Io3)
                .unwrap(),
        };
        let data = generate_dataset(&model.tokenizer, &pools, variant, 6, 2, 0.5).unwrap();
        let reference = build_reference_dataset(&model, &pools, &data, 5, 23).unwrap();
        let means = MeanCache::compute(&model, &reference).unwrap();
        let report = evaluate_circuit(&model, &circuit, &data, &means).unwrap();
        assert_eq!(report.n, 6);
        assert!(report
            .rows
            .iter()
            .any(|r| r.logit_diff_model != r.logit_diff_circuit));
        assert!(faithfulness(report.mean_circuit, report.mean_model).is_ok());
    }
}

#[test]
fn path_patch_identity_and_layer_causality() {
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);
    let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 2, 9, 0.5).unwrap();
    let corrupts = corrupt_counterparts(&model, &pools, &data, 31).unwrap();

    // identity: corrupt == clean gives zero effect for every head
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
            assert!(
                effect.delta.abs() < 1e-4,
                "identity patch of {layer}.{head} moved LD by {}",
                effect.delta
            );
        }
    }

    // causality: a sender above every receiver has exactly zero effect
    let receivers = Receivers::Sites(vec![
        (HeadId::new(1, 0), ioi_circuits::hooks::SiteKind::Value),
        (HeadId::new(1, 3), ioi_circuits::hooks::SiteKind::Query),
    ]);
    let ctx = PatchContext::new(&model, &data[0], &corrupts[0]).unwrap();
    for head in 0..model.config.n_heads {
        let effect = ctx
            .patch(&PathSpec {
                sender: HeadId::new(3, head),
                source_role: Role::S2,
                receivers: receivers.clone(),
            })
            .unwrap();
        assert_eq!(effect.delta, 0.0, "head 3.{head} above receivers had effect");
    }

    // a genuinely corrupted upstream path generally moves the logits
    let effect = ctx
        .patch(&PathSpec {
            sender: HeadId::new(0, 1),
            source_role: Role::S2,
            receivers: Receivers::Logits,
        })
        .unwrap();
    assert!(effect.ld_clean.is_finite() && effect.ld_patched.is_finite());
}

#[test]
fn sweep_produces_full_matrix() {
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);
    let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 2, 13, 0.5).unwrap();
    let corrupts = corrupt_counterparts(&model, &pools, &data, 37).unwrap();
    let matrix = sweep_direct_effects(
        &model,
        &data,
        &corrupts,
        &Receivers::Logits,
        &[Role::S2, Role::Io2],
    )
    .unwrap();
    assert_eq!(matrix.heads.len(), model.config.total_heads());
    assert_eq!(matrix.roles, vec![Role::S2, Role::Io2]);
    assert!(matrix
        .get(HeadId::new(0, 0), Role::S2)
        .unwrap()
        .1
        .is_finite());

    // with site receivers, the receiver heads are excluded as senders
    // instead of erroring out mid-sweep
    let receiver = HeadId::new(2, 0);
    let matrix = sweep_direct_effects(
        &model,
        &data,
        &corrupts,
        &Receivers::Sites(vec![(receiver, ioi_circuits::hooks::SiteKind::Value)]),
        &[Role::S2],
    )
    .unwrap();
    assert_eq!(matrix.heads.len(), model.config.total_heads() - 1);
    assert!(matrix.get(receiver, Role::S2).is_none());
    assert!(matrix.get(HeadId::new(0, 1), Role::S2).is_some());
}

#[test]
fn analysis_reports_run_on_fixture() {
    let model = common::fixture_model();
    let pools = common::fixture_pools(&model);
    let circuit = common::tiny_circuit().add_input_paths(Role::Io2).unwrap();
    let data = generate_dataset(&model.tokenizer, &pools, Variant::Double, 8, 21, 0.5).unwrap();
    let reference = build_reference_dataset(&model, &pools, &data, 5, 41).unwrap();
    let means = MeanCache::compute(&model, &reference).unwrap();

    let strata = order_stratified_eval(&model, &circuit, &data, &means).unwrap();
    assert_eq!(strata.len(), 2);
    let overall = evaluate_circuit(&model, &circuit, &data, &means).unwrap();
    let weighted: f64 = strata
        .iter()
        .map(|(_, r)| r.mean_model * r.n as f64)
        .sum::<f64>()
        / data.len() as f64;
    assert!((weighted - overall.mean_model).abs() < 1e-6);

    // confidence ratios, functional faithfulness, flags
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
    assert_eq!(report.len(), circuit.nodes.len());

    // first-come-first-serve over the circuit's previous-token head
    let fcfs =
        first_come_first_serve_check(&model, &data, &[HeadId::new(0, 2)]).unwrap();
    assert_eq!(fcfs.len(), 2); // one row per order
    for row in &fcfs {
        assert!(row.attn_s >= 0.0 && row.attn_s <= 1.0);
        assert!(row.attn_io >= 0.0 && row.attn_io <= 1.0);
    }
}
