// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward-pass oracle: logits frozen from a public reference
//! implementation running the same fixture checkpoint, plus the numeric
//! invariants of the property suite that don't need real weights.

mod common;

use ndarray::Array2;
use safetensors::SafeTensors;

use ioi_circuits::forward::log_softmax;
use ioi_circuits::hooks::{HookSite, Intervention, InterventionPlan, SiteKind};
use ioi_circuits::model::logit_diff;

fn reference_cases() -> Vec<(Vec<u32>, Array2<f32>)> {
    let dir = common::fixture_dir();
    let tokens: Vec<Vec<u32>> = serde_json::from_str(
        &std::fs::read_to_string(dir.join("reference_tokens.json")).unwrap(),
    )
    .unwrap();
    let bytes = std::fs::read(dir.join("reference_logits.safetensors")).unwrap();
    let st = SafeTensors::deserialize(&bytes).unwrap();
    tokens
        .into_iter()
        .enumerate()
        .map(|(i, seq)| {
            let t = st.tensor(&format!("logits_{i}")).unwrap();
            let shape = (t.shape()[0], t.shape()[1]);
            let data: Vec<f32> = t
                .data()
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            (seq, Array2::from_shape_vec(shape, data).unwrap())
        })
        .collect()
}

#[test]
fn logits_match_reference_within_1e_3() {
    let model = common::fixture_model();
    let cases = reference_cases();
    assert_eq!(cases.len(), 10);
    for (i, (tokens, expected)) in cases.iter().enumerate() {
        let (logits, _) = model.forward(tokens).unwrap();
        assert_eq!(logits.shape(), expected.shape());
        let max_abs = logits
            .iter()
            .zip(expected.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(
            max_abs < 1e-3,
            "case {i}: max |delta| = {max_abs} exceeds 1e-3"
        );
    }
}

#[test]
fn forward_is_deterministic() {
    let model = common::fixture_model();
    let tokens = model.tokenize("Then, John and Mary went to the store. John gave a ring to");
    let (a, _) = model.forward(&tokens).unwrap();
    let (b, _) = model.forward(&tokens).unwrap();
    assert_eq!(a, b);
}

#[test]
fn attention_rows_are_causal_distributions() {
    let model = common::fixture_model();
    let tokens = model.tokenize("Then, John and Mary went to the store. John gave a ring to");
    let (_, cache) = model.forward(&tokens).unwrap();
    cache.validate_attention(1e-5).unwrap();
}

#[test]
fn logit_diff_equals_log_prob_difference() {
    let model = common::fixture_model();
    let tokens = model.tokenize("Then, John and Mary went to the store. John gave a ring to");
    let (logits, _) = model.forward(&tokens).unwrap();
    let end = tokens.len() - 1;
    let io = model.tokenize(" Mary")[0];
    let s = model.tokenize(" John")[0];
    let ld = logit_diff(&logits, io, s, end, model.config.vocab_size).unwrap();
    let lp = log_softmax(&logits.row(end).to_owned());
    let diff = lp[io as usize] - lp[s as usize];
    assert!((ld - diff).abs() < 1e-5, "ld {ld} vs log-prob diff {diff}");
}

#[test]
fn self_patching_changes_nothing() {
    let model = common::fixture_model();
    let tokens = model.tokenize("Then, John and Mary went to the store. John gave a ring to");
    let (clean_logits, cache) = model.forward(&tokens).unwrap();

    // replace every per-head output with its own cached value
    let mut items = Vec::new();
    for layer in 0..model.config.n_layers {
        for head in 0..model.config.n_heads {
            let site = HookSite::per_head(layer, head, SiteKind::HeadOutput);
            items.push(Intervention::full(site, cache.get(&site).unwrap().clone()));
        }
    }
    let plan = InterventionPlan::build(items, &model.config, tokens.len()).unwrap();
    let (patched, _) = model.forward_with_interventions(&tokens, &plan).unwrap();
    let max_abs = patched
        .iter()
        .zip(clean_logits.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max_abs < 1e-4, "self-patching moved logits by {max_abs}");
}

#[test]
fn interventions_do_not_leak_into_earlier_positions() {
    let model = common::fixture_model();
    let tokens = model.tokenize("Then, John and Mary went to the store. John gave a ring to");
    let (clean_logits, _) = model.forward(&tokens).unwrap();

    // zero a head's output at the final position only
    let pos = tokens.len() - 1;
    let site = HookSite::per_head(1, 2, SiteKind::HeadOutput);
    let zeros = Array2::<f32>::zeros((1, model.config.d_head));
    let plan = InterventionPlan::build(
        vec![Intervention::at(site, vec![pos], zeros)],
        &model.config,
        tokens.len(),
    )
    .unwrap();
    let (patched, _) = model.forward_with_interventions(&tokens, &plan).unwrap();
    for p in 0..pos {
        let row_delta = patched
            .row(p)
            .iter()
            .zip(clean_logits.row(p).iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert_eq!(row_delta, 0.0, "position {p} changed");
    }
    let end_delta = patched
        .row(pos)
        .iter()
        .zip(clean_logits.row(pos).iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(end_delta > 0.0, "intervention had no effect at its target");
}

#[test]
fn conflicting_interventions_are_rejected() {
    let model = common::fixture_model();
    let site = HookSite::per_head(0, 0, SiteKind::Key);
    let a = Intervention::at(site, vec![3], Array2::zeros((1, model.config.d_head)));
    let b = Intervention::at(site, vec![3], Array2::ones((1, model.config.d_head)));
    assert!(InterventionPlan::build(vec![a, b], &model.config, 8).is_err());
}
