// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batch front-end: dataset generation, knockout evaluation, circuit-edit
//! sweeps, path-patching sweeps, and analysis reports.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/model error. The model
//! directory comes from `--model-dir` or the `GPT2_SMALL_DIR` environment
//! variable and must contain `model.safetensors`, `vocab.json`,
//! `merges.txt`, and optionally `config.json`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ioi_circuits::ablation::{
    build_reference_dataset, evaluate_circuit, MeanCache, MetricReport,
};
use ioi_circuits::analysis::{
    attention_deviation, collect_attention_stats, fcfs_heads, first_come_first_serve_check,
    order_stratified_eval, s2_hacking_report,
};
use ioi_circuits::circuit::{base_ioi_circuit, CircuitSpec, HeadId};
use ioi_circuits::model::Model;
use ioi_circuits::patching::{
    corrupt_counterparts, effect_matrix_csv, sweep_direct_effects, Receivers,
};
use ioi_circuits::prompts::{
    generate_dataset, to_jsonl, FilteredPools, PromptExample, Role, Variant, WordPools,
};
use ioi_circuits::report::{
    aggregate, metric_report_csv, svg_bar_chart, svg_heatmap, RunMeta,
};
use ioi_circuits::{Error, Result};

#[derive(Parser)]
#[command(name = "ioi", version, about = "Circuit experiments on GPT-2 small")]
struct Cli {
    /// Directory holding the model checkpoint and tokenizer files.
    #[arg(long, env = "GPT2_SMALL_DIR", global = true)]
    model_dir: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Serialize, Clone)]
struct CommonOpts {
    /// Prompt variant: BaseIOI, DoubleIO, or TripleIO.
    #[arg(long, default_value = "BaseIOI")]
    variant: String,

    /// Circuit: `base`, `whole`, or a path to a circuit JSON file.
    #[arg(long, default_value = "base")]
    circuit: String,

    /// Number of prompts.
    #[arg(long, default_value_t = 200)]
    n: usize,

    /// RNG seed; recorded into every output.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Fraction of IO-first prompts.
    #[arg(long, default_value_t = 0.5)]
    order_mix: f64,

    /// Corrupted reference prompts per template group.
    #[arg(long, default_value_t = 100)]
    ref_n: usize,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a seeded prompt dataset as JSONL.
    Generate(CommonOpts),
    /// Knockout-evaluate a circuit against the model baseline.
    Eval(CommonOpts),
    /// Evaluate the base circuit with every subset of added input paths.
    Addpaths(CommonOpts),
    /// Path-patching sweep over all heads and source roles.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Receivers: `logits`, `inhibition-values`, or `name-mover-queries`.
        #[arg(long, default_value = "logits")]
        receivers: String,
        /// Comma-separated source roles (e.g. `S2,IO2`).
        #[arg(long, default_value = "S2")]
        roles: String,
    },
    /// S2-hacking, deviation, order, and first-come-first-serve reports.
    Analyze(CommonOpts),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, everything else is usage
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

struct Env {
    model: Model,
    pools: FilteredPools,
}

fn load_env(model_dir: &Option<PathBuf>) -> Result<Env> {
    let dir = model_dir.clone().ok_or_else(|| {
        Error::Other("no model directory; pass --model-dir or set GPT2_SMALL_DIR".into())
    })?;
    let model = Model::load_dir(&dir)?;
    let pools = WordPools::builtin().filter(&model.tokenizer)?;
    Ok(Env { model, pools })
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate(opts) => cmd_generate(&load_env(&cli.model_dir)?, &opts),
        Cmd::Eval(opts) => cmd_eval(&load_env(&cli.model_dir)?, &opts),
        Cmd::Addpaths(opts) => cmd_addpaths(&load_env(&cli.model_dir)?, &opts),
        Cmd::Sweep {
            common,
            receivers,
            roles,
        } => cmd_sweep(&load_env(&cli.model_dir)?, &common, &receivers, &roles),
        Cmd::Analyze(opts) => cmd_analyze(&load_env(&cli.model_dir)?, &opts),
    }
}

fn meta(env: &Env, opts: &CommonOpts) -> Result<RunMeta> {
    RunMeta::new(opts.seed, opts, env.model.checkpoint_hash())
}

fn write(out_dir: &PathBuf, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Other(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| Error::Other(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Provenance header for CSV outputs.
fn csv_header(meta: &RunMeta) -> String {
    format!(
        "# seed={} config_hash={} checkpoint_hash={}\n",
        meta.seed, meta.config_hash, meta.checkpoint_hash
    )
}

fn svg_header(meta: &RunMeta) -> String {
    format!(
        "<!-- seed={} config_hash={} checkpoint_hash={} -->\n",
        meta.seed, meta.config_hash, meta.checkpoint_hash
    )
}

fn parse_variant(s: &str) -> Result<Variant> {
    s.parse()
}

fn load_circuit(spec: &str, variant: Variant) -> Result<CircuitSpec> {
    match spec {
        "base" => {
            // adapt the base circuit to the variant's duplicate roles
            let mut c = base_ioi_circuit();
            if matches!(variant, Variant::Double | Variant::Triple) {
                c = c.add_input_paths(Role::Io2)?;
            }
            if variant == Variant::Triple {
                c = c.add_input_paths(Role::Io3)?;
            }
            Ok(c)
        }
        "base-unedited" => Ok(base_ioi_circuit()),
        "whole" => Ok(CircuitSpec::whole_model()),
        path => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| Error::Other(format!("cannot read circuit {path}: {e}")))?;
            serde_json::from_str(&raw).map_err(|e| Error::Parse {
                what: format!("circuit {path}"),
                detail: e.to_string(),
            })
        }
    }
}

fn make_dataset(env: &Env, opts: &CommonOpts, variant: Variant) -> Result<Vec<PromptExample>> {
    generate_dataset(
        &env.model.tokenizer,
        &env.pools,
        variant,
        opts.n,
        opts.seed,
        opts.order_mix,
    )
}

fn make_means(
    env: &Env,
    opts: &CommonOpts,
    dataset: &[PromptExample],
) -> Result<MeanCache> {
    let reference = build_reference_dataset(
        &env.model,
        &env.pools,
        dataset,
        opts.ref_n,
        opts.seed.wrapping_add(0x5eed),
    )?;
    MeanCache::compute(&env.model, &reference)
}

fn cmd_generate(env: &Env, opts: &CommonOpts) -> Result<()> {
    let variant = parse_variant(&opts.variant)?;
    let dataset = make_dataset(env, opts, variant)?;
    let meta = meta(env, opts)?;
    write(&opts.out, "dataset.jsonl", &to_jsonl(&dataset))?;
    let summary = serde_json::json!({
        "meta": meta,
        "variant": variant,
        "n": dataset.len(),
        "order_mix": opts.order_mix,
        "token_lengths": dataset.iter().map(|ex| ex.tokens.len()).collect::<Vec<_>>(),
    });
    write(
        &opts.out,
        "dataset_summary.json",
        &serde_json::to_string_pretty(&summary).unwrap(),
    )
}

fn print_report(report: &MetricReport) {
    println!(
        "{:<10} {:<24} {:>4} {:>12} {:>12} {:>12}",
        "variant", "circuit", "n", "model LD", "circuit LD", "faithfulness"
    );
    println!(
        "{:<10} {:<24} {:>4} {:>12.3} {:>12.3} {:>12.3}",
        report.variant.to_string(),
        report.circuit_name,
        report.n,
        report.mean_model,
        report.mean_circuit,
        report.faithfulness
    );
}

fn cmd_eval(env: &Env, opts: &CommonOpts) -> Result<()> {
    let variant = parse_variant(&opts.variant)?;
    let circuit = load_circuit(&opts.circuit, variant)?;
    let dataset = make_dataset(env, opts, variant)?;
    let means = make_means(env, opts, &dataset)?;
    let report = evaluate_circuit(&env.model, &circuit, &dataset, &means)?;
    print_report(&report);

    let meta = meta(env, opts)?;
    write(
        &opts.out,
        "report.csv",
        &(csv_header(&meta) + &metric_report_csv(&report)),
    )?;
    let agg = aggregate(&report, meta);
    write(
        &opts.out,
        "aggregate.json",
        &serde_json::to_string_pretty(&agg).unwrap(),
    )
}

fn cmd_addpaths(env: &Env, opts: &CommonOpts) -> Result<()> {
    let variant = parse_variant(&opts.variant)?;
    let dataset = make_dataset(env, opts, variant)?;
    let means = make_means(env, opts, &dataset)?;

    let subsets: Vec<Vec<Role>> = match variant {
        Variant::Base => vec![vec![]],
        Variant::Double => vec![vec![], vec![Role::Io2]],
        Variant::Triple => vec![
            vec![],
            vec![Role::Io2],
            vec![Role::Io3],
            vec![Role::Io2, Role::Io3],
        ],
    };

    let mut rows = Vec::new();
    for subset in &subsets {
        let mut circuit = base_ioi_circuit();
        for &role in subset {
            circuit = circuit.add_input_paths(role)?;
        }
        let report = evaluate_circuit(&env.model, &circuit, &dataset, &means)?;
        let label = if subset.is_empty() {
            "base".to_string()
        } else {
            subset
                .iter()
                .map(Role::to_string)
                .collect::<Vec<_>>()
                .join("+")
        };
        rows.push((label, report));
    }
    rows.sort_by(|a, b| {
        (a.1.faithfulness - 1.0)
            .abs()
            .partial_cmp(&(b.1.faithfulness - 1.0).abs())
            .unwrap()
    });

    println!(
        "{:<12} {:>12} {:>12} {:>14}",
        "paths", "model LD", "circuit LD", "faithfulness"
    );
    let meta = meta(env, opts)?;
    let mut csv = csv_header(&meta);
    csv.push_str("paths,edges,mean_model,mean_circuit,faithfulness\n");
    for (label, report) in &rows {
        println!(
            "{:<12} {:>12.3} {:>12.3} {:>14.3}",
            label, report.mean_model, report.mean_circuit, report.faithfulness
        );
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            label,
            110 + 10 * label.matches("IO").count(),
            report.mean_model,
            report.mean_circuit,
            report.faithfulness
        ));
    }
    write(&opts.out, "addpaths.csv", &csv)?;

    let labels: Vec<String> = rows.iter().map(|(l, _)| l.clone()).collect();
    let values: Vec<f64> = rows.iter().map(|(_, r)| r.faithfulness).collect();
    let svg = svg_header(&meta)
        + &svg_bar_chart(
            &format!("normalized faithfulness by added paths ({variant})"),
            &labels,
            &values,
        );
    write(&opts.out, "addpaths.svg", &svg)?;

    let json = serde_json::json!({
        "meta": meta,
        "variant": variant,
        "ranking": rows
            .iter()
            .map(|(l, r)| serde_json::json!({
                "paths": l,
                "mean_model": r.mean_model,
                "mean_circuit": r.mean_circuit,
                "faithfulness": r.faithfulness,
            }))
            .collect::<Vec<_>>(),
    });
    write(
        &opts.out,
        "addpaths.json",
        &serde_json::to_string_pretty(&json).unwrap(),
    )
}

fn cmd_sweep(env: &Env, opts: &CommonOpts, receivers: &str, roles: &str) -> Result<()> {
    let variant = parse_variant(&opts.variant)?;
    let dataset = make_dataset(env, opts, variant)?;
    let corrupts = corrupt_counterparts(
        &env.model,
        &env.pools,
        &dataset,
        opts.seed.wrapping_add(0xc0de),
    )?;

    let receivers = match receivers {
        "logits" => Receivers::Logits,
        "inhibition-values" => Receivers::inhibition_values(),
        "name-mover-queries" => Receivers::name_mover_queries(),
        other => {
            return Err(Error::Other(format!(
                "unknown receivers `{other}`; use logits, inhibition-values, or name-mover-queries"
            )))
        }
    };
    let roles: Vec<Role> = roles
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;

    let matrix = sweep_direct_effects(&env.model, &dataset, &corrupts, &receivers, &roles)?;
    let meta = meta(env, opts)?;
    write(
        &opts.out,
        "effects.csv",
        &(csv_header(&meta) + &effect_matrix_csv(&matrix)),
    )?;

    let row_labels: Vec<String> = matrix.heads.iter().map(HeadId::to_string).collect();
    let col_labels: Vec<String> = matrix.roles.iter().map(Role::to_string).collect();
    let svg = svg_header(&meta)
        + &svg_heatmap(
            &format!("path-patch effect (% of mean LD), {variant}"),
            &row_labels,
            &col_labels,
            &matrix.percent,
        );
    write(&opts.out, "effects.svg", &svg)
}

fn cmd_analyze(env: &Env, opts: &CommonOpts) -> Result<()> {
    let variant = parse_variant(&opts.variant)?;
    if variant == Variant::Base {
        return Err(Error::Other(
            "analyze compares a variant against the base task; pass DoubleIO or TripleIO".into(),
        ));
    }
    let circuit = load_circuit(&opts.circuit, variant)?;
    let dataset = make_dataset(env, opts, variant)?;
    let means = make_means(env, opts, &dataset)?;
    let meta = meta(env, opts)?;
    let heads: Vec<HeadId> = base_ioi_circuit().nodes.iter().map(|n| n.id()).collect();
    let roles = &dataset[0].roles;

    // s2-hacking
    let model_stats = collect_attention_stats(&env.model, &dataset, &heads, None)?;
    let circuit_stats =
        collect_attention_stats(&env.model, &dataset, &heads, Some((&circuit, &means)))?;
    let report = s2_hacking_report(
        &base_ioi_circuit().nodes,
        &circuit_stats,
        &model_stats,
        roles,
        1.5,
    )?;
    let mut csv = csv_header(&meta);
    csv.push_str("head,class,model_ratio,circuit_ratio,ff_s,ff_io,flagged\n");
    let fmt = |v: Option<f64>| v.map_or("inf".to_string(), |x| format!("{x:.6}"));
    for row in &report {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.head,
            row.class,
            fmt(row.model_ratio),
            fmt(row.circuit_ratio),
            fmt(row.ff_s),
            fmt(row.ff_io),
            row.flagged
        ));
    }
    write(&opts.out, "s2_hacking.csv", &csv)?;
    let flagged = report.iter().filter(|r| r.flagged).count();
    println!("s2-hacking: {flagged} of {} heads flagged", report.len());

    // deviation against the base task (same seed, same size)
    let base_opts = CommonOpts {
        variant: "BaseIOI".into(),
        ..opts.clone()
    };
    let base_dataset = make_dataset(env, &base_opts, Variant::Base)?;
    let base_means = make_means(env, &base_opts, &base_dataset)?;
    let base_circuit = base_ioi_circuit();
    let base_stats_model = collect_attention_stats(&env.model, &base_dataset, &heads, None)?;
    let base_stats_circuit = collect_attention_stats(
        &env.model,
        &base_dataset,
        &heads,
        Some((&base_circuit, &base_means)),
    )?;
    let mut csv = csv_header(&meta);
    csv.push_str("head,class,deviation_model,deviation_circuit\n");
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for node in &base_circuit.nodes {
        let dm = attention_deviation(
            node.id(),
            node.class,
            &base_stats_model,
            &model_stats,
            &base_dataset[0].roles,
        )?;
        let dc = attention_deviation(
            node.id(),
            node.class,
            &base_stats_circuit,
            &circuit_stats,
            &base_dataset[0].roles,
        )?;
        csv.push_str(&format!("{},{},{dm:.6},{dc:.6}\n", node.id(), node.class));
        labels.push(node.id().to_string());
        values.push(dc);
    }
    write(&opts.out, "deviation.csv", &csv)?;
    let svg = svg_header(&meta)
        + &svg_bar_chart(
            &format!("circuit attention deviation vs base task ({variant})"),
            &labels,
            &values,
        );
    write(&opts.out, "deviation.svg", &svg)?;

    // order-stratified evaluation
    let strata = order_stratified_eval(&env.model, &circuit, &dataset, &means)?;
    let mut csv = csv_header(&meta);
    csv.push_str("order,n,mean_model,mean_circuit,faithfulness\n");
    for (order, report) in &strata {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            order, report.n, report.mean_model, report.mean_circuit, report.faithfulness
        ));
        println!(
            "order {}: model LD {:.3}, circuit LD {:.3}",
            order, report.mean_model, report.mean_circuit
        );
    }
    write(&opts.out, "order_eval.csv", &csv)?;

    // first come, first serve
    let fcfs = first_come_first_serve_check(&env.model, &dataset, &fcfs_heads())?;
    let mut csv = csv_header(&meta);
    csv.push_str("head,order,n,attn_s,attn_io\n");
    for row in &fcfs {
        csv.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            row.head, row.order, row.n, row.attn_s, row.attn_io
        ));
    }
    write(&opts.out, "fcfs.csv", &csv)?;

    let json = serde_json::json!({ "meta": meta, "variant": variant });
    write(
        &opts.out,
        "analyze.json",
        &serde_json::to_string_pretty(&json).unwrap(),
    )
}
