// SPDX-License-Identifier: MIT OR Apache-2.0

//! Report emission: CSV tables, JSON aggregates, and static SVG figures.
//!
//! Every aggregate embeds the run seed, a hash of the experiment
//! configuration, and the checkpoint hash, so any output file can be
//! traced back to the exact inputs that produced it.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ablation::MetricReport;
use crate::error::{Error, Result};

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    pub checkpoint_hash: String,
}

impl RunMeta {
    /// Hash an arbitrary serializable config together with the seed and
    /// checkpoint hash.
    pub fn new<C: Serialize>(seed: u64, config: &C, checkpoint_hash: &str) -> Result<Self> {
        let json = serde_json::to_string(config).map_err(|e| Error::Parse {
            what: "experiment config".into(),
            detail: e.to_string(),
        })?;
        Ok(RunMeta {
            seed,
            config_hash: format!("{:x}", Sha256::digest(json.as_bytes())),
            checkpoint_hash: checkpoint_hash.to_string(),
        })
    }
}

/// Percentile bootstrap confidence interval of the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64, level: f64) -> (f64, f64) {
    assert!(!values.is_empty() && level > 0.0 && level < 1.0);
    if values.len() == 1 {
        return (values[0], values[0]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let sum: f64 = (0..values.len())
            .map(|_| values[rng.gen_range(0..values.len())])
            .sum();
        means.push(sum / values.len() as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = ((1.0 - level) / 2.0 * (resamples - 1) as f64).round() as usize;
    let hi = ((1.0 - (1.0 - level) / 2.0) * (resamples - 1) as f64).round() as usize;
    (means[lo], means[hi])
}

/// Per-prompt evaluation rows as CSV.
pub fn metric_report_csv(report: &MetricReport) -> String {
    let mut out =
        String::from("variant,circuit_name,prompt_id,order,logit_diff_model,logit_diff_circuit\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6}\n",
            report.variant,
            report.circuit_name,
            row.prompt_id,
            row.order,
            row.logit_diff_model,
            row.logit_diff_circuit
        ));
    }
    out
}

/// Aggregate view of a [`MetricReport`] with provenance and bootstrap CIs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub meta: RunMeta,
    pub variant: String,
    pub circuit_name: String,
    pub n: usize,
    pub mean_model: f64,
    pub std_model: f64,
    pub ci_model: (f64, f64),
    pub mean_circuit: f64,
    pub std_circuit: f64,
    pub ci_circuit: (f64, f64),
    pub faithfulness: f64,
}

/// 1000-resample percentile bootstrap at 95%.
pub fn aggregate(report: &MetricReport, meta: RunMeta) -> AggregateReport {
    let model: Vec<f64> = report.rows.iter().map(|r| r.logit_diff_model as f64).collect();
    let circuit: Vec<f64> = report
        .rows
        .iter()
        .map(|r| r.logit_diff_circuit as f64)
        .collect();
    AggregateReport {
        ci_model: bootstrap_ci(&model, 1000, meta.seed, 0.95),
        ci_circuit: bootstrap_ci(&circuit, 1000, meta.seed.wrapping_add(1), 0.95),
        meta,
        variant: report.variant.to_string(),
        circuit_name: report.circuit_name.clone(),
        n: report.n,
        mean_model: report.mean_model,
        std_model: report.std_model,
        mean_circuit: report.mean_circuit,
        std_circuit: report.std_circuit,
        faithfulness: report.faithfulness,
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A minimal labeled bar chart.
pub fn svg_bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    assert_eq!(labels.len(), values.len());
    let bar_w = 34.0;
    let gap = 14.0;
    let height = 260.0;
    let plot_h = 180.0;
    let width = 60.0 + (bar_w + gap) * labels.len() as f64;
    let max = values.iter().cloned().fold(f64::MIN, f64::max).max(0.0);
    let min = values.iter().cloned().fold(f64::MAX, f64::min).min(0.0);
    let span = (max - min).max(1e-9);
    let y = |v: f64| 30.0 + plot_h * (max - v) / span;

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"{:.0}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        width / 2.0,
        xml_escape(title)
    );
    let zero = y(0.0);
    s.push_str(&format!(
        "<line x1=\"40\" y1=\"{zero:.1}\" x2=\"{:.1}\" y2=\"{zero:.1}\" stroke=\"#888\"/>\n",
        width - 10.0
    ));
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = 50.0 + (bar_w + gap) * i as f64;
        let top = y(v.max(0.0));
        let h = (y(v.min(0.0)) - top).abs().max(0.5);
        let color = if v >= 0.0 { "#4878cf" } else { "#d65f5f" };
        s.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" fill=\"{color}\"/>\n"
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            x + bar_w / 2.0,
            height - 28.0,
            xml_escape(label)
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"9\">{v:.3}</text>\n",
            x + bar_w / 2.0,
            top - 4.0
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// A diverging-color heatmap (blue negative, red positive).
pub fn svg_heatmap(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &[Vec<f64>],
) -> String {
    assert_eq!(values.len(), row_labels.len());
    let cell = 26.0;
    let left = 56.0;
    let top = 46.0;
    let width = left + cell * col_labels.len() as f64 + 20.0;
    let height = top + cell * row_labels.len() as f64 + 20.0;
    let absmax = values
        .iter()
        .flatten()
        .fold(1e-9f64, |acc, &v| acc.max(v.abs()));

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"10\">\n\
         <text x=\"{:.0}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        width / 2.0,
        xml_escape(title)
    );
    for (j, label) in col_labels.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            left + cell * (j as f64 + 0.5),
            top - 6.0,
            xml_escape(label)
        ));
    }
    for (i, (label, row)) in row_labels.iter().zip(values).enumerate() {
        assert_eq!(row.len(), col_labels.len());
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            left - 6.0,
            top + cell * (i as f64 + 0.65),
            xml_escape(label)
        ));
        for (j, &v) in row.iter().enumerate() {
            let t = (v / absmax).clamp(-1.0, 1.0);
            let (r, g, b) = if t >= 0.0 {
                (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
            } else {
                (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
            };
            s.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" \
                 fill=\"rgb({r:.0},{g:.0},{b:.0})\" stroke=\"#ddd\"/>\n",
                left + cell * j as f64,
                top + cell * i as f64
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}
