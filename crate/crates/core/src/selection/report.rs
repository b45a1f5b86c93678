//! Per-batch CSV, per-condition summaries and the strip/box chart.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ScoredCandidate, SelectionError, SelectionPolicy};
use crate::svg::Svg;

/// Writes one row per candidate: condition, temperature, replicate, score, selected, passage_id.
pub fn write_csv<W: Write>(out: W, candidates: &[ScoredCandidate]) -> Result<(), SelectionError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["condition", "temperature", "replicate", "score", "selected", "passage_id"])?;
    for c in candidates {
        w.write_record([
            c.condition_label.clone(),
            c.temperature.to_string(),
            c.replicate_index.to_string(),
            format!("{:.2}", c.report.score),
            c.selected.to_string(),
            c.passage.id.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub label: String,
    pub n: usize,
    pub selected: usize,
    pub mean: f64,
    /// Sample SD; `None` with fewer than two scores.
    pub sd: Option<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Score distribution per condition, in order of first appearance.
pub fn summarize_conditions(candidates: &[ScoredCandidate]) -> Vec<ConditionSummary> {
    let mut labels: Vec<&str> = Vec::new();
    for c in candidates {
        if !labels.contains(&c.condition_label.as_str()) {
            labels.push(&c.condition_label);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<&ScoredCandidate> = candidates.iter().filter(|c| c.condition_label == label).collect();
            let mut scores: Vec<f64> = group.iter().map(|c| c.report.score).collect();
            scores.sort_by(f64::total_cmp);
            let n = scores.len();
            let mean = scores.iter().sum::<f64>() / n as f64;
            let sd = (n >= 2).then(|| (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
            ConditionSummary {
                label: label.to_owned(),
                n,
                selected: group.iter().filter(|c| c.selected).count(),
                mean,
                sd,
                min: scores[0],
                q1: quantile(&scores, 0.25),
                median: quantile(&scores, 0.5),
                q3: quantile(&scores, 0.75),
                max: scores[n - 1],
            }
        })
        .collect()
}

const COL: f64 = 140.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 40.0;
const PLOT_H: f64 = 320.0;

/// Strip chart with a box per condition, plus the reference score and band edges.
pub fn render_strip_chart(candidates: &[ScoredCandidate], policy: Option<&SelectionPolicy>, title: &str) -> String {
    let summaries = summarize_conditions(candidates);
    let width = LEFT + COL * summaries.len().max(1) as f64 + 20.0;
    let height = TOP + PLOT_H + 60.0;
    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 22.0, 14.0, "middle", title);

    let mut lo = candidates.iter().map(|c| c.report.score).fold(f64::INFINITY, f64::min);
    let mut hi = candidates.iter().map(|c| c.report.score).fold(f64::NEG_INFINITY, f64::max);
    if let Some(p) = policy {
        let (a, b) = p.bounds();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let y = |v: f64| TOP + PLOT_H * (1.0 - (v - lo) / (hi - lo));

    svg.line(LEFT, TOP, LEFT, TOP + PLOT_H, "black", false);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        svg.line(LEFT - 4.0, y(v), LEFT, y(v), "black", false);
        svg.text(LEFT - 6.0, y(v) + 4.0, 10.0, "end", &format!("{v:.0}"));
    }
    let right = width - 20.0;
    if let Some(p) = policy {
        let (a, b) = p.bounds();
        svg.line(LEFT, y(p.reference_score), right, y(p.reference_score), "#c0392b", true);
        svg.text(right, y(p.reference_score) - 4.0, 10.0, "end", &format!("reference {:.0}", p.reference_score));
        svg.line(LEFT, y(a), right, y(a), "#999999", true);
        svg.line(LEFT, y(b), right, y(b), "#999999", true);
    }

    for (i, s) in summaries.iter().enumerate() {
        let cx = LEFT + COL * (i as f64 + 0.5);
        svg.outline(cx - 30.0, y(s.q3), 60.0, y(s.q1) - y(s.q3), "#34495e");
        svg.line(cx - 30.0, y(s.median), cx + 30.0, y(s.median), "#34495e", false);
        svg.line(cx, y(s.max), cx, y(s.q3), "#34495e", false);
        svg.line(cx, y(s.q1), cx, y(s.min), "#34495e", false);
        for c in candidates.iter().filter(|c| c.condition_label == s.label) {
            // deterministic horizontal spread by replicate
            let dx = ((c.replicate_index % 10) as f64 - 4.5) * 4.0 + (c.temperature * 10.0).round() % 3.0 * 2.0;
            let fill = if c.selected { "#27ae60" } else { "#7f8c8d" };
            svg.circle(cx + dx, y(c.report.score), 3.0, fill);
        }
        svg.text(cx, TOP + PLOT_H + 18.0, 11.0, "middle", &s.label);
        svg.text(cx, TOP + PLOT_H + 32.0, 10.0, "middle", &format!("n={} selected={}", s.n, s.selected));
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 0.5), 2.5);
        assert_eq!(quantile(&d, 0.25), 1.75);
        assert_eq!(quantile(&d, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }
}
