//! Quantities computed from one finished run.

use crate::agent::{AgentTrace, TraceRecord};
use crate::env::GridLayout;
use crate::mdp::QTable;

use super::config::{EpochRule, Targets};

/// One metrics.csv row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub agent: String,
    pub point: String,
    pub series: String,
    pub seed: u64,
    pub x: f64,
    pub y: f64,
}

/// Samples per level in each epoch; `counts[e][level - 1]`.
pub fn epoch_counts(records: &[TraceRecord], depth: usize, rule: EpochRule) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0; depth];
    let mut len = 0;
    for r in records {
        current[r.level - 1] += 1;
        len += 1;
        let end = match rule {
            EpochRule::Episode => r.terminal,
            EpochRule::Steps(n) => len == n,
        };
        if end {
            out.push(std::mem::replace(&mut current, vec![0; depth]));
            len = 0;
        }
    }
    if len > 0 {
        out.push(current);
    }
    out
}

/// Fraction of top-level samples in the first and the last quarter of the
/// run; `None` for runs shorter than four steps.
pub fn quartile_fractions(records: &[TraceRecord], top_level: usize) -> Option<(f64, f64)> {
    let q = records.len() / 4;
    if q == 0 {
        return None;
    }
    let frac = |rs: &[TraceRecord]| rs.iter().filter(|r| r.level == top_level).count() as f64 / rs.len() as f64;
    Some((frac(&records[..q]), frac(&records[records.len() - q..])))
}

/// Earliest x from which every later y stays within `(1 − fraction)·|target|`
/// of `target`.
pub fn settle_point(series: &[(f64, f64)], target: f64, fraction: f64) -> Option<f64> {
    let band = (1.0 - fraction) * target.abs();
    let mut first = None;
    for &(x, y) in series {
        if (y - target).abs() <= band {
            first.get_or_insert(x);
        } else {
            first = None;
        }
    }
    first
}

/// First x at which y reaches `target`.
pub fn first_reach(series: &[(f64, f64)], target: f64) -> Option<f64> {
    series.iter().find(|&&(_, y)| y >= target).map(|&(x, _)| x)
}

/// Cells visited by following the greedy action from the start under the
/// noiseless moves, up to the goal or the first repeated cell.
pub fn greedy_path(layout: &GridLayout, q: &QTable) -> Vec<usize> {
    let mut cell = layout.start();
    let mut path = vec![layout.index(cell)];
    let mut seen = vec![false; layout.n_cells()];
    seen[path[0]] = true;
    while cell != layout.goal() {
        let (next, _) = layout.apply_move(cell, q.greedy_action(layout.index(cell)));
        let i = layout.index(next);
        if seen[i] {
            break;
        }
        seen[i] = true;
        path.push(i);
        cell = next;
    }
    path
}

/// Mean heatmap value on `path` and over the remaining free cells.
pub fn path_means(heatmap: &[f64], layout: &GridLayout, path: &[usize]) -> (f64, f64) {
    let mut on = vec![false; heatmap.len()];
    for &c in path {
        on[c] = true;
    }
    let (mut a, mut na, mut b, mut nb) = (0.0, 0, 0.0, 0);
    for (c, &v) in heatmap.iter().enumerate() {
        if on[c] {
            a += v;
            na += 1;
        } else if !layout.is_blocked(layout.cell(c)) {
            b += v;
            nb += 1;
        }
    }
    (a / na as f64, b / nb as f64)
}

/// Everything derivable from the trace alone, as `(series, x, y)` points.
///
/// `v_star` is the true optimal start value of the top level when known.
pub fn trace_series(trace: &AgentTrace, rule: EpochRule, targets: &Targets, v_star: Option<f64>) -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    for (name, points) in &trace.series {
        out.extend(points.iter().map(|&(x, y)| (name.clone(), x, y)));
    }
    for (e, counts) in epoch_counts(&trace.records, trace.depth, rule).iter().enumerate() {
        for (l, &n) in counts.iter().enumerate() {
            out.push((format!("epoch_samples_l{}", l + 1), (e + 1) as f64, n as f64));
        }
    }
    let total = trace.records.len();
    let top = trace.top_samples();
    out.push(("samples_total".into(), 0.0, total as f64));
    out.push(("samples_top".into(), 0.0, top as f64));
    let ratio = if total > 0 { top as f64 / total as f64 } else { 0.0 };
    out.push(("top_ratio".into(), 0.0, ratio));
    let switches = trace.records.windows(2).filter(|w| w[0].level != w[1].level).count();
    out.push(("switches".into(), 0.0, switches as f64));
    if let Some((q1, q4)) = quartile_fractions(&trace.records, trace.depth) {
        out.push(("top_fraction_q1".into(), 0.0, q1));
        out.push(("top_fraction_q4".into(), 0.0, q4));
    }
    if let (Some(v), Some(series)) = (v_star, trace.series.get("v_start")) {
        let at = settle_point(series, v, targets.value_fraction).unwrap_or(f64::INFINITY);
        out.push(("top_samples_to_value".into(), 0.0, at));
    }
    if let Some(series) = trace.series.get("avg_reward") {
        let at = first_reach(series, targets.avg_reward).unwrap_or(f64::INFINITY);
        out.push(("top_samples_to_reward".into(), 0.0, at));
    }
    out
}
