use std::fmt::Write as _;

use super::{schedule_energy, EvalError, SwitchPolicy};
use crate::graph::TaskGraph;
use crate::power::PowerModel;
use crate::schedule::Schedule;

/// One instance of an iSCT versus post-hoc-DPM baseline comparison.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompareRow {
    pub name: String,
    pub tasks: usize,
    pub total_workload: u64,
    /// Seconds.
    pub period: f64,
    /// Joules.
    pub isct_energy: f64,
    pub baseline_energy: f64,
    /// `100 · (baseline − isct) / baseline`.
    pub saving_pct: f64,
    pub isct_idle_count: usize,
    pub baseline_idle_count: usize,
    pub isct_idle_time: f64,
    pub baseline_idle_time: f64,
    pub isct_long_count: usize,
    pub baseline_long_count: usize,
    pub isct_used: usize,
    pub baseline_used: usize,
}

/// Build a comparison row. The baseline is evaluated with its own switch
/// flags, so it should already have been through
/// [`apply_dpm_post`](super::apply_dpm_post).
pub fn compare_report(
    name: &str,
    graph: &TaskGraph,
    power: &PowerModel,
    isct: &Schedule,
    isct_energy: f64,
    baseline: &Schedule,
) -> Result<CompareRow, EvalError> {
    let a = schedule_energy(graph, power, isct, SwitchPolicy::Given)?;
    let b = schedule_energy(graph, power, baseline, SwitchPolicy::Given)?;
    let saving_pct = if b.total_energy > 0.0 {
        100.0 * (b.total_energy - isct_energy) / b.total_energy
    } else {
        0.0
    };
    Ok(CompareRow {
        name: name.to_string(),
        tasks: graph.len(),
        total_workload: graph.total_workload(),
        period: graph.period,
        isct_energy,
        baseline_energy: b.total_energy,
        saving_pct,
        isct_idle_count: a.idle_interval_count,
        baseline_idle_count: b.idle_interval_count,
        isct_idle_time: a.total_idle_time,
        baseline_idle_time: b.total_idle_time,
        isct_long_count: a.long_interval_count,
        baseline_long_count: b.long_interval_count,
        isct_used: a.used_processors,
        baseline_used: b.used_processors,
    })
}

/// Aggregates over a set of rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Summary {
    pub instances: usize,
    pub mean_saving_pct: f64,
    pub max_saving_pct: f64,
    pub isct_idle_count: usize,
    pub baseline_idle_count: usize,
    pub isct_idle_time: f64,
    pub baseline_idle_time: f64,
    /// Share of idle intervals at least as long as the break-even time.
    pub isct_long_fraction: f64,
    pub baseline_long_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<CompareRow>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl ComparisonTable {
    pub fn summary(&self) -> Summary {
        let r = &self.rows;
        let n = r.len();
        let sum = |f: fn(&CompareRow) -> f64| r.iter().map(f).sum::<f64>();
        let count = |f: fn(&CompareRow) -> usize| r.iter().map(f).sum::<usize>();
        let isct_idle_count = count(|x| x.isct_idle_count);
        let baseline_idle_count = count(|x| x.baseline_idle_count);
        Summary {
            instances: n,
            mean_saving_pct: if n == 0 { 0.0 } else { sum(|x| x.saving_pct) / n as f64 },
            max_saving_pct: r.iter().map(|x| x.saving_pct).fold(0.0, f64::max),
            isct_idle_count,
            baseline_idle_count,
            isct_idle_time: sum(|x| x.isct_idle_time),
            baseline_idle_time: sum(|x| x.baseline_idle_time),
            isct_long_fraction: ratio(count(|x| x.isct_long_count), isct_idle_count),
            baseline_long_fraction: ratio(count(|x| x.baseline_long_count), baseline_idle_count),
        }
    }

    /// Aligned plain-text table with an average line when non-empty.
    /// Energies in mJ, times in ms, workloads in cycles.
    pub fn to_text(&self) -> String {
        let header = [
            "instance",
            "tasks",
            "workload",
            "Td[ms]",
            "E_isct[mJ]",
            "E_base[mJ]",
            "saving[%]",
            "idle#",
            "idle#_base",
            "idle[ms]",
            "idle_base[ms]",
            "used",
            "used_base",
        ];
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            cells.push(vec![
                r.name.clone(),
                r.tasks.to_string(),
                r.total_workload.to_string(),
                format!("{:.3}", r.period * 1e3),
                format!("{:.5}", r.isct_energy * 1e3),
                format!("{:.5}", r.baseline_energy * 1e3),
                format!("{:.2}", r.saving_pct),
                r.isct_idle_count.to_string(),
                r.baseline_idle_count.to_string(),
                format!("{:.3}", r.isct_idle_time * 1e3),
                format!("{:.3}", r.baseline_idle_time * 1e3),
                r.isct_used.to_string(),
                r.baseline_used.to_string(),
            ]);
        }
        let mut widths = vec![0; header.len()];
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        if !self.rows.is_empty() {
            let s = self.summary();
            let _ = writeln!(
                out,
                "average saving {:.2}% (max {:.2}%) over {} instances; idle intervals {} vs {}; \
                 idle time {:.3} ms vs {:.3} ms; long-interval share {:.2}% vs {:.2}%",
                s.mean_saving_pct,
                s.max_saving_pct,
                s.instances,
                s.isct_idle_count,
                s.baseline_idle_count,
                s.isct_idle_time * 1e3,
                s.baseline_idle_time * 1e3,
                100.0 * s.isct_long_fraction,
                100.0 * s.baseline_long_fraction,
            );
        }
        out
    }

    /// One JSON record per instance followed by one summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("rows serialize"));
            out.push('\n');
        }
        if !self.rows.is_empty() {
            let summary = serde_json::json!({ "summary": self.summary() });
            out.push_str(&summary.to_string());
            out.push('\n');
        }
        out
    }
}
