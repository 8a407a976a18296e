//! Seeded experiment suites and their manifest files.

use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{random_taskgraph, GenParams, GraphError, TaskGraph};
use crate::heuristic::heft_assign;
use crate::power::PowerModel;

/// Fraction of total processor time kept busy at the middle frequency.
pub const TARGET_LOAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteInstance {
    pub name: String,
    pub graph: TaskGraph,
    pub processors: usize,
}

/// Period that keeps `processors` processors `load` busy at the middle
/// supported frequency, raised when needed so the list schedule at top
/// speed fits. Rounded up to whole microseconds.
pub fn calibrated_period(graph: &TaskGraph, power: &PowerModel, processors: usize, load: f64) -> f64 {
    let mut freqs = power.freqs.clone();
    freqs.sort_by(f64::total_cmp);
    let f_mid = freqs[(freqs.len() - 1) / 2];
    let mut td = graph.total_workload() as f64 / f_mid / (load * processors as f64);
    let mut probe = graph.clone();
    probe.period = f64::MAX;
    if let Ok(h) = heft_assign(&probe, power, processors, None) {
        td = td.max(h.finish.iter().copied().fold(0.0, f64::max));
    }
    (td * 1e6).ceil() / 1e6
}

/// Instance `seed` of the standard suite: 4 to 8 tasks, 2 or 3 processors.
pub fn suite_instance(power: &PowerModel, seed: u64) -> Result<SuiteInstance, GraphError> {
    let processors = 2 + (seed % 2) as usize;
    let mut graph = random_taskgraph(&GenParams {
        task_count: 4 + (seed % 5) as usize,
        seed,
        ..GenParams::default()
    })?;
    graph.period = calibrated_period(&graph, power, processors, TARGET_LOAD);
    Ok(SuiteInstance {
        name: format!("s{seed:02}"),
        graph,
        processors,
    })
}

/// The 25-instance regression suite, seeds 1 to 25.
pub fn standard_suite(power: &PowerModel) -> Vec<SuiteInstance> {
    (1..=25)
        .map(|s| suite_instance(power, s).expect("suite parameters are valid"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub name: String,
    /// Graph file, relative to the manifest.
    pub graph: String,
    pub processors: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Parse a `suite v1` manifest: one `instance <name> <graph file> <K>`
/// line per instance; `#` starts a comment.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut out = Vec::new();
    let mut header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| ManifestError::Syntax {
            line: i + 1,
            msg: msg.to_string(),
        };
        if !header {
            if line != "suite v1" {
                return Err(err("expected `suite v1` header"));
            }
            header = true;
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["instance", name, graph, k] => {
                let processors = k
                    .parse()
                    .ok()
                    .filter(|&k: &usize| k > 0)
                    .ok_or_else(|| err("bad processor count"))?;
                if out.iter().any(|e: &ManifestEntry| e.name == *name) {
                    return Err(err("duplicate instance name"));
                }
                out.push(ManifestEntry {
                    name: name.to_string(),
                    graph: graph.to_string(),
                    processors,
                });
            }
            _ => return Err(err("expected `instance <name> <graph> <K>`")),
        }
    }
    if !header {
        return Err(ManifestError::Syntax {
            line: 1,
            msg: "expected `suite v1` header".into(),
        });
    }
    Ok(out)
}

pub fn write_manifest(entries: &[ManifestEntry]) -> String {
    let mut s = String::from("suite v1\n");
    for e in entries {
        let _ = writeln!(s, "instance {} {} {}", e.name, e.graph, e.processors);
    }
    s
}
