//! Two-stage heuristic: list scheduling at top speed fixes assignment and
//! order, then the continuous subproblem picks timing, frequency splits
//! and sleep decisions for that configuration.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::exact::{baseline_for_configuration, continuous_subproblem, Configuration};
use crate::graph::{self, GraphError, TaskGraph, TieBreak};
use crate::power::{PowerModel, TIME_TOL};
use crate::schedule::{Schedule, ScheduledTask};

#[derive(Debug, PartialEq, Error)]
pub enum HeuristicError {
    #[error("invalid task graph: {0}")]
    Graph(#[from] GraphError),
    #[error("at least one processor is required")]
    NoProcessors,
    #[error("list schedule at top speed ends at {makespan} s, past the {period} s period")]
    Infeasible { makespan: f64, period: f64 },
}

/// Stage-one result: configuration plus provisional times at `f_max`,
/// indexed by task index (`id - 1`), in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct HeftResult {
    pub configuration: Configuration,
    pub start: Vec<f64>,
    pub finish: Vec<f64>,
}

impl HeftResult {
    /// The stage-one schedule itself, every task at top speed.
    pub fn to_schedule(&self, graph: &TaskGraph, power: &PowerModel) -> Schedule {
        let top = (0..power.num_freqs())
            .max_by(|&a, &b| power.freqs[a].total_cmp(&power.freqs[b]))
            .expect("at least one frequency");
        let mut s = Schedule::empty(graph.period, self.configuration.lanes.len());
        for (k, lane) in self.configuration.lanes.iter().enumerate() {
            for &id in lane {
                s.tasks.push(ScheduledTask {
                    id,
                    processor: k,
                    start: self.start[id - 1],
                    split: vec![(top, graph.workload(id - 1) as f64)],
                });
            }
        }
        s.tasks.sort_by_key(|t| t.id);
        s
    }
}

/// Earliest start `>= ready` of a `len`-long slot in a busy list sorted
/// by start.
fn first_fit(busy: &[(f64, f64)], ready: f64, len: f64) -> (usize, f64) {
    let mut t = ready;
    for (i, &(s, f)) in busy.iter().enumerate() {
        if t + len <= s + TIME_TOL {
            return (i, t);
        }
        t = t.max(f);
    }
    (busy.len(), t)
}

/// Insertion-based list scheduling in decreasing upward rank: each task
/// goes into the first idle slot after its ready time on the processor
/// where it finishes earliest, ties to the lowest processor index. Equal
/// ranks are ordered by id, or shuffled when `seed` is given.
pub fn heft_assign(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    seed: Option<u64>,
) -> Result<HeftResult, HeuristicError> {
    if processors == 0 {
        return Err(HeuristicError::NoProcessors);
    }
    let f_max = power.f_max();
    let tie = seed.map_or(TieBreak::LowestId, TieBreak::Seeded);
    let mut order = graph::rank_order(graph, f_max, tie)?;
    let pred = graph.predecessors();
    let n = graph.len();
    let mut start = vec![0.0; n];
    let mut finish = vec![f64::NAN; n];
    let mut busy: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); processors];
    while !order.is_empty() {
        // Rank order is topological unless zero-length tasks tie with a
        // successor; take the first task whose predecessors are placed.
        let pos = order
            .iter()
            .position(|&id| pred[id - 1].iter().all(|&p| !finish[p].is_nan()))
            .expect("acyclic graph has a ready task");
        let id = order.remove(pos);
        let u = id - 1;
        let len = graph.workload(u) as f64 / f_max;
        let ready = pred[u].iter().map(|&p| finish[p]).fold(0.0, f64::max);
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for (k, lane) in busy.iter().enumerate() {
            let spans: Vec<(f64, f64)> = lane.iter().map(|&(s, f, _)| (s, f)).collect();
            let (at, s) = first_fit(&spans, ready, len);
            if best.is_none_or(|b| s + len < b.0 - TIME_TOL) {
                best = Some((s + len, k, at, s));
            }
        }
        let (f, k, at, s) = best.expect("at least one processor");
        busy[k].insert(at, (s, f, id));
        start[u] = s;
        finish[u] = f;
    }
    let makespan = finish.iter().copied().fold(0.0, f64::max);
    if makespan > graph.period + TIME_TOL {
        return Err(HeuristicError::Infeasible {
            makespan,
            period: graph.period,
        });
    }
    let lanes = busy
        .into_iter()
        .map(|lane| lane.into_iter().map(|(_, _, id)| id).collect())
        .collect();
    Ok(HeftResult {
        configuration: Configuration { lanes },
        start,
        finish,
    })
}

/// Stage two: the optimal schedule for the stage-one configuration and
/// its total energy in joules.
pub fn refine_continuous(graph: &TaskGraph, power: &PowerModel, heft: &HeftResult) -> (Schedule, f64) {
    let r = continuous_subproblem(graph, power, heft.configuration.lanes.len(), &heft.configuration)
        .expect("a configuration feasible at top speed stays feasible");
    (r.schedule, r.energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct StageTimings {
    pub assign: Duration,
    pub refine: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicOutcome {
    pub schedule: Schedule,
    /// Total energy, J.
    pub energy: f64,
    pub timings: StageTimings,
}

pub fn heuristic_schedule(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    seed: Option<u64>,
) -> Result<HeuristicOutcome, HeuristicError> {
    let t0 = Instant::now();
    let heft = heft_assign(graph, power, processors, seed)?;
    let t1 = Instant::now();
    let (schedule, energy) = refine_continuous(graph, power, &heft);
    Ok(HeuristicOutcome {
        schedule,
        energy,
        timings: StageTimings {
            assign: t1 - t0,
            refine: t1.elapsed(),
        },
    })
}

/// The stage-one configuration treated like the baseline: minimum
/// execution energy, earliest starts, post-hoc sleep.
pub fn heuristic_isc_t_schedule(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    seed: Option<u64>,
) -> Result<HeuristicOutcome, HeuristicError> {
    let t0 = Instant::now();
    let heft = heft_assign(graph, power, processors, seed)?;
    let t1 = Instant::now();
    let (schedule, energy, _) =
        baseline_for_configuration(graph, power, heft.configuration.lanes.len(), &heft.configuration)
            .expect("a configuration feasible at top speed stays feasible");
    Ok(HeuristicOutcome {
        schedule,
        energy,
        timings: StageTimings {
            assign: t1 - t0,
            refine: t1.elapsed(),
        },
    })
}
