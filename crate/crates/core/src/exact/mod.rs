//! Provably optimal schedules for small instances.
//!
//! Every assignment of tasks to processors and every per-processor order
//! consistent with the graph is a configuration; each configuration is
//! solved exactly by [`continuous_subproblem`]. Processors are identical,
//! so assignments are enumerated as set partitions into at most `K` blocks,
//! block `i` running on processor `i`. Partitions are visited in order of
//! a relaxation bound and skipped once the bound exceeds the incumbent.

mod bound;
mod continuous;
mod oracle;

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::eval::{apply_dpm_post, schedule_energy, SwitchPolicy};
use crate::graph::{self, GraphError, TaskGraph, TaskId};
use crate::heuristic::heuristic_schedule;
use crate::power::PowerModel;
use crate::schedule::Schedule;

pub use continuous::{continuous_subproblem, Configuration, SubproblemError, SubproblemResult};
pub use oracle::{discretized_oracle, OracleBracket, OracleError};

use continuous::{solve_configuration, Objective, SubOutcome, REL_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct ExactLimits {
    pub max_tasks: usize,
    pub max_processors: usize,
    /// Maximum number of LP solves; `None` for no limit.
    pub node_budget: Option<usize>,
    pub time_budget: Option<Duration>,
    /// Ignore `max_tasks` and `max_processors`.
    pub force: bool,
    /// Worker threads: 0 for the rayon default, 1 for a sequential search.
    pub threads: usize,
}

impl Default for ExactLimits {
    fn default() -> Self {
        Self {
            max_tasks: 8,
            max_processors: 3,
            node_budget: None,
            time_budget: None,
            force: false,
            threads: 0,
        }
    }
}

#[derive(Debug, PartialEq, Error)]
pub enum ExactError {
    #[error("invalid task graph: {0}")]
    Graph(#[from] GraphError),
    #[error("at least one processor is required")]
    NoProcessors,
    #[error("instance has {tasks} tasks on {processors} processors, above the exact limits of {max_tasks} and {max_processors}; use force to override")]
    TooLarge {
        tasks: usize,
        processors: usize,
        max_tasks: usize,
        max_processors: usize,
    },
    #[error("no configuration meets the period")]
    Infeasible,
    #[error("budget exhausted before any schedule was found")]
    BudgetExceeded,
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactOutcome {
    pub schedule: Schedule,
    /// Total energy of `schedule` under its switch flags, J.
    pub energy: f64,
    /// Optimized objective, J: equal to `energy` for the total-energy
    /// problem, execution energy alone for the baseline.
    pub objective: f64,
    /// False when a budget stopped the search early.
    pub optimal: bool,
    /// Configurations whose subproblem was solved or pruned.
    pub configurations: usize,
    pub lp_solves: usize,
}

/// Set partitions of `1..=n` into at most `k` blocks, each block sorted and
/// blocks ordered by smallest member.
fn partitions(n: usize, k: usize) -> Vec<Vec<Vec<TaskId>>> {
    fn rec(t: usize, n: usize, k: usize, cur: &mut Vec<Vec<TaskId>>, out: &mut Vec<Vec<Vec<TaskId>>>) {
        if t > n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(t);
            rec(t + 1, n, k, cur, out);
            cur[b].pop();
        }
        if cur.len() < k {
            cur.push(vec![t]);
            rec(t + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, k, &mut Vec::new(), &mut out);
    out
}

/// Orders of `block` in which no task precedes one of its ancestors,
/// lexicographically ascending.
fn linear_extensions(block: &[TaskId], reach: &[u64]) -> Vec<Vec<TaskId>> {
    fn rec(block: &[TaskId], reach: &[u64], used: &mut [bool], cur: &mut Vec<TaskId>, out: &mut Vec<Vec<TaskId>>) {
        if cur.len() == block.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..block.len() {
            if used[i] {
                continue;
            }
            let t = block[i];
            let blocked = block
                .iter()
                .zip(used.iter())
                .any(|(&a, &u)| !u && a != t && reach[a - 1] >> (t - 1) & 1 == 1);
            if blocked {
                continue;
            }
            used[i] = true;
            cur.push(t);
            rec(block, reach, used, cur, out);
            cur.pop();
            used[i] = false;
        }
    }
    let mut out = Vec::new();
    rec(block, reach, &mut vec![false; block.len()], &mut Vec::new(), &mut out);
    out
}

struct Search<'a> {
    graph: &'a TaskGraph,
    power: &'a PowerModel,
    processors: usize,
    objective: Objective,
    reach: Vec<u64>,
    /// Bits of the best objective found so far (non-negative, so integer
    /// order matches float order).
    incumbent: AtomicU64,
    lp_solves: AtomicUsize,
    configurations: AtomicUsize,
    exhausted: AtomicBool,
    node_budget: Option<usize>,
    deadline: Option<Instant>,
}

impl Search<'_> {
    fn incumbent(&self) -> f64 {
        f64::from_bits(self.incumbent.load(Ordering::Relaxed))
    }

    fn out_of_budget(&self) -> bool {
        if self.exhausted.load(Ordering::Relaxed) {
            return true;
        }
        let over = self
            .node_budget
            .is_some_and(|b| self.lp_solves.load(Ordering::Relaxed) >= b)
            || self.deadline.is_some_and(|d| Instant::now() >= d);
        if over {
            self.exhausted.store(true, Ordering::Relaxed);
        }
        over
    }

    /// Every configuration of one partition that might tie or beat the
    /// incumbent, with its objective.
    fn partition(&self, blocks: &[Vec<TaskId>], bound: f64) -> Vec<(f64, Configuration)> {
        let mut found = Vec::new();
        if bound > self.incumbent() * (1.0 + REL_TOL) {
            return found;
        }
        let orders: Vec<Vec<Vec<TaskId>>> = blocks.iter().map(|b| linear_extensions(b, &self.reach)).collect();
        let mut lanes = Vec::with_capacity(blocks.len());
        self.orders(&orders, &mut lanes, bound, &mut found);
        found
    }

    /// Nested walk over per-block orders; returns false to stop.
    fn orders(
        &self,
        orders: &[Vec<Vec<TaskId>>],
        lanes: &mut Vec<Vec<TaskId>>,
        bound: f64,
        found: &mut Vec<(f64, Configuration)>,
    ) -> bool {
        let depth = lanes.len();
        if depth == orders.len() {
            return self.leaf(lanes, bound, found);
        }
        for o in &orders[depth] {
            lanes.push(o.clone());
            let go_on = self.orders(orders, lanes, bound, found);
            lanes.pop();
            if !go_on {
                return false;
            }
        }
        true
    }

    fn leaf(&self, lanes: &[Vec<TaskId>], bound: f64, found: &mut Vec<(f64, Configuration)>) -> bool {
        if self.out_of_budget() {
            return false;
        }
        let config = Configuration { lanes: lanes.to_vec() };
        if !config.is_consistent(self.graph) {
            return true;
        }
        let cutoff = self.incumbent();
        if bound > cutoff * (1.0 + REL_TOL) {
            return false;
        }
        self.configurations.fetch_add(1, Ordering::Relaxed);
        let out = solve_configuration(self.graph, self.power, self.processors, &config, self.objective, cutoff);
        let solves = match &out {
            SubOutcome::Solved(r) => r.lp_solves,
            SubOutcome::Pruned { lp_solves } | SubOutcome::Infeasible { lp_solves } => *lp_solves,
        };
        self.lp_solves.fetch_add(solves, Ordering::Relaxed);
        if let SubOutcome::Solved(r) = out {
            self.incumbent.fetch_min(r.energy.to_bits(), Ordering::Relaxed);
            found.push((r.energy, config));
            // Nothing later in this partition can do better than its bound.
            if r.energy <= bound * (1.0 + REL_TOL) {
                return false;
            }
        }
        true
    }
}

fn run_partitions<F>(
    jobs: &[(Vec<Vec<TaskId>>, f64)],
    threads: usize,
    f: F,
) -> Result<Vec<Vec<(f64, Configuration)>>, ExactError>
where
    F: Fn(&(Vec<Vec<TaskId>>, f64)) -> Vec<(f64, Configuration)> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match threads {
            1 => Ok(jobs.iter().map(f).collect()),
            0 => Ok(jobs.par_iter().map(f).collect()),
            n => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| ExactError::ThreadPool(e.to_string()))?;
                Ok(pool.install(|| jobs.par_iter().map(&f).collect()))
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(jobs.iter().map(f).collect())
    }
}

struct Best {
    config: Configuration,
    result: continuous::SubproblemResult,
    optimal: bool,
    configurations: usize,
    lp_solves: usize,
}

fn search(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    limits: &ExactLimits,
    objective: Objective,
    initial: Option<(f64, Configuration)>,
) -> Result<Best, ExactError> {
    let n = graph.len();
    let start = Instant::now();
    let mut jobs: Vec<(Vec<Vec<TaskId>>, f64)> = partitions(n, processors)
        .into_iter()
        .filter_map(|p| bound::partition_bound(graph, power, &p, objective).map(|b| (p, b)))
        .collect();
    // Stable: equal bounds keep generation order.
    jobs.sort_by(|a, b| a.1.total_cmp(&b.1));
    let ctx = Search {
        graph,
        power,
        processors,
        objective,
        reach: graph.reachability(),
        incumbent: AtomicU64::new(initial.as_ref().map_or(f64::INFINITY, |i| i.0.max(0.0)).to_bits()),
        lp_solves: AtomicUsize::new(0),
        configurations: AtomicUsize::new(0),
        exhausted: AtomicBool::new(false),
        node_budget: limits.node_budget,
        deadline: limits.time_budget.map(|d| start + d),
    };
    let found: Vec<(f64, Configuration)> = run_partitions(&jobs, limits.threads, |(p, b)| ctx.partition(p, *b))?
        .into_iter()
        .flatten()
        .chain(initial)
        .collect();
    let optimal = !ctx.exhausted.load(Ordering::Relaxed);
    let mut lp_solves = ctx.lp_solves.load(Ordering::Relaxed);
    let configurations = ctx.configurations.load(Ordering::Relaxed);
    let Some(best) = found.iter().map(|f| f.0).min_by(f64::total_cmp) else {
        return Err(if optimal {
            ExactError::Infeasible
        } else {
            ExactError::BudgetExceeded
        });
    };
    let config = found
        .into_iter()
        .filter(|f| f.0 <= best * (1.0 + REL_TOL))
        .map(|f| f.1)
        .min()
        .expect("the minimum is among the candidates");
    // Re-solve without a cutoff so the winner does not depend on timing.
    let SubOutcome::Solved(result) = solve_configuration(graph, power, processors, &config, objective, f64::INFINITY)
    else {
        unreachable!("a solved configuration stays solvable");
    };
    lp_solves += result.lp_solves;
    Ok(Best {
        config,
        result,
        optimal,
        configurations,
        lp_solves,
    })
}

fn check_instance(graph: &TaskGraph, processors: usize, limits: &ExactLimits) -> Result<(), ExactError> {
    if processors == 0 {
        return Err(ExactError::NoProcessors);
    }
    let violations = graph::validate(graph);
    if !violations.is_empty() {
        return Err(GraphError::Invalid(violations).into());
    }
    // A configuration never uses more lanes than there are tasks.
    let usable = processors.min(graph.len());
    if !limits.force && (graph.len() > limits.max_tasks || usable > limits.max_processors) {
        return Err(ExactError::TooLarge {
            tasks: graph.len(),
            processors,
            max_tasks: limits.max_tasks,
            max_processors: limits.max_processors,
        });
    }
    Ok(())
}

fn empty_outcome(graph: &TaskGraph, processors: usize) -> ExactOutcome {
    ExactOutcome {
        schedule: Schedule::empty(graph.period, processors),
        energy: 0.0,
        objective: 0.0,
        optimal: true,
        configurations: 0,
        lp_solves: 0,
    }
}

/// Minimum total energy schedule over all configurations. Ties within a
/// relative 1e-9 go to the lexicographically smallest configuration.
pub fn exact_schedule(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    limits: &ExactLimits,
) -> Result<ExactOutcome, ExactError> {
    check_instance(graph, processors, limits)?;
    if graph.is_empty() {
        return Ok(empty_outcome(graph, processors));
    }
    let initial = heuristic_schedule(graph, power, processors, None)
        .ok()
        .map(|h| (h.energy, Configuration::of_schedule(&h.schedule).canonical()));
    let best = search(graph, power, processors, limits, Objective::Total, initial)?;
    Ok(ExactOutcome {
        energy: best.result.energy,
        objective: best.result.energy,
        schedule: best.result.schedule,
        optimal: best.optimal,
        configurations: best.configurations,
        lp_solves: best.lp_solves,
    })
}

/// Start every task as early as its predecessors and its processor allow,
/// keeping processors, order and frequency splits.
pub fn left_shift(graph: &TaskGraph, power: &PowerModel, schedule: &Schedule, config: &Configuration) -> Schedule {
    let mut out = schedule.clone();
    let n = graph.len();
    let pos: Vec<usize> = (1..=n)
        .map(|id| out.tasks.iter().position(|t| t.id == id).expect("every task scheduled"))
        .collect();
    let mut prev = vec![None; n + 1];
    for lane in &config.lanes {
        for w in lane.windows(2) {
            prev[w[1]] = Some(w[0]);
        }
    }
    let pred = graph.predecessors();
    let mut order: Vec<TaskId> = (1..=n).collect();
    order.sort_by(|&a, &b| {
        out.tasks[pos[a - 1]]
            .start
            .total_cmp(&out.tasks[pos[b - 1]].start)
            .then(a.cmp(&b))
    });
    let mut finish = vec![0.0; n + 1];
    for id in order {
        let ready = pred[id - 1]
            .iter()
            .map(|&p| finish[p + 1])
            .chain(prev[id].map(|p| finish[p]))
            .fold(0.0, f64::max);
        let t = &mut out.tasks[pos[id - 1]];
        t.start = ready;
        finish[id] = ready + t.duration(power);
    }
    out
}

/// Left-shift a minimum-execution-energy schedule and sleep wherever
/// possible; returns the schedule and its total energy.
fn finish_baseline(
    graph: &TaskGraph,
    power: &PowerModel,
    schedule: &Schedule,
    config: &Configuration,
) -> (Schedule, f64) {
    let schedule = apply_dpm_post(power, &left_shift(graph, power, schedule, config));
    let energy = schedule_energy(graph, power, &schedule, SwitchPolicy::Given)
        .expect("baseline schedule is valid")
        .total_energy;
    (schedule, energy)
}

/// Baseline treatment of one fixed configuration: minimum execution
/// energy, earliest starts, then post-hoc sleep. Returns the schedule, its
/// total energy and its execution energy, or `None` when infeasible.
pub fn baseline_for_configuration(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    config: &Configuration,
) -> Option<(Schedule, f64, f64)> {
    match solve_configuration(graph, power, processors, config, Objective::ExecOnly, f64::INFINITY) {
        SubOutcome::Solved(r) => {
            let (schedule, energy) = finish_baseline(graph, power, &r.schedule, config);
            Some((schedule, energy, r.energy))
        }
        _ => None,
    }
}

/// The baseline: minimum execution energy over all configurations, tasks
/// started as early as possible, then sleep in every idle interval long
/// enough to allow it.
pub fn exact_isc_t_schedule(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    limits: &ExactLimits,
) -> Result<ExactOutcome, ExactError> {
    check_instance(graph, processors, limits)?;
    if graph.is_empty() {
        return Ok(empty_outcome(graph, processors));
    }
    let best = search(graph, power, processors, limits, Objective::ExecOnly, None)?;
    let (schedule, energy) = finish_baseline(graph, power, &best.result.schedule, &best.config);
    Ok(ExactOutcome {
        schedule,
        energy,
        objective: best.result.energy,
        optimal: best.optimal,
        configurations: best.configurations,
        lp_solves: best.lp_solves,
    })
}
