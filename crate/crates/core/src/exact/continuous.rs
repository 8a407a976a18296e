//! Optimal timing, frequency split and sleep decisions for a fixed
//! assignment and per-processor order.
//!
//! With assignment and order fixed, every idle interval is an affine
//! function of start times and cycle splits, so everything except the sleep
//! decisions is linear. Sleep decisions are resolved by branch-and-bound:
//! an interval that must stay awake is bounded by the break-even time and
//! costs `c·I`; one that sleeps is at least the break-even time and costs
//! `e_sw`; an undecided one is charged `λ·I` with `λ = min(c, e_sw/U)`,
//! the convex envelope of the idle cost over `[0, U]`, where `U` is the
//! largest idle time its processor can have.

use std::collections::BTreeMap;

use crate::graph::{TaskGraph, TaskId};
use crate::lp::{solve_lp, LinearProgram, Relation};
use crate::power::{PowerModel, TIME_TOL};
use crate::schedule::{Schedule, ScheduledTask};

/// Relative tolerance for pruning and for treating energies as equal.
pub(crate) const REL_TOL: f64 = 1e-9;

/// Fixed assignment and order: lane `k` lists, in execution order, the
/// tasks on processor `k`. Lanes may be empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct Configuration {
    pub lanes: Vec<Vec<TaskId>>,
}

impl Configuration {
    /// Lanes of `schedule`, one per processor.
    pub fn of_schedule(schedule: &Schedule) -> Self {
        Self {
            lanes: schedule
                .lanes()
                .into_iter()
                .map(|l| l.into_iter().map(|i| schedule.tasks[i].id).collect())
                .collect(),
        }
    }

    /// Same schedule up to processor relabeling: empty lanes dropped, the
    /// rest ordered by smallest task id.
    pub fn canonical(&self) -> Self {
        let mut lanes: Vec<Vec<TaskId>> = self.lanes.iter().filter(|l| !l.is_empty()).cloned().collect();
        lanes.sort_by_key(|l| l.iter().min().copied());
        Self { lanes }
    }

    /// Whether every task appears once and the lane orders together with
    /// the graph edges admit a topological order.
    pub fn is_consistent(&self, graph: &TaskGraph) -> bool {
        let n = graph.len();
        let mut seen = vec![false; n + 1];
        for &t in self.lanes.iter().flatten() {
            if t == 0 || t > n || seen[t] {
                return false;
            }
            seen[t] = true;
        }
        if seen[1..].iter().any(|s| !s) {
            return false;
        }
        let mut succ = vec![Vec::new(); n + 1];
        let mut indeg = vec![0usize; n + 1];
        let chain = self.lanes.iter().flat_map(|l| l.windows(2).map(|w| (w[0], w[1])));
        for (a, b) in graph.edges.iter().copied().chain(chain) {
            succ[a].push(b);
            indeg[b] += 1;
        }
        let mut stack: Vec<usize> = (1..=n).filter(|&t| indeg[t] == 0).collect();
        let mut done = 0;
        while let Some(t) = stack.pop() {
            done += 1;
            for &b in &succ[t] {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    stack.push(b);
                }
            }
        }
        done == n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Objective {
    /// Execution plus idle energy.
    Total,
    /// Execution energy only.
    ExecOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub schedule: Schedule,
    /// Optimized objective, J.
    pub energy: f64,
    pub lp_solves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SubOutcome {
    Solved(SubproblemResult),
    /// Provably worse than the cutoff.
    Pruned {
        lp_solves: usize,
    },
    Infeasible {
        lp_solves: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Decision {
    Free,
    Awake,
    Asleep,
}

/// `constant + Σ coef · x[var]`, model units.
#[derive(Debug, Clone)]
struct Lin {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Lin {
    fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    fn dense(&self, n: usize, scale: f64) -> Vec<f64> {
        let mut row = vec![0.0; n];
        for &(v, c) in &self.terms {
            row[v] += c * scale;
        }
        row
    }
}

/// LP skeleton shared by every branch-and-bound node, in model units
/// (ms, Mcycles, GHz, mJ).
struct Skeleton {
    base: LinearProgram,
    exec_cost: Vec<f64>,
    intervals: Vec<Lin>,
    /// `(processor, interval index)` of each entry of `intervals`.
    keys: Vec<(usize, usize)>,
    width: usize,
    t_be: f64,
    c: f64,
    e_sw: f64,
    /// Slope of the convex envelope of the idle cost, per interval.
    lambdas: Vec<f64>,
}

impl Skeleton {
    fn new(graph: &TaskGraph, power: &PowerModel, config: &Configuration) -> Self {
        let n = graph.len();
        let m = power.num_freqs();
        let width = 1 + m;
        let nv = n * width;
        let td = graph.period * 1e3;
        let ghz: Vec<f64> = power.freqs.iter().map(|f| f * 1e-9).collect();
        let ecyc: Vec<f64> = power.cycle_energies().iter().map(|e| e * 1e9).collect();
        let start = |t: TaskId| (t - 1) * width;
        let finish = |t: TaskId| Lin {
            terms: std::iter::once((start(t), 1.0))
                .chain((0..m).map(|i| (start(t) + 1 + i, 1.0 / ghz[i])))
                .collect(),
            constant: 0.0,
        };
        let mut lp = LinearProgram::new(nv);
        let mut exec_cost = vec![0.0; nv];
        for t in 1..=n {
            let w = graph.workload(t - 1) as f64 * 1e-6;
            lp.bounds[start(t)] = (0.0, td);
            let mut row = vec![0.0; nv];
            for i in 0..m {
                lp.bounds[start(t) + 1 + i] = (0.0, w);
                row[start(t) + 1 + i] = 1.0;
                exec_cost[start(t) + 1 + i] = ecyc[i];
            }
            lp.add(row, Relation::Eq, w);
            lp.add(finish(t).dense(nv, 1.0), Relation::Le, td);
        }
        let before = |a: TaskId, b: TaskId| {
            let mut row = finish(a).dense(nv, 1.0);
            row[start(b)] -= 1.0;
            row
        };
        for &(a, b) in &graph.edges {
            lp.add(before(a, b), Relation::Le, 0.0);
        }
        let c = power.c;
        let e_sw = power.e_sw * 1e3;
        let t_be = power.break_even() * 1e3;
        let f_top = ghz.iter().copied().fold(0.0, f64::max);
        let mut intervals = Vec::new();
        let mut keys = Vec::new();
        let mut lambdas = Vec::new();
        for (k, lane) in config.lanes.iter().enumerate() {
            // No interval of this lane can exceed its total slack.
            let slack = td
                - lane
                    .iter()
                    .map(|&t| graph.workload(t - 1) as f64 * 1e-6 / f_top)
                    .sum::<f64>();
            let lambda = if slack < t_be - TIME_TOL * 1e3 {
                c
            } else {
                c.min(e_sw / slack)
            };
            let Some((&first, &last)) = lane.first().zip(lane.last()) else {
                continue;
            };
            let mut wrap = finish(last);
            for term in &mut wrap.terms {
                term.1 = -term.1;
            }
            wrap.terms.push((start(first), 1.0));
            wrap.constant = td;
            intervals.push(wrap);
            keys.push((k, 0));
            lambdas.push(lambda);
            for (j, w) in lane.windows(2).enumerate() {
                lp.add(before(w[0], w[1]), Relation::Le, 0.0);
                let mut gap = finish(w[0]);
                for term in &mut gap.terms {
                    term.1 = -term.1;
                }
                gap.terms.push((start(w[1]), 1.0));
                intervals.push(gap);
                keys.push((k, j + 1));
                lambdas.push(lambda);
            }
        }
        Self {
            base: lp,
            exec_cost,
            intervals,
            keys,
            width,
            t_be,
            c,
            e_sw,
            lambdas,
        }
    }

    /// Idle cost of an interval with the best feasible sleep decision.
    fn idle_cost(&self, len: f64) -> f64 {
        if len < TIME_TOL * 1e3 {
            0.0
        } else if len >= self.t_be - TIME_TOL * 1e3 {
            self.e_sw
        } else {
            self.c * len
        }
    }

    fn true_energy(&self, x: &[f64], objective: Objective) -> f64 {
        let exec: f64 = self.exec_cost.iter().zip(x).map(|(c, v)| c * v).sum();
        match objective {
            Objective::ExecOnly => exec,
            Objective::Total => exec + self.intervals.iter().map(|iv| self.idle_cost(iv.eval(x))).sum::<f64>(),
        }
    }

    /// Solve the node LP; returns the point and the node bound (mJ).
    fn solve(&self, decisions: &[Decision], objective: Objective) -> Option<(Vec<f64>, f64)> {
        let nv = self.base.num_vars();
        let mut lp = self.base.clone();
        lp.objective = self.exec_cost.clone();
        let mut constant = 0.0;
        if objective == Objective::Total {
            for ((iv, d), &lambda) in self.intervals.iter().zip(decisions).zip(&self.lambdas) {
                let weight = match d {
                    Decision::Free => lambda,
                    Decision::Awake => {
                        lp.add(iv.dense(nv, 1.0), Relation::Le, self.t_be - iv.constant);
                        self.c
                    }
                    Decision::Asleep => {
                        lp.add(iv.dense(nv, 1.0), Relation::Ge, self.t_be - iv.constant);
                        constant += self.e_sw;
                        0.0
                    }
                };
                if weight != 0.0 {
                    for &(v, coef) in &iv.terms {
                        lp.objective[v] += weight * coef;
                    }
                    constant += weight * iv.constant;
                }
            }
        }
        let out = solve_lp(&lp).expect("subproblem LP is well formed");
        out.is_optimal().then_some((out.values, out.objective + constant))
    }

    fn schedule(&self, graph: &TaskGraph, config: &Configuration, processors: usize, x: &[f64]) -> Schedule {
        let mut s = Schedule::empty(graph.period, processors);
        let mut proc_of = vec![0; graph.len() + 1];
        for (k, lane) in config.lanes.iter().enumerate() {
            for &t in lane {
                proc_of[t] = k;
            }
        }
        for t in 1..=graph.len() {
            let base = (t - 1) * self.width;
            let split = (0..self.width - 1)
                .filter_map(|i| {
                    let c = x[base + 1 + i] * 1e6;
                    (c > 0.0).then_some((i, c))
                })
                .collect();
            s.tasks.push(ScheduledTask {
                id: t,
                processor: proc_of[t],
                start: (x[base] * 1e-3).max(0.0),
                split,
            });
        }
        let mut switches = BTreeMap::new();
        for (iv, &key) in self.intervals.iter().zip(&self.keys) {
            let len = iv.eval(x);
            if len >= TIME_TOL * 1e3 {
                switches.insert(key, len >= self.t_be - TIME_TOL * 1e3);
            }
        }
        s.switches = switches;
        s
    }
}

/// Solve one configuration. `cutoff` (J) lets the search stop early when
/// the configuration cannot beat it; pass `f64::INFINITY` for an exact,
/// cutoff-independent answer.
pub(crate) fn solve_configuration(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    config: &Configuration,
    objective: Objective,
    cutoff: f64,
) -> SubOutcome {
    if config.lanes.len() > processors || !config.is_consistent(graph) {
        return SubOutcome::Infeasible { lp_solves: 0 };
    }
    let sk = Skeleton::new(graph, power, config);
    let cutoff_mj = cutoff * 1e3;
    let mut lp_solves = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let root = vec![Decision::Free; sk.intervals.len()];
    let mut stack: Vec<(Vec<Decision>, f64)> = vec![(root, f64::NEG_INFINITY)];
    let mut feasible_root = false;
    while let Some((decisions, parent_bound)) = stack.pop() {
        lp_solves += 1;
        let Some((x, bound)) = sk.solve(&decisions, objective) else {
            continue;
        };
        feasible_root = true;
        debug_assert!(
            bound >= parent_bound - 1e-7 * parent_bound.abs().max(1.0),
            "child bound {bound} below parent bound {parent_bound}"
        );
        let value = sk.true_energy(&x, objective);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, x.clone()));
        }
        let incumbent = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let slack = REL_TOL * incumbent.abs().max(1e-9);
        if bound >= incumbent - slack || bound > cutoff_mj * (1.0 + REL_TOL) {
            continue;
        }
        if objective == Objective::ExecOnly {
            continue;
        }
        let branch = sk
            .intervals
            .iter()
            .zip(&decisions)
            .enumerate()
            .filter(|(_, (_, d))| **d == Decision::Free)
            .map(|(j, (iv, _))| {
                let len = iv.eval(&x);
                (j, sk.idle_cost(len) - sk.lambdas[j] * len, len)
            })
            .filter(|&(_, gap, _)| gap > slack)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((j, _, len)) = branch {
            // Explore the side the LP point already favours first.
            let (first, second) = if len >= sk.t_be {
                (Decision::Asleep, Decision::Awake)
            } else {
                (Decision::Awake, Decision::Asleep)
            };
            for d in [second, first] {
                let mut child = decisions.clone();
                child[j] = d;
                stack.push((child, bound));
            }
        }
    }
    match best {
        None => {
            debug_assert!(!feasible_root);
            SubOutcome::Infeasible { lp_solves }
        }
        Some((value, _)) if value > cutoff_mj * (1.0 + REL_TOL) => SubOutcome::Pruned { lp_solves },
        Some((value, x)) => SubOutcome::Solved(SubproblemResult {
            schedule: sk.schedule(graph, config, processors, &x),
            energy: value * 1e-3,
            lp_solves,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubproblemError {
    #[error("the configuration cannot meet the deadline or violates precedence")]
    Infeasible,
}

/// Optimal start times, frequency splits and sleep decisions for a fixed
/// configuration, minimizing total energy.
pub fn continuous_subproblem(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    config: &Configuration,
) -> Result<SubproblemResult, SubproblemError> {
    match solve_configuration(graph, power, processors, config, Objective::Total, f64::INFINITY) {
        SubOutcome::Solved(r) => Ok(r),
        _ => Err(SubproblemError::Infeasible),
    }
}
