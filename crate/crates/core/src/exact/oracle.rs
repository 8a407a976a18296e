//! Brute-force bracket on the optimum of tiny instances, independent of the
//! LP machinery.
//!
//! Execution energy against duration comes from enumerating cycle splits on
//! a grid and taking their lower hull. Start times are enumerated on a time
//! grid of step `h`. Evaluating schedules that start exactly on the grid
//! gives an upper bound. Reading each grid point as "the true start lies in
//! `[s', s' + h)`" and relaxing every gap accordingly gives a lower bound.

use thiserror::Error;

use crate::graph::{TaskGraph, TaskId};
use crate::power::{PowerModel, TIME_TOL};

use super::continuous::Configuration;
use super::{linear_extensions, partitions};

const MAX_TASKS: usize = 4;
const MAX_FREQS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle handles at most {MAX_TASKS} tasks and {MAX_FREQS} frequencies, got {tasks} and {freqs}")]
    TooLarge { tasks: usize, freqs: usize },
    #[error("granularities must be positive")]
    BadGranularity,
    #[error("no configuration meets the period")]
    Infeasible,
}

/// `lower <= optimum <= upper`, J. `upper` is infinite when no grid-aligned
/// schedule is feasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleBracket {
    pub lower: f64,
    pub upper: f64,
}

impl OracleBracket {
    pub fn contains(&self, energy: f64, rel_tol: f64) -> bool {
        energy >= self.lower * (1.0 - rel_tol) && energy <= self.upper * (1.0 + rel_tol)
    }
}

/// Lower hull of `(duration, energy)` over every split on the cycle grid.
fn grid_envelope(power: &PowerModel, workload: u64, step: u64) -> Vec<(f64, f64)> {
    let e = power.cycle_energies();
    let m = power.num_freqs();
    let mut values: Vec<u64> = (0..=workload / step).map(|j| j * step).collect();
    if values.last() != Some(&workload) {
        values.push(workload);
    }
    let mut pts = Vec::new();
    let mut split = vec![0u64; m];
    fn rec(
        i: usize,
        left: u64,
        values: &[u64],
        split: &mut [u64],
        power: &PowerModel,
        e: &[f64],
        pts: &mut Vec<(f64, f64)>,
    ) {
        if i + 1 == split.len() {
            split[i] = left;
            let d = split.iter().zip(&power.freqs).map(|(&n, f)| n as f64 / f).sum();
            let en = split.iter().zip(e).map(|(&n, e)| n as f64 * e).sum();
            pts.push((d, en));
            return;
        }
        for &v in values.iter().take_while(|&&v| v <= left) {
            split[i] = v;
            rec(i + 1, left - v, values, split, power, e, pts);
        }
        if !values.contains(&left) {
            split[i] = left;
            rec(i + 1, 0, values, split, power, e, pts);
        }
    }
    rec(0, workload, &values, &mut split, power, &e, &mut pts);
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        if hull.last().is_some_and(|q| (q.0 - p.0).abs() <= 1e-15 * p.0) {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let (l, r) = ((b.0 - a.0) * (p.1 - a.1), (b.1 - a.1) * (p.0 - a.0));
            // Split points between two vertices are collinear up to rounding.
            if l - r <= 1e-9 * (l.abs() + r.abs()) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

fn hull_at(hull: &[(f64, f64)], d: f64) -> f64 {
    let k = hull.partition_point(|q| q.0 < d);
    if k == 0 {
        return hull[0].1;
    }
    if k == hull.len() {
        return hull[hull.len() - 1].1;
    }
    let (a, b) = (hull[k - 1], hull[k]);
    a.1 + (d - a.0) / (b.0 - a.0) * (b.1 - a.1)
}

/// Minimum of `E(D) + idle(D)` over `D` in `[lo, hi]`, checking the hull
/// vertices, the range ends and the given kinks of `idle`.
fn min_over(hull: &[(f64, f64)], lo: f64, hi: f64, kinks: &[f64], idle: impl Fn(f64) -> f64) -> f64 {
    if lo > hi + TIME_TOL {
        return f64::INFINITY;
    }
    let hi = hi.max(lo);
    hull.iter()
        .map(|p| p.0)
        .chain(kinks.iter().copied())
        .filter(|&d| d > lo && d < hi)
        .chain([lo, hi])
        .map(|d| hull_at(hull, d) + idle(d))
        .fold(f64::INFINITY, f64::min)
}

struct Instance<'a> {
    power: &'a PowerModel,
    hulls: Vec<Vec<(f64, f64)>>,
    succ: Vec<Vec<TaskId>>,
    td: f64,
    h: f64,
    t_be: f64,
}

impl Instance<'_> {
    fn d_min(&self, t: TaskId) -> f64 {
        self.hulls[t - 1][0].0
    }

    fn d_max(&self, t: TaskId) -> f64 {
        self.hulls[t - 1][self.hulls[t - 1].len() - 1].0
    }

    fn exact_idle(&self, len: f64) -> f64 {
        if len < TIME_TOL {
            0.0
        } else if self.power.can_switch(len) {
            self.power.e_sw
        } else {
            self.power.c * len
        }
    }

    /// Upper and lower bound for one grid assignment of starts.
    fn evaluate(&self, config: &Configuration, s: &[f64]) -> (f64, f64) {
        let (c, e_sw, td, h, t_be) = (self.power.c, self.power.e_sw, self.td, self.h, self.t_be);
        let mut upper = 0.0;
        let mut lower = 0.0;
        for lane in &config.lanes {
            for (j, &u) in lane.iter().enumerate() {
                let su = s[u - 1];
                let hull = &self.hulls[u - 1];
                let limit_ub = self.succ[u - 1]
                    .iter()
                    .map(|&w| s[w - 1] - su)
                    .chain(lane.get(j + 1).map(|&v| s[v - 1] - su))
                    .fold((td - su).min(self.d_max(u)), f64::min);
                let limit_lb = self.succ[u - 1]
                    .iter()
                    .map(|&w| s[w - 1] + h - su)
                    .chain(lane.get(j + 1).map(|&v| s[v - 1] + h - su))
                    .fold((td - su).min(self.d_max(u)), f64::min);
                // Span from this start to the next start on the lane.
                let (span, exact_wrap) = match lane.get(j + 1) {
                    Some(&v) => (s[v - 1] - su, false),
                    None if lane.len() == 1 => (td, true),
                    None => (td - su + s[lane[0] - 1], false),
                };
                upper += min_over(hull, self.d_min(u), limit_ub, &[span - t_be, span], |d| {
                    self.exact_idle(span - d)
                });
                let slack = if exact_wrap { 0.0 } else { h };
                let lo_span = span - slack;
                let hi_span = span + slack;
                let kinks = [lo_span, hi_span - t_be, lo_span - e_sw / c.max(f64::MIN_POSITIVE)];
                lower += min_over(hull, self.d_min(u), limit_lb, &kinks, |d| {
                    let awake = c * (lo_span - d - TIME_TOL).max(0.0);
                    if self.power.can_switch(hi_span - d) {
                        awake.min(e_sw)
                    } else {
                        awake
                    }
                });
            }
        }
        (upper, lower)
    }
}

/// Bracket the minimum total energy of `graph` on `processors` processors
/// by exhaustive search over assignments, orders, cycle splits in steps of
/// `cycle_granularity` and start times in steps of `time_granularity`
/// seconds.
pub fn discretized_oracle(
    graph: &TaskGraph,
    power: &PowerModel,
    processors: usize,
    cycle_granularity: u64,
    time_granularity: f64,
) -> Result<OracleBracket, OracleError> {
    let n = graph.len();
    if n > MAX_TASKS || power.num_freqs() > MAX_FREQS {
        return Err(OracleError::TooLarge {
            tasks: n,
            freqs: power.num_freqs(),
        });
    }
    if cycle_granularity == 0 || time_granularity.is_nan() || time_granularity <= 0.0 {
        return Err(OracleError::BadGranularity);
    }
    if n == 0 {
        return Ok(OracleBracket { lower: 0.0, upper: 0.0 });
    }
    let inst = Instance {
        power,
        hulls: (0..n)
            .map(|i| grid_envelope(power, graph.workload(i), cycle_granularity))
            .collect(),
        succ: graph
            .successors()
            .into_iter()
            .map(|s| s.into_iter().map(|v| v + 1).collect())
            .collect(),
        td: graph.period,
        h: time_granularity,
        t_be: power.break_even(),
    };
    let reach = graph.reachability();
    let mut best = OracleBracket {
        lower: f64::INFINITY,
        upper: f64::INFINITY,
    };
    for blocks in partitions(n, processors) {
        let per_block: Vec<Vec<Vec<TaskId>>> = blocks.iter().map(|b| linear_extensions(b, &reach)).collect();
        let mut idx = vec![0usize; per_block.len()];
        'configs: loop {
            let config = Configuration {
                lanes: idx.iter().zip(&per_block).map(|(&i, o)| o[i].clone()).collect(),
            };
            if config.is_consistent(graph) {
                search_starts(&inst, graph, &config, &mut best);
            }
            for b in 0..idx.len() {
                idx[b] += 1;
                if idx[b] < per_block[b].len() {
                    continue 'configs;
                }
                idx[b] = 0;
            }
            break;
        }
    }
    if best.lower.is_infinite() {
        return Err(OracleError::Infeasible);
    }
    Ok(best)
}

/// Depth-first walk over grid starts in a topological order of the
/// configuration.
fn search_starts(inst: &Instance, graph: &TaskGraph, config: &Configuration, best: &mut OracleBracket) {
    let n = graph.len();
    let mut preds: Vec<Vec<TaskId>> = vec![Vec::new(); n + 1];
    for &(a, b) in &graph.edges {
        preds[b].push(a);
    }
    for lane in &config.lanes {
        for w in lane.windows(2) {
            preds[w[1]].push(w[0]);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n + 1];
    while order.len() < n {
        let t = (1..=n)
            .find(|&t| !placed[t] && preds[t].iter().all(|&p| placed[p]))
            .expect("consistent configuration");
        placed[t] = true;
        order.push(t);
    }
    let steps = (inst.td / inst.h + 1e-9).floor() as usize;
    let mut s = vec![0.0; n];
    fn rec(
        k: usize,
        order: &[TaskId],
        preds: &[Vec<TaskId>],
        steps: usize,
        inst: &Instance,
        config: &Configuration,
        s: &mut [f64],
        best: &mut OracleBracket,
    ) {
        let Some(&u) = order.get(k) else {
            let (ub, lb) = inst.evaluate(config, s);
            best.upper = best.upper.min(ub);
            best.lower = best.lower.min(lb);
            return;
        };
        let earliest = preds[u]
            .iter()
            .map(|&p| s[p - 1] + inst.d_min(p) - inst.h)
            .fold(0.0, f64::max);
        let latest = inst.td - inst.d_min(u);
        for i in 0..=steps {
            let t = i as f64 * inst.h;
            if t < earliest - 1e-12 {
                continue;
            }
            if t > latest + 1e-12 {
                break;
            }
            s[u - 1] = t;
            rec(k + 1, order, preds, steps, inst, config, s, best);
        }
    }
    rec(0, &order, &preds, steps, inst, config, &mut s, best);
}
