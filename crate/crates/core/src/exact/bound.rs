//! Lower bounds on the energy of a set of tasks sharing one processor.
//!
//! Order and precedence are ignored. The busy time `T` of the processor is
//! free; the cheapest execution for a given `T` is the infimal convolution
//! of the per-task envelopes, and all idle time on the processor costs at
//! least `φ(Td - T)`, where `φ(L) = c·L` below the break-even time and
//! `e_sw` above it. Splitting idle time into several intervals never costs
//! less than `φ` of the total.

use crate::graph::{TaskGraph, TaskId};
use crate::power::{PowerModel, TIME_TOL};

use super::continuous::Objective;

/// Minimum execution energy as a function of total busy time.
struct Convolution {
    /// `(busy time, energy)` vertices, ascending time.
    points: Vec<(f64, f64)>,
}

impl Convolution {
    fn new(graph: &TaskGraph, power: &PowerModel, block: &[TaskId]) -> Self {
        let mut t = 0.0;
        let mut e = 0.0;
        let mut segments = Vec::new();
        for &id in block {
            let env = power.exec_envelope(graph.workload(id - 1) as f64);
            let bp = &env.breakpoints;
            t += bp[0].0;
            e += bp[0].1;
            for w in bp.windows(2) {
                segments.push((w[1].0 - w[0].0, w[1].1 - w[0].1));
            }
        }
        // Steepest descent first keeps the result convex.
        segments.sort_by(|a, b| (a.1 / a.0).total_cmp(&(b.1 / b.0)));
        let mut points = vec![(t, e)];
        for (dt, de) in segments {
            t += dt;
            e += de;
            points.push((t, e));
        }
        Self { points }
    }

    fn at(&self, time: f64) -> f64 {
        let p = &self.points;
        let k = p.partition_point(|q| q.0 < time);
        if k == 0 {
            return p[0].1;
        }
        if k == p.len() {
            return p[p.len() - 1].1;
        }
        let (a, b) = (p[k - 1], p[k]);
        if b.0 - a.0 <= 0.0 {
            return b.1;
        }
        a.1 + (time - a.0) / (b.0 - a.0) * (b.1 - a.1)
    }
}

fn idle_floor(power: &PowerModel, len: f64) -> f64 {
    if len < TIME_TOL {
        0.0
    } else if power.can_switch(len) {
        power.e_sw
    } else {
        power.c * len
    }
}

/// Lower bound (J) on one processor running exactly `block`, or `None`
/// when the block cannot fit in one period even at top speed.
pub(crate) fn block_bound(
    graph: &TaskGraph,
    power: &PowerModel,
    block: &[TaskId],
    objective: Objective,
) -> Option<f64> {
    let td = graph.period;
    let conv = Convolution::new(graph, power, block);
    let lo = conv.points[0].0;
    if lo > td * (1.0 + 1e-12) + TIME_TOL {
        return None;
    }
    let hi = conv.points[conv.points.len() - 1].0.min(td).max(lo);
    let cost = |t: f64| {
        let t = t.clamp(lo, hi);
        match objective {
            Objective::ExecOnly => conv.at(t),
            Objective::Total => conv.at(t) + idle_floor(power, (td - t).max(0.0)),
        }
    };
    let t_be = power.break_even();
    let candidates = conv
        .points
        .iter()
        .map(|p| p.0)
        .chain([lo, hi, td - t_be, td - t_be + TIME_TOL, td - TIME_TOL]);
    candidates.map(cost).min_by(f64::total_cmp)
}

/// Sum of block bounds; `None` when some block is infeasible.
pub(crate) fn partition_bound(
    graph: &TaskGraph,
    power: &PowerModel,
    blocks: &[Vec<TaskId>],
    objective: Objective,
) -> Option<f64> {
    blocks.iter().map(|b| block_bound(graph, power, b, objective)).sum()
}
