//! Schedule semantics: validation, idle intervals and energy accounting.
//!
//! Every processor is periodic. Between two consecutive tasks there is an
//! idle interval; the time after the last task and before the first task of
//! the next period forms one wrap-around interval. A processor with no tasks
//! sleeps for the whole period and costs nothing.

mod gantt;
mod report;

use std::fmt;

use thiserror::Error;

use crate::graph::{TaskGraph, TaskId};
use crate::power::{PowerModel, TIME_TOL};
use crate::schedule::Schedule;

pub use gantt::gantt_svg;
pub use report::{compare_report, CompareRow, ComparisonTable, Summary};

/// Relative tolerance on per-task cycle totals.
const CYCLE_RTOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum ScheduleViolation {
    MissingTask(TaskId),
    UnknownTask(TaskId),
    DuplicateTask(TaskId),
    BadProcessor {
        task: TaskId,
        processor: usize,
    },
    BadFrequency {
        task: TaskId,
        index: usize,
    },
    NegativeCycles {
        task: TaskId,
        index: usize,
    },
    Workload {
        task: TaskId,
        expected: u64,
        found: f64,
    },
    EarlyStart {
        task: TaskId,
        start: f64,
    },
    Deadline {
        task: TaskId,
        finish: f64,
    },
    Precedence {
        src: TaskId,
        dst: TaskId,
        finish: f64,
        start: f64,
    },
    Overlap {
        processor: usize,
        first: TaskId,
        second: TaskId,
    },
    SwitchTooShort {
        processor: usize,
        index: usize,
        length: f64,
    },
    SwitchWithoutInterval {
        processor: usize,
        index: usize,
    },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScheduleViolation::*;
        match self {
            MissingTask(t) => write!(f, "task {t} is not scheduled"),
            UnknownTask(t) => write!(f, "task {t} is not in the graph"),
            DuplicateTask(t) => write!(f, "task {t} is scheduled more than once"),
            BadProcessor { task, processor } => {
                write!(f, "task {task} is on nonexistent processor {}", processor + 1)
            }
            BadFrequency { task, index } => {
                write!(f, "task {task} uses nonexistent frequency index {}", index + 1)
            }
            NegativeCycles { task, index } => {
                write!(f, "task {task} has negative cycles at frequency index {}", index + 1)
            }
            Workload { task, expected, found } => {
                write!(f, "task {task} executes {found} cycles, expected {expected}")
            }
            EarlyStart { task, start } => write!(f, "task {task} starts at {start} s"),
            Deadline { task, finish } => write!(f, "task {task} finishes at {finish} s, past the period"),
            Precedence {
                src,
                dst,
                finish,
                start,
            } => write!(
                f,
                "edge {src}->{dst}: {src} finishes at {finish} s but {dst} starts at {start} s"
            ),
            Overlap {
                processor,
                first,
                second,
            } => write!(f, "tasks {first} and {second} overlap on processor {}", processor + 1),
            SwitchTooShort {
                processor,
                index,
                length,
            } => write!(
                f,
                "processor {} sleeps in interval {index} of only {length} s",
                processor + 1
            ),
            SwitchWithoutInterval { processor, index } => write!(
                f,
                "processor {} sleeps in interval {index}, which is empty",
                processor + 1
            ),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("invalid schedule: {}", join(.0))]
    Violations(Vec<ScheduleViolation>),
}

fn join(v: &[ScheduleViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum IntervalKind {
    BetweenTasks,
    WrapAround,
    WholePeriod,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct IdleInterval {
    pub processor: usize,
    /// Position in the processor's task sequence of the task this interval
    /// precedes; 0 for wrap-around and whole-period intervals.
    pub index: usize,
    pub length: f64,
    pub kind: IntervalKind,
    pub switched: bool,
}

/// How sleep decisions are taken when evaluating energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SwitchPolicy {
    /// Sleep in every interval at least as long as the break-even time.
    Optimal,
    /// Never sleep.
    Never,
    /// Use the schedule's switch flags; missing flags mean no sleep.
    Given,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProcessorReport {
    pub processor: usize,
    pub tasks: usize,
    pub busy: f64,
    /// Sum of all gaps, including those too short to count as intervals.
    pub idle: f64,
    pub exec_energy: f64,
    pub idle_energy: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalReport {
    pub total_energy: f64,
    pub exec_energy: f64,
    pub idle_energy: f64,
    /// Counted idle intervals, whole-period intervals of unused processors
    /// included.
    pub idle_interval_count: usize,
    pub total_idle_time: f64,
    /// Counted intervals at least as long as the break-even time.
    pub long_interval_count: usize,
    pub switched_count: usize,
    pub used_processors: usize,
    pub per_processor: Vec<ProcessorReport>,
    pub intervals: Vec<IdleInterval>,
}

impl EvalReport {
    pub fn long_fraction(&self) -> f64 {
        if self.idle_interval_count == 0 {
            0.0
        } else {
            self.long_interval_count as f64 / self.idle_interval_count as f64
        }
    }
}

/// Every violation of the schedule invariants, in a fixed order.
pub fn check_schedule(graph: &TaskGraph, power: &PowerModel, schedule: &Schedule) -> Vec<ScheduleViolation> {
    use ScheduleViolation::*;
    let n = graph.len();
    let td = schedule.period;
    let mut out = Vec::new();
    let mut seen = vec![0usize; n + 1];
    for t in &schedule.tasks {
        if t.id == 0 || t.id > n {
            out.push(UnknownTask(t.id));
            continue;
        }
        seen[t.id] += 1;
    }
    for id in 1..=n {
        match seen[id] {
            0 => out.push(MissingTask(id)),
            1 => {}
            _ => out.push(DuplicateTask(id)),
        }
    }
    if !out.is_empty() {
        return out;
    }
    let mut finish = vec![0.0; n + 1];
    let mut start = vec![0.0; n + 1];
    for t in &schedule.tasks {
        if t.processor >= schedule.processors {
            out.push(BadProcessor {
                task: t.id,
                processor: t.processor,
            });
        }
        let mut ok_split = true;
        for &(i, cycles) in &t.split {
            if i >= power.num_freqs() {
                out.push(BadFrequency { task: t.id, index: i });
                ok_split = false;
            } else if cycles < -1e-6 {
                out.push(NegativeCycles { task: t.id, index: i });
            }
        }
        let w = graph.workload(t.id - 1);
        let total = t.cycles();
        if (total - w as f64).abs() > CYCLE_RTOL * w as f64 + 1e-6 {
            out.push(Workload {
                task: t.id,
                expected: w,
                found: total,
            });
        }
        if !ok_split {
            continue;
        }
        start[t.id] = t.start;
        finish[t.id] = t.finish(power);
        if t.start < -TIME_TOL {
            out.push(EarlyStart {
                task: t.id,
                start: t.start,
            });
        }
        if finish[t.id] > td + TIME_TOL {
            out.push(Deadline {
                task: t.id,
                finish: finish[t.id],
            });
        }
    }
    for &(u, v) in &graph.edges {
        if finish[u] > start[v] + TIME_TOL {
            out.push(Precedence {
                src: u,
                dst: v,
                finish: finish[u],
                start: start[v],
            });
        }
    }
    let lanes = schedule.lanes();
    for (p, lane) in lanes.iter().enumerate() {
        for w in lane.windows(2) {
            let (a, b) = (&schedule.tasks[w[0]], &schedule.tasks[w[1]]);
            if finish[a.id] > b.start + TIME_TOL {
                out.push(Overlap {
                    processor: p,
                    first: a.id,
                    second: b.id,
                });
            }
        }
    }
    if out.is_empty() {
        let intervals = raw_intervals(power, schedule);
        for (&(p, j), &on) in &schedule.switches {
            if !on {
                continue;
            }
            match intervals.iter().find(|iv| iv.processor == p && iv.index == j) {
                Some(iv) if iv.kind == IntervalKind::WholePeriod => {}
                Some(iv) if !power.can_switch(iv.length) => out.push(SwitchTooShort {
                    processor: p,
                    index: j,
                    length: iv.length,
                }),
                Some(_) => {}
                None => out.push(SwitchWithoutInterval { processor: p, index: j }),
            }
        }
    }
    out
}

/// Gaps of every processor, before dropping negligible ones. Switch flags
/// are taken from the schedule.
fn gaps(power: &PowerModel, schedule: &Schedule) -> Vec<IdleInterval> {
    let td = schedule.period;
    let mut out = Vec::new();
    for (p, lane) in schedule.lanes().iter().enumerate() {
        if lane.is_empty() {
            out.push(IdleInterval {
                processor: p,
                index: 0,
                length: td,
                kind: IntervalKind::WholePeriod,
                switched: false,
            });
            continue;
        }
        let first = &schedule.tasks[lane[0]];
        let last = &schedule.tasks[lane[lane.len() - 1]];
        let mut push = |index: usize, length: f64, kind| {
            out.push(IdleInterval {
                processor: p,
                index,
                length,
                kind,
                switched: schedule.switches.get(&(p, index)).copied().unwrap_or(false),
            })
        };
        push(0, td - last.finish(power) + first.start, IntervalKind::WrapAround);
        for j in 1..lane.len() {
            let prev = &schedule.tasks[lane[j - 1]];
            let next = &schedule.tasks[lane[j]];
            push(j, next.start - prev.finish(power), IntervalKind::BetweenTasks);
        }
    }
    out
}

fn raw_intervals(power: &PowerModel, schedule: &Schedule) -> Vec<IdleInterval> {
    gaps(power, schedule)
        .into_iter()
        .filter(|iv| iv.length >= TIME_TOL)
        .collect()
}

/// Idle intervals of a valid schedule, processor by processor with the
/// wrap-around interval first. Intervals shorter than [`TIME_TOL`] are
/// dropped.
pub fn idle_intervals(
    graph: &TaskGraph,
    power: &PowerModel,
    schedule: &Schedule,
) -> Result<Vec<IdleInterval>, EvalError> {
    let violations = check_schedule(graph, power, schedule);
    if !violations.is_empty() {
        return Err(EvalError::Violations(violations));
    }
    Ok(raw_intervals(power, schedule))
}

/// Energy and idle statistics of a valid schedule.
pub fn schedule_energy(
    graph: &TaskGraph,
    power: &PowerModel,
    schedule: &Schedule,
    policy: SwitchPolicy,
) -> Result<EvalReport, EvalError> {
    let mut intervals = idle_intervals(graph, power, schedule)?;
    for iv in &mut intervals {
        if iv.kind == IntervalKind::WholePeriod {
            continue;
        }
        iv.switched = match policy {
            SwitchPolicy::Optimal => power.can_switch(iv.length),
            SwitchPolicy::Never => false,
            SwitchPolicy::Given => iv.switched,
        };
    }
    let ecyc = power.cycle_energies();
    let lanes = schedule.lanes();
    let all_gaps = gaps(power, schedule);
    let mut per_processor = Vec::with_capacity(schedule.processors);
    for (p, lane) in lanes.iter().enumerate() {
        let busy: f64 = lane.iter().map(|&i| schedule.tasks[i].duration(power)).sum();
        let exec_energy: f64 = lane
            .iter()
            .flat_map(|&i| schedule.tasks[i].split.iter())
            .map(|&(f, cycles)| cycles * ecyc[f])
            .sum();
        let mine = || intervals.iter().filter(move |iv| iv.processor == p);
        let idle_energy: f64 = mine()
            .filter(|iv| iv.kind != IntervalKind::WholePeriod)
            .map(|iv| power.idle_energy_flagged(iv.length, iv.switched))
            .sum();
        per_processor.push(ProcessorReport {
            processor: p,
            tasks: lane.len(),
            busy,
            idle: all_gaps.iter().filter(|g| g.processor == p).map(|g| g.length).sum(),
            exec_energy,
            idle_energy,
            intervals: mine().count(),
        });
    }
    let exec_energy: f64 = per_processor.iter().map(|r| r.exec_energy).sum();
    let idle_energy: f64 = per_processor.iter().map(|r| r.idle_energy).sum();
    Ok(EvalReport {
        total_energy: exec_energy + idle_energy,
        exec_energy,
        idle_energy,
        idle_interval_count: intervals.len(),
        total_idle_time: intervals.iter().map(|iv| iv.length).sum(),
        long_interval_count: intervals.iter().filter(|iv| power.can_switch(iv.length)).count(),
        switched_count: intervals.iter().filter(|iv| iv.switched).count(),
        used_processors: lanes.iter().filter(|l| !l.is_empty()).count(),
        per_processor,
        intervals,
    })
}

/// Sleep in exactly the intervals long enough to allow it. Flags on every
/// counted interval are written explicitly; other flags are cleared.
pub fn apply_dpm_post(power: &PowerModel, schedule: &Schedule) -> Schedule {
    let mut out = schedule.clone();
    out.switches.clear();
    for iv in raw_intervals(power, schedule) {
        if iv.kind != IntervalKind::WholePeriod {
            out.switches
                .insert((iv.processor, iv.index), power.can_switch(iv.length));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::schedule::ScheduledTask;

    const W: u64 = 2_000_000;

    fn single(processors: usize) -> (TaskGraph, Schedule) {
        let g = TaskGraph::from_workloads(&[W], &[], 0.008);
        let mut s = Schedule::empty(0.008, processors);
        s.tasks.push(ScheduledTask {
            id: 1,
            processor: 0,
            start: 0.0,
            split: vec![(2, W as f64)],
        });
        (g, s)
    }

    #[test]
    fn single_task_wrap_interval() {
        let p = PowerModel::reference();
        let (g, s) = single(1);
        let iv = idle_intervals(&g, &p, &s).unwrap();
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].kind, IntervalKind::WrapAround);
        assert_relative_eq!(iv[0].length, 0.008 - 2e6 / 1.53e9, max_relative = 1e-12);
        assert_relative_eq!(iv[0].length * 1e3, 6.6928, max_relative = 1e-4);
    }

    #[test]
    fn single_task_energies() {
        let p = PowerModel::reference();
        let (g, s) = single(4);
        let opt = schedule_energy(&g, &p, &s, SwitchPolicy::Optimal).unwrap();
        assert_relative_eq!(opt.total_energy * 1e3, 1.67480, epsilon = 1e-5);
        assert_eq!(opt.used_processors, 1);
        let never = schedule_energy(&g, &p, &s, SwitchPolicy::Never).unwrap();
        // 1.289804 mJ execution plus 0.276 W over 6.692810 ms awake.
        assert_relative_eq!(never.total_energy * 1e3, 3.137020, epsilon = 1e-5);
        // Three unused processors contribute whole-period intervals.
        assert_eq!(opt.idle_interval_count, 4);
        assert_eq!(opt.long_interval_count, 4);
    }

    #[test]
    fn empty_schedule_costs_nothing() {
        let p = PowerModel::reference();
        let g = TaskGraph::from_workloads(&[], &[], 0.008);
        let r = schedule_energy(&g, &p, &Schedule::empty(0.008, 4), SwitchPolicy::Optimal).unwrap();
        assert_eq!(r.total_energy, 0.0);
        assert_eq!(r.used_processors, 0);
        assert!(r.intervals.iter().all(|iv| iv.kind == IntervalKind::WholePeriod));
    }

    fn two_on_one(gap: f64) -> (TaskGraph, Schedule) {
        let g = TaskGraph::from_workloads(&[W, W], &[], 0.020);
        let d = W as f64 / 2.1e9;
        let mut s = Schedule::empty(0.020, 1);
        for (id, start) in [(1, 0.0), (2, d + gap)] {
            s.tasks.push(ScheduledTask {
                id,
                processor: 0,
                start,
                split: vec![(4, W as f64)],
            });
        }
        (g, s)
    }

    #[test]
    fn back_to_back_has_no_between_interval() {
        let p = PowerModel::reference();
        let (g, s) = two_on_one(0.0);
        let iv = idle_intervals(&g, &p, &s).unwrap();
        assert_eq!(iv.len(), 1);
        assert_eq!(iv[0].kind, IntervalKind::WrapAround);
    }

    #[test]
    fn post_dpm_thresholds() {
        let p = PowerModel::reference();
        for (gap, expect) in [(6e-3, true), (2e-3, false), (5e-3, true)] {
            let (g, s) = two_on_one(gap);
            let s = apply_dpm_post(&p, &s);
            assert_eq!(s.switches.get(&(0, 1)), Some(&expect), "gap {gap}");
            let given = schedule_energy(&g, &p, &s, SwitchPolicy::Given).unwrap();
            let opt = schedule_energy(&g, &p, &s, SwitchPolicy::Optimal).unwrap();
            assert_relative_eq!(given.total_energy, opt.total_energy, max_relative = 1e-12);
        }
        let (g, s) = two_on_one(2e-3);
        let r = schedule_energy(&g, &p, &s, SwitchPolicy::Optimal).unwrap();
        let between = r.intervals.iter().find(|iv| iv.index == 1).unwrap();
        assert_relative_eq!(
            p.idle_energy_flagged(between.length, between.switched),
            0.552e-3,
            max_relative = 1e-9
        );
    }

    #[test]
    fn violations_are_reported() {
        let p = PowerModel::reference();
        let (g, mut s) = two_on_one(0.0);
        s.tasks[1].start = 1e-4;
        assert!(matches!(
            idle_intervals(&g, &p, &s),
            Err(EvalError::Violations(v)) if v.contains(&ScheduleViolation::Overlap { processor: 0, first: 1, second: 2 })
        ));
        let (g, mut s) = two_on_one(0.0);
        s.tasks[0].split[0].1 -= 10.0;
        let v = check_schedule(&g, &p, &s);
        assert!(matches!(v[0], ScheduleViolation::Workload { task: 1, .. }));
        let (g, mut s) = two_on_one(2e-3);
        s.switches.insert((0, 1), true);
        assert!(matches!(
            check_schedule(&g, &p, &s)[..],
            [ScheduleViolation::SwitchTooShort {
                processor: 0,
                index: 1,
                ..
            }]
        ));
        let g = TaskGraph::from_workloads(&[W, W], &[(2, 1)], 0.020);
        let (_, s) = two_on_one(0.0);
        assert!(matches!(
            check_schedule(&g, &p, &s)[..],
            [ScheduleViolation::Precedence { src: 2, dst: 1, .. }]
        ));
    }

    #[test]
    fn closure_busy_plus_idle_is_period() {
        let p = PowerModel::reference();
        let (g, s) = two_on_one(3e-3);
        let r = schedule_energy(&g, &p, &s, SwitchPolicy::Optimal).unwrap();
        let pr = &r.per_processor[0];
        assert!((pr.busy + pr.idle - 0.020).abs() <= 1e-9);
        assert!((r.total_energy - r.exec_energy - r.idle_energy).abs() <= 1e-9);
    }
}
