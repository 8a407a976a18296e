use std::fmt::Write as _;

use thiserror::Error;

use super::{Definition, MilpModel, ModelKind, VarKind};
use crate::eval::{apply_dpm_post, check_schedule, schedule_energy, EvalReport, SwitchPolicy};
use crate::graph::TaskGraph;
use crate::power::PowerModel;
use crate::schedule::{Schedule, ScheduledTask};

/// Distance from an integer within which binaries are snapped.
const SNAP: f64 = 1e-6;
/// Feasibility tolerance for rows and bounds, model units.
const FEAS_TOL: f64 = 1e-6;

/// One value per model variable, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
}

impl Solution {
    pub fn get(&self, model: &MilpModel, name: &str) -> Option<f64> {
        model.var(name).map(|v| self.values[v])
    }

    /// `<name> <value>` lines in declaration order.
    pub fn to_text(&self, model: &MilpModel) -> String {
        let mut s = String::new();
        for (v, x) in model.vars.iter().zip(&self.values) {
            let _ = writeln!(s, "{} {x}", v.name);
        }
        s
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SolutionError {
    #[error("line {line}: expected `<name> <value>`")]
    Malformed { line: usize },
    #[error("line {line}: unknown variable `{name}`")]
    Unknown { line: usize, name: String },
    #[error("line {line}: `{value}` is not a number")]
    BadValue { line: usize, value: String },
    #[error("line {line}: `{name}` given twice")]
    Duplicate { line: usize, name: String },
    #[error("no value for `{name}`")]
    Missing { name: String },
}

/// Read `<name> <value>` lines ('#' starts a comment). Every model variable
/// must appear exactly once; binaries within 1e-6 of an integer are
/// snapped to it.
pub fn parse_solution(model: &MilpModel, text: &str) -> Result<Solution, SolutionError> {
    let mut values = vec![None; model.num_vars()];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let tok: Vec<&str> = body.split_whitespace().collect();
        let [name, value] = tok[..] else {
            return Err(SolutionError::Malformed { line });
        };
        let v = model.var(name).ok_or_else(|| SolutionError::Unknown {
            line,
            name: name.to_string(),
        })?;
        let mut x: f64 = value.parse().map_err(|_| SolutionError::BadValue {
            line,
            value: value.to_string(),
        })?;
        if !x.is_finite() {
            return Err(SolutionError::BadValue {
                line,
                value: value.to_string(),
            });
        }
        if model.vars[v].kind == VarKind::Binary && (x - x.round()).abs() <= SNAP {
            x = x.round();
        }
        if values[v].replace(x).is_some() {
            return Err(SolutionError::Duplicate {
                line,
                name: name.to_string(),
            });
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(v, x)| {
            x.ok_or_else(|| SolutionError::Missing {
                name: model.vars[v].name.clone(),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Solution { values })
}

fn run_definitions(model: &MilpModel, values: &mut [f64]) {
    for (t, def) in &model.definitions {
        values[*t] = match def {
            Definition::BoolTimesReal { b, x } => b.eval(values) * x.eval(values),
            Definition::BoolTimesBool { x, y } => values[*x] * values[*y],
            Definition::Affine(e) => e.eval(values),
        };
    }
}

/// The model point that encodes `schedule`. Sleep indicators follow the
/// interval lengths (sleep exactly when at least the break-even time);
/// product and idle variables follow their definitions.
pub fn solution_from_schedule(power: &PowerModel, model: &MilpModel, schedule: &Schedule) -> Solution {
    let mut values = vec![0.0; model.num_vars()];
    let mut set = |name: String, x: f64| {
        if let Some(v) = model.var(&name) {
            values[v] = x;
        }
    };
    for t in &schedule.tasks {
        set(format!("start_{}", t.id), t.start * 1e3);
        set(format!("dur_{}", t.id), t.duration(power) * 1e3);
        for &(i, cycles) in &t.split {
            set(format!("n_{}_{}", t.id, i + 1), cycles * 1e-6);
        }
        set(format!("p_{}_{}", t.processor + 1, t.id), 1.0);
    }
    let n = schedule.tasks.len();
    for (k, lane) in schedule.lanes().iter().enumerate() {
        let ids: Vec<usize> = lane.iter().map(|&i| schedule.tasks[i].id).collect();
        let chain: Vec<usize> = std::iter::once(0).chain(ids.iter().copied()).chain([n + 1]).collect();
        for w in chain.windows(2) {
            set(format!("o_{}_{}_{}", k + 1, w[0], w[1]), 1.0);
        }
        set(format!("used_{}", k + 1), f64::from(u8::from(!ids.is_empty())));
    }
    run_definitions(model, &mut values);
    if model.kind == ModelKind::Isct {
        let t_be = power.break_even() * 1e3;
        let flag = |i: f64| f64::from(u8::from(i >= t_be - 1e-9));
        for t in 1..=n {
            if let (Some(s), Some(i)) = (model.var(&format!("sw_{t}")), model.var(&format!("i_{t}"))) {
                values[s] = flag(values[i]);
            }
        }
        for k in 1..=schedule.processors {
            if let (Some(s), Some(i)) = (model.var(&format!("swp_{k}")), model.var(&format!("ip_{k}"))) {
                values[s] = flag(values[i]);
            }
        }
        run_definitions(model, &mut values);
    }
    Solution { values }
}

/// Result of checking a solution against schedule semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub schedule: Schedule,
    /// Objective value, J.
    pub model_objective: f64,
    /// The schedule-semantics counterpart of the objective, J: total energy
    /// for the joint model, execution energy for the baseline model.
    pub eval_energy: f64,
    pub report: Option<EvalReport>,
    pub violations: Vec<String>,
}

impl Verification {
    pub fn relative_gap(&self) -> f64 {
        (self.model_objective - self.eval_energy).abs() / self.eval_energy.abs().max(1e-12)
    }
}

/// Rebuild the schedule encoded by `solution`, check it against the model
/// rows and the schedule invariants, and recompute its energy from schedule
/// semantics.
pub fn verify_solution(graph: &TaskGraph, power: &PowerModel, model: &MilpModel, solution: &Solution) -> Verification {
    let x = &solution.values;
    let mut violations = model.check_feasibility(x, FEAS_TOL);
    let n = graph.len();
    let k_count = model
        .count_prefix("p")
        .checked_div(n)
        .unwrap_or_else(|| model.count_prefix("used"));
    let get = |name: String| model.var(&name).map(|v| x[v]).unwrap_or(0.0);
    let mut schedule = Schedule::empty(graph.period, k_count);
    for t in 1..=n {
        let processor = (0..k_count)
            .find(|k| get(format!("p_{}_{t}", k + 1)) > 0.5)
            .unwrap_or_else(|| {
                violations.push(format!("task {t} is not assigned"));
                0
            });
        let split = (0..power.num_freqs())
            .filter_map(|i| {
                let c = get(format!("n_{t}_{}", i + 1)) * 1e6;
                (c > 0.0).then_some((i, c))
            })
            .collect();
        schedule.tasks.push(ScheduledTask {
            id: t,
            processor,
            start: get(format!("start_{t}")) * 1e-3,
            split,
        });
    }
    for (k, lane) in schedule.lanes().iter().enumerate() {
        let ids: Vec<usize> = lane.iter().map(|&i| schedule.tasks[i].id).collect();
        let mut chain = Vec::new();
        let mut at = 0;
        while chain.len() <= n {
            let next = (1..=n + 1).find(|&b| b != at && get(format!("o_{}_{at}_{b}", k + 1)) > 0.5);
            match next {
                Some(b) if b == n + 1 => break,
                Some(b) => {
                    chain.push(b);
                    at = b;
                }
                None => break,
            }
        }
        if chain != ids {
            violations.push(format!(
                "ordering variables of processor {} give {chain:?} but start times give {ids:?}",
                k + 1
            ));
        }
        if model.kind == ModelKind::Isct {
            for (j, &id) in ids.iter().enumerate().skip(1) {
                schedule.switches.insert((k, j), get(format!("sw_{id}")) > 0.5);
            }
            if !ids.is_empty() {
                schedule.switches.insert((k, 0), get(format!("swp_{}", k + 1)) > 0.5);
            }
        }
    }
    if model.kind == ModelKind::IscPlusT {
        schedule = apply_dpm_post(power, &schedule);
    }
    violations.extend(check_schedule(graph, power, &schedule).iter().map(|v| v.to_string()));
    let model_objective = model.objective_value(x) * 1e-3;
    let report = schedule_energy(graph, power, &schedule, SwitchPolicy::Given).ok();
    let eval_energy = match (&report, model.kind) {
        (Some(r), ModelKind::Isct) => r.total_energy,
        (Some(r), ModelKind::IscPlusT) => r.exec_energy,
        (None, _) => f64::NAN,
    };
    Verification {
        schedule,
        model_objective,
        eval_energy,
        report,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::model::{build_isc_t_model, build_isct_model};

    fn single() -> (TaskGraph, Schedule) {
        let g = TaskGraph::from_workloads(&[2_000_000], &[], 0.008);
        let mut s = Schedule::empty(0.008, 1);
        s.tasks.push(ScheduledTask {
            id: 1,
            processor: 0,
            start: 0.0,
            split: vec![(2, 2e6)],
        });
        (g, s)
    }

    #[test]
    fn single_task_round_trip() {
        let p = PowerModel::reference();
        let (g, s) = single();
        let m = build_isct_model(&g, &p, 1).unwrap();
        let sol = solution_from_schedule(&p, &m, &s);
        assert_eq!(sol.get(&m, "p_1_1"), Some(1.0));
        assert_eq!(sol.get(&m, "o_1_0_1"), Some(1.0));
        assert_eq!(sol.get(&m, "o_1_1_2"), Some(1.0));
        let parsed = parse_solution(&m, &sol.to_text(&m)).unwrap();
        assert_eq!(parsed, sol);
        let v = verify_solution(&g, &p, &m, &parsed);
        assert!(v.violations.is_empty(), "{:?}", v.violations);
        assert_relative_eq!(v.eval_energy * 1e3, 1.674804, epsilon = 1e-6);
        assert!(v.relative_gap() <= 1e-6);
    }

    #[test]
    fn baseline_objective_is_execution_energy() {
        let p = PowerModel::reference();
        let (g, s) = single();
        let m = build_isc_t_model(&g, &p, 1).unwrap();
        let v = verify_solution(&g, &p, &m, &solution_from_schedule(&p, &m, &s));
        assert!(v.violations.is_empty(), "{:?}", v.violations);
        assert_relative_eq!(v.model_objective * 1e3, 1.289804, epsilon = 1e-6);
        assert!(v.relative_gap() <= 1e-9);
    }

    #[test]
    fn overlap_and_workload_violations() {
        let p = PowerModel::reference();
        let g = TaskGraph::from_workloads(&[2_000_000, 2_000_000], &[], 0.008);
        let mut s = Schedule::empty(0.008, 1);
        for (id, start) in [(1, 0.0), (2, 0.0005)] {
            s.tasks.push(ScheduledTask {
                id,
                processor: 0,
                start,
                split: vec![(4, 2e6)],
            });
        }
        let m = build_isct_model(&g, &p, 1).unwrap();
        let v = verify_solution(&g, &p, &m, &solution_from_schedule(&p, &m, &s));
        assert!(v.violations.iter().any(|x| x.contains("overlap")), "{:?}", v.violations);
        s.tasks[1].start = 0.004;
        s.tasks[0].split[0].1 = 1.5e6;
        let v = verify_solution(&g, &p, &m, &solution_from_schedule(&p, &m, &s));
        assert!(
            v.violations.iter().any(|x| x.contains("expected 2000000")),
            "{:?}",
            v.violations
        );
        assert!(v.violations.iter().any(|x| x.starts_with("C2_1")), "{:?}", v.violations);
    }

    #[test]
    fn parse_errors() {
        let p = PowerModel::reference();
        let (g, s) = single();
        let m = build_isct_model(&g, &p, 1).unwrap();
        let text = solution_from_schedule(&p, &m, &s).to_text(&m);
        let bad = format!("{text}bogus 1\n");
        assert!(matches!(parse_solution(&m, &bad), Err(SolutionError::Unknown { .. })));
        let missing: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        assert_eq!(
            parse_solution(&m, &missing),
            Err(SolutionError::Missing { name: "start_1".into() })
        );
        let nan = text.replacen("start_1 0", "start_1 zero", 1);
        assert_eq!(
            parse_solution(&m, &nan),
            Err(SolutionError::BadValue {
                line: 1,
                value: "zero".into()
            })
        );
        let snapped = text.replacen("p_1_1 1", "p_1_1 0.9999999 # rounded", 1);
        assert_eq!(parse_solution(&m, &snapped).unwrap().get(&m, "p_1_1"), Some(1.0));
    }
}
