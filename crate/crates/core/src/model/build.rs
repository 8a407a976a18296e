use super::{
    linearize_bool_times_bool, linearize_bool_times_real, product_rows, Affine, Definition, Family, MilpModel,
    ModelError, ModelKind, Relation, VarKind,
};
use crate::graph::{validate, TaskGraph};
use crate::power::PowerModel;

const C1: Family = Family(1);
const C2: Family = Family(2);
const C3: Family = Family(3);
const C4: Family = Family(4);
const C5: Family = Family(5);
const C6: Family = Family(6);
const C7: Family = Family(7);
const C8: Family = Family(8);
const C9: Family = Family(9);
const C10: Family = Family(10);
const C11: Family = Family(11);

/// Platform constants in model units.
pub(crate) struct Units {
    /// Period, ms.
    pub td: f64,
    /// Break-even time, ms.
    pub t_be: f64,
    /// Sleep transition energy, mJ.
    pub e_sw: f64,
    /// Static power, W.
    pub c: f64,
    /// GHz.
    pub freqs: Vec<f64>,
    /// mJ per Mcycle (= nJ per cycle).
    pub ecyc: Vec<f64>,
}

impl Units {
    pub fn new(graph: &TaskGraph, power: &PowerModel) -> Self {
        Self {
            td: graph.period * 1e3,
            t_be: power.break_even() * 1e3,
            e_sw: power.e_sw * 1e3,
            c: power.c,
            freqs: power.freqs.iter().map(|f| f * 1e-9).collect(),
            ecyc: power.cycle_energies().iter().map(|e| e * 1e9).collect(),
        }
    }
}

/// Variable indices shared by both models.
struct Core {
    start: Vec<usize>,
    dur: Vec<usize>,
    /// `o[k][u][v]`, `u` in `0..=n`, `v` in `1..=n+1`.
    o: Vec<Vec<Vec<Option<usize>>>>,
}

fn build_core(
    graph: &TaskGraph,
    power: &PowerModel,
    k_count: usize,
    kind: ModelKind,
) -> Result<(MilpModel, Core, Units), ModelError> {
    if power.freqs.is_empty() {
        return Err(ModelError::NoFrequencies);
    }
    if k_count == 0 {
        return Err(ModelError::NoProcessors);
    }
    let violations = validate(graph);
    if !violations.is_empty() {
        return Err(ModelError::InvalidGraph(violations));
    }
    let u = Units::new(graph, power);
    let n = graph.len();
    let m = u.freqs.len();
    let td = u.td;
    let mut model = MilpModel::new(kind);

    let start: Vec<usize> = (1..=n)
        .map(|t| model.add_var(format!("start_{t}"), VarKind::Continuous, 0.0, td))
        .collect();
    let dur: Vec<usize> = (1..=n)
        .map(|t| model.add_var(format!("dur_{t}"), VarKind::Continuous, 0.0, td))
        .collect();
    let n_vars: Vec<Vec<usize>> = (1..=n)
        .map(|t| {
            let w = graph.workload(t - 1) as f64 * 1e-6;
            (1..=m)
                .map(|i| model.add_var(format!("n_{t}_{i}"), VarKind::Continuous, 0.0, w))
                .collect()
        })
        .collect();
    let p: Vec<Vec<usize>> = (1..=k_count)
        .map(|k| {
            (1..=n)
                .map(|t| model.add_var(format!("p_{k}_{t}"), VarKind::Binary, 0.0, 1.0))
                .collect()
        })
        .collect();
    let mut o = vec![vec![vec![None; n + 2]; n + 1]; k_count];
    for (k, ok) in o.iter_mut().enumerate() {
        for (a, oka) in ok.iter_mut().enumerate() {
            for (b, slot) in oka.iter_mut().enumerate().skip(1) {
                if a != b {
                    *slot = Some(model.add_var(format!("o_{}_{a}_{b}", k + 1), VarKind::Binary, 0.0, 1.0));
                }
            }
        }
    }

    for t in 0..n {
        let mut terms = vec![(dur[t], 1.0)];
        terms.extend((0..m).map(|i| (n_vars[t][i], -1.0 / u.freqs[i])));
        model.add_row(C1, terms, Relation::Eq, 0.0);
    }
    for t in 0..n {
        let terms = (0..m).map(|i| (n_vars[t][i], 1.0)).collect();
        model.add_row(C2, terms, Relation::Eq, graph.workload(t) as f64 * 1e-6);
    }
    for t in 0..n {
        model.add_row(C3, vec![(start[t], 1.0), (dur[t], 1.0)], Relation::Le, td);
    }
    for &(a, b) in &graph.edges {
        model.add_row(
            C4,
            vec![(start[a - 1], 1.0), (dur[a - 1], 1.0), (start[b - 1], -1.0)],
            Relation::Le,
            0.0,
        );
    }
    for t in 0..n {
        let terms = (0..k_count).map(|k| (p[k][t], 1.0)).collect();
        model.add_row(C5, terms, Relation::Eq, 1.0);
    }
    // P_{k,0} = P_{k,n+1} = 1; otherwise the row is Σ O - P = 0.
    for k in 0..k_count {
        for a in 0..=n {
            let mut terms: Vec<(usize, f64)> = (1..=n + 1).filter_map(|b| o[k][a][b].map(|v| (v, 1.0))).collect();
            let rhs = if a == 0 {
                1.0
            } else {
                terms.push((p[k][a - 1], -1.0));
                0.0
            };
            model.add_row(C6, terms, Relation::Eq, rhs);
        }
        for b in 1..=n + 1 {
            let mut terms: Vec<(usize, f64)> = (0..=n).filter_map(|a| o[k][a][b].map(|v| (v, 1.0))).collect();
            let rhs = if b == n + 1 {
                1.0
            } else {
                terms.push((p[k][b - 1], -1.0));
                0.0
            };
            model.add_row(C6, terms, Relation::Eq, rhs);
        }
    }
    for k in 0..k_count {
        for a in 1..=n {
            for b in 1..=n {
                if a == b {
                    continue;
                }
                let ov = o[k][a][b].expect("ordering variable");
                model.add_row(
                    C7,
                    vec![(start[a - 1], 1.0), (dur[a - 1], 1.0), (start[b - 1], -1.0), (ov, td)],
                    Relation::Le,
                    td,
                );
            }
        }
    }
    let mut exec = Vec::with_capacity(n * m);
    for nv in &n_vars {
        for (i, &v) in nv.iter().enumerate() {
            exec.push((v, u.ecyc[i]));
        }
    }
    model.objective = exec;
    Ok((model, Core { start, dur, o }, u))
}

/// The baseline model: constraints on timing, assignment and ordering with
/// execution energy as the only objective.
pub fn build_isc_t_model(graph: &TaskGraph, power: &PowerModel, k: usize) -> Result<MilpModel, ModelError> {
    build_core(graph, power, k, ModelKind::IscPlusT).map(|(m, _, _)| m)
}

/// The full joint model with idle intervals, sleep decisions and idle
/// energy in the objective.
pub fn build_isct_model(graph: &TaskGraph, power: &PowerModel, k_count: usize) -> Result<MilpModel, ModelError> {
    let (mut model, core, u) = build_core(graph, power, k_count, ModelKind::Isct)?;
    let n = graph.len();
    let td = u.td;
    let iv: Vec<usize> = (1..=n)
        .map(|t| model.add_var(format!("i_{t}"), VarKind::Continuous, 0.0, td))
        .collect();
    let ip: Vec<usize> = (1..=k_count)
        .map(|k| model.add_var(format!("ip_{k}"), VarKind::Continuous, 0.0, td))
        .collect();
    let sw: Vec<usize> = (1..=n)
        .map(|t| model.add_var(format!("sw_{t}"), VarKind::Binary, 0.0, 1.0))
        .collect();
    let swp: Vec<usize> = (1..=k_count)
        .map(|k| model.add_var(format!("swp_{k}"), VarKind::Binary, 0.0, 1.0))
        .collect();
    let used: Vec<usize> = (1..=k_count)
        .map(|k| model.add_var(format!("used_{k}"), VarKind::Binary, 0.0, 1.0))
        .collect();
    let finish = |t: usize| Affine::var(core.start[t]).plus(core.dur[t], 1.0);

    // Idle time before each task: (1 - Σ_k O_k0v)(S_v - Σ_k Σ_u (S_u + Dur_u) O_kuv).
    for v in 1..=n {
        let mut x = Affine::var(core.start[v - 1]);
        for k in 0..k_count {
            for a in 1..=n {
                if a == v {
                    continue;
                }
                let o = core.o[k][a][v].expect("ordering variable");
                let q = linearize_bool_times_real(&mut model, C8, &Affine::var(o), &finish(a - 1), 0.0, td)?;
                x = x.plus(q, -1.0);
            }
        }
        let mut b = Affine::constant(1.0);
        for k in 0..k_count {
            b = b.plus(core.o[k][0][v].expect("ordering variable"), -1.0);
        }
        product_rows(&mut model, C8, iv[v - 1], &b, &x, td, td)?;
    }

    // Wrap-around idle: Td - Σ_u (S_u + Dur_u) O_{k,u,n+1} + Σ_v S_v O_{k,0,v}.
    for k in 0..k_count {
        let mut def = Affine::constant(td);
        for a in 1..=n {
            let o = core.o[k][a][n + 1].expect("ordering variable");
            let r = linearize_bool_times_real(&mut model, C9, &Affine::var(o), &finish(a - 1), 0.0, td)?;
            def = def.plus(r, -1.0);
        }
        for v in 1..=n {
            let o = core.o[k][0][v].expect("ordering variable");
            let s = linearize_bool_times_real(
                &mut model,
                C9,
                &Affine::var(o),
                &Affine::var(core.start[v - 1]),
                0.0,
                td,
            )?;
            def = def.plus(s, 1.0);
        }
        let mut row = def.scaled(-1.0).plus(ip[k], 1.0);
        row.terms.sort_by_key(|&(v, _)| v);
        model.add_affine_row(C9, row, Relation::Eq);
        model.definitions.push((ip[k], Definition::Affine(def)));
    }

    // Sleep indicators: (I - T_be)/Td <= S <= I/T_be, written without division.
    for (&i, &s) in iv.iter().zip(&sw).chain(ip.iter().zip(&swp)) {
        model.add_row(C10, vec![(i, 1.0), (s, -td)], Relation::Le, u.t_be);
        model.add_row(C10, vec![(s, u.t_be), (i, -1.0)], Relation::Le, 0.0);
    }
    // Processor usage: U_k = 1 exactly when some task is assigned, i.e.
    // when the wrap-around idle is shorter than the period.
    for k in 0..k_count {
        model.add_row(C10, vec![(used[k], td), (ip[k], 1.0)], Relation::Ge, td);
        let empty = core.o[k][0][n + 1].expect("ordering variable");
        model.add_row(C10, vec![(used[k], 1.0), (empty, 1.0)], Relation::Eq, 1.0);
    }

    // Idle energy: S·E_sw + (1 - S)·c·I for each task and, weighted by U,
    // for each processor's wrap-around interval.
    let mut obj = std::mem::take(&mut model.objective);
    for v in 0..n {
        let a = linearize_bool_times_real(&mut model, C11, &Affine::var(sw[v]), &Affine::var(iv[v]), 0.0, td)?;
        obj.extend([(sw[v], u.e_sw), (iv[v], u.c), (a, -u.c)]);
    }
    for k in 0..k_count {
        let z = linearize_bool_times_bool(&mut model, C11, used[k], swp[k]);
        let y = linearize_bool_times_real(&mut model, C11, &Affine::var(used[k]), &Affine::var(ip[k]), 0.0, td)?;
        let w = linearize_bool_times_real(&mut model, C11, &Affine::var(z), &Affine::var(ip[k]), 0.0, td)?;
        obj.extend([(z, u.e_sw), (y, u.c), (w, -u.c)]);
    }
    model.objective = obj;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> TaskGraph {
        TaskGraph::from_workloads(&vec![2_000_000; n], edges, 0.008)
    }

    #[test]
    fn closed_form_counts() {
        let mut p = PowerModel::reference();
        p.freqs.truncate(2);
        p.table.as_mut().unwrap().truncate(2);
        for (n, k) in [(1, 1), (2, 2), (3, 2), (4, 3)] {
            let g = graph(n, &[]);
            let m = build_isct_model(&g, &p, k).unwrap();
            assert_eq!(m.count_prefix("start"), n);
            assert_eq!(m.count_prefix("n"), n * 2);
            assert_eq!(m.count_prefix("p"), n * k);
            assert_eq!(m.count_prefix("o"), (n + 1) * (n + 1) * k - n * k);
            assert_eq!(m.family_count(Family(6)), 2 * k * (n + 1));
            assert_eq!(m.family_count(Family(7)), n * (n - 1) * k);
        }
        let m = build_isct_model(&graph(2, &[]), &p, 2).unwrap();
        assert_eq!(m.count_prefix("o"), 14);
    }

    #[test]
    fn baseline_objective_is_execution_only() {
        let p = PowerModel::reference();
        let g = graph(3, &[(1, 2)]);
        let m = build_isc_t_model(&g, &p, 2).unwrap();
        assert!(m.objective.iter().all(|&(v, _)| m.vars[v].name.starts_with("n_")));
        let binaries = m.binary_count();
        assert_eq!(binaries, m.count_prefix("p") + m.count_prefix("o"));
        assert_eq!(m.family_count(Family(8)), 0);
        assert_eq!(m.family_count(Family(4)), 1);
    }

    #[test]
    fn build_errors() {
        let p = PowerModel::reference();
        assert_eq!(build_isct_model(&graph(1, &[]), &p, 0), Err(ModelError::NoProcessors));
        let cyclic = graph(2, &[(1, 2), (2, 1)]);
        assert!(matches!(
            build_isct_model(&cyclic, &p, 1),
            Err(ModelError::InvalidGraph(_))
        ));
        let mut empty = p.clone();
        empty.freqs.clear();
        assert_eq!(
            build_isc_t_model(&graph(1, &[]), &empty, 1),
            Err(ModelError::NoFrequencies)
        );
    }
}
