//! Acceptance checks, one line per criterion.
//!
//! Runs without the libtest harness so every PASS/FAIL line is printed;
//! the process exits non-zero when any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use esched::eval::{compare_report, gantt_svg, schedule_energy, ComparisonTable, SwitchPolicy};
use esched::exact::{discretized_oracle, exact_isc_t_schedule, exact_schedule, ExactLimits};
use esched::graph::{load_graph, random_taskgraph, GenParams};
use esched::heuristic::{heuristic_isc_t_schedule, heuristic_schedule};
use esched::model::{
    build_isc_t_model, build_isct_model, export_lp, feasible_range, linearize_bool_times_bool,
    linearize_bool_times_real, solution_from_schedule, verify_solution, Affine, Family, MilpModel, ModelKind, VarKind,
};
use esched::power::{break_even_time, PowerModel};
use esched::suite::{calibrated_period, standard_suite, SuiteInstance, TARGET_LOAD};
use esched::{Schedule, TaskGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_graph(name: &str) -> TaskGraph {
    let path = fixtures().join("graphs").join(name);
    load_graph(&std::fs::read_to_string(&path).expect("fixture readable")).expect("fixture parses")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(a.abs())
}

fn energy_model() -> Outcome {
    let p = PowerModel::reference();
    let expected = [0.6999, 0.6610, 0.6449, 0.6478, 0.6639];
    let mut got = Vec::new();
    for (&f, &e) in p.freqs.iter().zip(&expected) {
        let nj = p.energy_per_cycle(f).map_err(|e| e.to_string())? * 1e9;
        ensure(within_rel(nj, e, 1e-3), || format!("{f} Hz: {nj:.5} nJ vs {e}"))?;
        got.push(format!("{nj:.4}"));
    }
    let cheapest = p
        .freqs
        .iter()
        .copied()
        .min_by(|&a, &b| {
            p.energy_per_cycle(a)
                .unwrap()
                .total_cmp(&p.energy_per_cycle(b).unwrap())
        })
        .unwrap();
    ensure(cheapest == 1.53e9, || format!("cheapest frequency {cheapest}"))?;
    Ok(format!("nJ/cycle [{}], minimum at 1.53 GHz", got.join(", ")))
}

fn break_even() -> Outcome {
    let p = PowerModel::reference();
    let be = p.break_even();
    ensure(be == 5e-3, || format!("break-even {be} s"))?;
    let ratio = p.e_sw / p.c;
    ensure((ratio - 1.3949e-3).abs() < 1e-7, || format!("e_sw/c = {ratio}"))?;
    ensure(break_even_time(p.c, p.e_sw, p.t_sw) == 5e-3, || {
        "free function disagrees".into()
    })?;
    Ok(format!("T_be = {} ms (e_sw/c = {:.4} ms)", be * 1e3, ratio * 1e3))
}

fn fitted_power() -> Outcome {
    let p = PowerModel::reference();
    let table = p.table.as_ref().ok_or("reference platform has no table")?;
    let mut worst: f64 = 0.0;
    for (&f, &d) in p.freqs.iter().zip(table) {
        let fitted = p.fitted_power_at(f).ok_or("no fit constants")?;
        let measured = d + p.c;
        let err = (fitted - measured).abs() / measured;
        ensure(err <= 0.01, || format!("{f} Hz: {:.3}% off", err * 100.0))?;
        worst = worst.max(err);
    }
    Ok(format!("worst relative error {:.3}%", worst * 100.0))
}

fn linearization() -> Outcome {
    let mut m = MilpModel::new(ModelKind::Isct);
    let x = m.add_var("x".into(), VarKind::Binary, 0.0, 1.0);
    let y = m.add_var("y".into(), VarKind::Binary, 0.0, 1.0);
    let z = linearize_bool_times_bool(&mut m, Family(11), x, y);
    for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
        let range = feasible_range(&m, z, &[a, b, 0.0], 0.0);
        ensure(range == Some((a * b, a * b)), || {
            format!("corner ({a}, {b}): {range:?}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = 10_000;
    for i in 0..samples {
        let s1: f64 = rng.gen_range(0.0..50.0);
        let s2: f64 = rng.gen_range(0.01..50.0);
        let mut m = MilpModel::new(ModelKind::Isct);
        let bv = m.add_var("b".into(), VarKind::Binary, 0.0, 1.0);
        let xv = m.add_var("x".into(), VarKind::Continuous, -s1, s2);
        let t = linearize_bool_times_real(&mut m, Family(8), &Affine::var(bv), &Affine::var(xv), s1, s2)
            .map_err(|e| e.to_string())?;
        let b = f64::from(rng.gen_range(0..2u8));
        let x = rng.gen_range(-s1..=s2);
        let (lo, hi) = feasible_range(&m, t, &[b, x, 0.0], 1e-12).ok_or_else(|| format!("sample {i}: empty"))?;
        let tol = 1e-9 * (1.0 + s1 + s2);
        ensure((lo - b * x).abs() <= tol && (hi - b * x).abs() <= tol, || {
            format!("sample {i}: b={b} x={x} admits [{lo}, {hi}]")
        })?;
    }
    Ok(format!("4 corners and {samples} samples admit exactly the product"))
}

fn three_freq() -> PowerModel {
    let p = PowerModel::reference();
    PowerModel::new(
        p.freqs[1..4].to_vec(),
        p.table.as_ref().map(|t| t[1..4].to_vec()),
        p.fit,
        p.c,
        p.e_sw,
        p.t_sw,
    )
    .expect("valid platform")
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let p3 = three_freq();
    let limits = ExactLimits {
        threads: 1,
        ..ExactLimits::default()
    };
    let mut widest: f64 = 0.0;
    let instances = 24;
    for seed in 1..=instances {
        let mut g = random_taskgraph(&GenParams {
            task_count: 2 + (seed % 3) as usize,
            seed,
            ..GenParams::default()
        })
        .map_err(|e| e.to_string())?;
        g.period = calibrated_period(&g, &p3, 2, TARGET_LOAD);
        let exact = exact_schedule(&g, &p3, 2, &limits).map_err(|e| format!("seed {seed}: {e}"))?;
        let bracket = discretized_oracle(&g, &p3, 2, 1000, 0.1e-3).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(bracket.contains(exact.energy, 1e-9), || {
            format!(
                "seed {seed}: exact {:.6} mJ outside [{:.6}, {:.6}]",
                exact.energy * 1e3,
                bracket.lower * 1e3,
                bracket.upper * 1e3
            )
        })?;
        widest = widest.max((bracket.upper - bracket.lower) / bracket.upper);
    }
    let p = PowerModel::reference();
    let limits = ExactLimits::default();
    for (file, expected) in [("single.tg", 1.67480), ("two.tg", 2.96460)] {
        let g = fixture_graph(file);
        let out = exact_schedule(&g, &p, 2, &limits).map_err(|e| e.to_string())?;
        let mj = out.energy * 1e3;
        ensure((mj - expected).abs() <= 1e-4, || {
            format!("{file}: {mj:.6} mJ vs {expected}")
        })?;
        ensure(out.schedule.used_processors() == 1, || {
            format!("{file}: more than one processor used")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{instances} instances inside their brackets (widest {:.2}%), fixtures 1.67480 and 2.96460 mJ on one processor, {:.1} s",
        widest * 100.0,
        elapsed.as_secs_f64()
    ))
}

/// Every solver path on one suite instance.
struct Solved {
    inst: SuiteInstance,
    exact: Schedule,
    exact_energy: f64,
    heuristic: Schedule,
    heuristic_energy: f64,
    baseline: Schedule,
    baseline_energy: f64,
    heuristic_baseline: Schedule,
}

fn solve_suite(threads: usize) -> Result<Vec<Solved>, String> {
    let p = PowerModel::reference();
    let limits = ExactLimits {
        threads,
        ..ExactLimits::default()
    };
    standard_suite(&p)
        .into_iter()
        .map(|inst| {
            let (g, k) = (&inst.graph, inst.processors);
            let err = |e: &dyn std::fmt::Display| format!("{}: {e}", inst.name);
            let exact = exact_schedule(g, &p, k, &limits).map_err(|e| err(&e))?;
            let heur = heuristic_schedule(g, &p, k, None).map_err(|e| err(&e))?;
            let base = exact_isc_t_schedule(g, &p, k, &limits).map_err(|e| err(&e))?;
            let heur_base = heuristic_isc_t_schedule(g, &p, k, None).map_err(|e| err(&e))?;
            if !exact.optimal || !base.optimal {
                return Err(err(&"search stopped early"));
            }
            Ok(Solved {
                exact: exact.schedule,
                exact_energy: exact.energy,
                heuristic: heur.schedule,
                heuristic_energy: heur.energy,
                baseline: base.schedule,
                baseline_energy: base.energy,
                heuristic_baseline: heur_base.schedule,
                inst,
            })
        })
        .collect()
}

fn comparison(runs: &[Solved]) -> Result<ComparisonTable, String> {
    let p = PowerModel::reference();
    let rows = runs
        .iter()
        .map(|r| {
            compare_report(&r.inst.name, &r.inst.graph, &p, &r.exact, r.exact_energy, &r.baseline)
                .map_err(|e| format!("{}: {e}", r.inst.name))
        })
        .collect::<Result<_, _>>()?;
    Ok(ComparisonTable { rows })
}

fn objective_consistency(runs: &[Solved]) -> Outcome {
    let p = PowerModel::reference();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for r in runs {
        let (g, k) = (&r.inst.graph, r.inst.processors);
        let isct = build_isct_model(g, &p, k).map_err(|e| e.to_string())?;
        let isc_t = build_isc_t_model(g, &p, k).map_err(|e| e.to_string())?;
        for (tag, model, schedule) in [
            ("exact", &isct, &r.exact),
            ("heuristic", &isct, &r.heuristic),
            ("baseline", &isc_t, &r.baseline),
            ("heuristic baseline", &isc_t, &r.heuristic_baseline),
        ] {
            let v = verify_solution(g, &p, model, &solution_from_schedule(&p, model, schedule));
            ensure(v.violations.is_empty(), || {
                format!("{} {tag}: {}", r.inst.name, v.violations.join("; "))
            })?;
            ensure(v.relative_gap() <= 1e-6, || {
                format!(
                    "{} {tag}: objective {} vs eval {}",
                    r.inst.name, v.model_objective, v.eval_energy
                )
            })?;
            worst = worst.max(v.relative_gap());
            checked += 1;
        }
    }
    Ok(format!("{checked} solutions verified, worst objective gap {worst:.2e}"))
}

fn dominance(runs: &[Solved], elapsed: Duration) -> Outcome {
    let tol = 1e-9;
    let mut broken = Vec::new();
    let mut gap_sum = 0.0;
    for r in runs {
        let name = &r.inst.name;
        if r.exact_energy > r.heuristic_energy * (1.0 + tol) {
            broken.push(format!(
                "{name}: exact {:.5} > heuristic {:.5}",
                r.exact_energy * 1e3,
                r.heuristic_energy * 1e3
            ));
        }
        if r.heuristic_energy > r.baseline_energy * (1.0 + tol) {
            broken.push(format!(
                "{name}: heuristic {:.5} > baseline {:.5}",
                r.heuristic_energy * 1e3,
                r.baseline_energy * 1e3
            ));
        }
        gap_sum += (r.heuristic_energy - r.exact_energy) / r.exact_energy;
    }
    let summary = comparison(runs)?.summary();
    let gap = 100.0 * gap_sum / runs.len() as f64;
    let detail = format!(
        "mean saving {:.2}% (max {:.2}%), mean heuristic gap {gap:.2}%, {:.1} s",
        summary.mean_saving_pct,
        summary.max_saving_pct,
        elapsed.as_secs_f64()
    );
    ensure(runs.len() == 25, || format!("{} instances", runs.len()))?;
    ensure(broken.is_empty(), || format!("{}; {detail}", broken.join("; ")))?;
    ensure(summary.mean_saving_pct > 0.0, || detail.clone())?;
    ensure(gap <= 20.0, || detail.clone())?;
    ensure(elapsed < Duration::from_secs(600), || detail.clone())?;
    Ok(detail)
}

fn idle_structure(runs: &[Solved]) -> Outcome {
    let s = comparison(runs)?.summary();
    let detail = format!(
        "intervals {} vs {}, idle time {:.3} vs {:.3} ms, long share {:.2}% vs {:.2}%",
        s.isct_idle_count,
        s.baseline_idle_count,
        s.isct_idle_time * 1e3,
        s.baseline_idle_time * 1e3,
        s.isct_long_fraction * 100.0,
        s.baseline_long_fraction * 100.0
    );
    ensure(s.isct_idle_count <= s.baseline_idle_count, || detail.clone())?;
    ensure(s.isct_idle_time >= s.baseline_idle_time, || detail.clone())?;
    ensure(s.isct_long_fraction > s.baseline_long_fraction, || detail.clone())?;
    Ok(detail)
}

fn accounting(runs: &[Solved]) -> Outcome {
    let p = PowerModel::reference();
    let mut checked = 0;
    for r in runs {
        let g = &r.inst.graph;
        for s in [&r.exact, &r.heuristic, &r.baseline, &r.heuristic_baseline] {
            let report = schedule_energy(g, &p, s, SwitchPolicy::Given).map_err(|e| e.to_string())?;
            for pr in report.per_processor.iter().filter(|pr| pr.tasks > 0) {
                let err = (pr.busy + pr.idle - g.period).abs();
                ensure(err <= 1e-9, || {
                    format!("{} processor {}: off by {err:e} s", r.inst.name, pr.processor + 1)
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} processor timelines close to the period"))
}

/// Every artifact of a suite run, concatenated.
fn artifacts(runs: &[Solved]) -> Result<String, String> {
    let p = PowerModel::reference();
    let table = comparison(runs)?;
    let mut out = table.to_text();
    out.push_str(&table.to_jsonl());
    for r in runs {
        for s in [&r.exact, &r.heuristic, &r.baseline, &r.heuristic_baseline] {
            out.push_str(&s.to_text());
            out.push_str(&gantt_svg(&p, s));
        }
        let (g, k) = (&r.inst.graph, r.inst.processors);
        out.push_str(&export_lp(&build_isct_model(g, &p, k).map_err(|e| e.to_string())?));
        out.push_str(&export_lp(&build_isc_t_model(g, &p, k).map_err(|e| e.to_string())?));
    }
    Ok(out)
}

fn determinism(first: &[Solved]) -> Outcome {
    let a = artifacts(first)?;
    let b = artifacts(&solve_suite(4)?)?;
    let c = artifacts(&solve_suite(1)?)?;
    ensure(a == b, || "two four-thread runs differ".into())?;
    ensure(a == c, || "four-thread and sequential runs differ".into())?;
    Ok(format!(
        "{} bytes identical across three runs (4, 4 and 1 threads)",
        a.len()
    ))
}

fn lp_golden() -> Outcome {
    let p = PowerModel::reference();
    let k = 2;
    for (graph, golden) in [("single.tg", "single_k2.lp"), ("two.tg", "two_k2.lp")] {
        let g = fixture_graph(graph);
        let model = build_isct_model(&g, &p, k).map_err(|e| e.to_string())?;
        let text = export_lp(&model);
        let expected = std::fs::read_to_string(fixtures().join("golden").join(golden)).map_err(|e| e.to_string())?;
        ensure(text == expected, || format!("{golden} differs from the export"))?;
    }
    let m = p.num_freqs();
    for n in 1..=6 {
        let g = TaskGraph::from_workloads(&vec![1_000_000; n], &[], 0.01);
        for k in 1..=3 {
            let model = build_isct_model(&g, &p, k).map_err(|e| e.to_string())?;
            let counts = [
                model.count_prefix("start"),
                model.count_prefix("n"),
                model.count_prefix("p"),
                model.count_prefix("o"),
            ];
            let expected = [n, n * m, n * k, (n + 1) * (n + 1) * k - n * k];
            ensure(counts == expected, || {
                format!("n={n} K={k}: {counts:?} vs {expected:?}")
            })?;
        }
    }
    Ok("golden files match; variable counts n, nm, nK, (n+1)²K − nK for n ≤ 6, K ≤ 3".into())
}

fn main() -> ExitCode {
    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "energy model", energy_model()),
        (2, "break-even time", break_even()),
        (3, "fitted power", fitted_power()),
        (4, "linearization", linearization()),
        (5, "oracle equivalence", oracle_equivalence()),
    ];
    let start = Instant::now();
    match solve_suite(4) {
        Ok(runs) => {
            let elapsed = start.elapsed();
            results.push((6, "objective consistency", objective_consistency(&runs)));
            results.push((7, "dominance directions", dominance(&runs, elapsed)));
            results.push((8, "idle structure", idle_structure(&runs)));
            results.push((9, "accounting closure", accounting(&runs)));
            results.push((10, "determinism", determinism(&runs)));
        }
        Err(e) => {
            for (id, name) in [
                (6, "objective consistency"),
                (7, "dominance directions"),
                (8, "idle structure"),
                (9, "accounting closure"),
                (10, "determinism"),
            ] {
                results.push((id, name, Err(format!("suite failed: {e}"))));
            }
        }
    }
    results.push((11, "LP golden files", lp_golden()));
    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {id:>2} {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
