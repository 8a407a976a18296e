use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn esched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esched"))
        .args(args)
        .env("ESCHED_PLATFORM", fixtures().join("platform.txt"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(rel: &str) -> String {
    fixtures().join(rel).to_str().unwrap().to_string()
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.tg");
    let b = dir.path().join("b.tg");
    for out in [&a, &b] {
        let o = esched(&["gen", "--tasks", "7", "--seed", "1", "--period", "8ms", "-o", path(out)]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("tasks 7\n"));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().filter(|l| l.starts_with("task ")).count(), 7);
    let total: u64 = text
        .lines()
        .filter_map(|l| l.strip_prefix("task "))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    let o = esched(&["gen", "--tasks", "7", "--seed", "1", "--period", "8ms", "-o", path(&a)]);
    assert!(stdout(&o).contains(&format!("total workload {total} cycles")));
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(
        esched(&["gen", "--tasks", "3", "--period", "soon"]).status.code(),
        Some(1)
    );
    assert_eq!(esched(&["solve"]).status.code(), Some(1));
    assert_eq!(esched(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(esched(&["--help"]).status.code(), Some(0));
}

#[test]
fn every_method_solves_the_single_task_fixture() {
    let g = fixture("graphs/single.tg");
    for method in ["exact", "heuristic"] {
        for objective in ["isct", "isc-plus-t"] {
            let o = esched(&["solve", &g, "--method", method, "--objective", objective]);
            assert!(o.status.success(), "{method} {objective}");
            let err = String::from_utf8(o.stderr.clone()).unwrap();
            assert!(err.contains("energy 1.674804 mJ"), "{method} {objective}: {err}");
            assert!(stdout(&o).starts_with("schedule v1\n"));
        }
    }
}

#[test]
fn export_matches_golden_lp() {
    for (graph, golden) in [("single", "single_k2.lp"), ("two", "two_k2.lp")] {
        let o = esched(&[
            "solve",
            &fixture(&format!("graphs/{graph}.tg")),
            "--method",
            "export-lp",
            "--processors",
            "2",
        ]);
        assert!(o.status.success());
        assert_eq!(
            stdout(&o),
            fs::read_to_string(fixtures().join("golden").join(golden)).unwrap()
        );
    }
}

#[test]
fn infeasible_fixture_exits_two() {
    for method in ["exact", "heuristic"] {
        let o = esched(&["solve", &fixture("graphs/tight.tg"), "--method", method]);
        assert_eq!(o.status.code(), Some(2), "{method}");
    }
}

#[test]
fn exact_limits_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("big.tg");
    let o = esched(&["gen", "--tasks", "9", "--seed", "2", "--period", "40ms", "-o", path(&g)]);
    assert!(o.status.success());
    let o = esched(&["solve", path(&g), "--processors", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8(o.stderr).unwrap().contains("force"));
    let o = esched(&["solve", path(&g), "--processors", "2", "--force", "--time-budget", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).starts_with("schedule v1\n"));
}

#[test]
fn eval_reports_and_detects_violations() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("two.svg");
    let g = fixture("graphs/two.tg");
    let o = esched(&["eval", &g, &fixture("golden/two.sched"), "--gantt", path(&svg)]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("total energy 2.964608 mJ\n"));
    assert_eq!(
        fs::read_to_string(&svg).unwrap(),
        fs::read_to_string(fixtures().join("golden/two.svg")).unwrap()
    );

    let text = fs::read_to_string(fixtures().join("golden/two.sched")).unwrap();
    let bad = dir.path().join("bad.sched");
    fs::write(
        &bad,
        text.replace("task 1 proc 1 start 0\n", "task 1 proc 1 start 0.0071\n"),
    )
    .unwrap();
    let o = esched(&["eval", &g, path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("violation: task 1"));
}

#[test]
fn solve_writes_schedule_lp_and_solution() {
    let dir = tempfile::tempdir().unwrap();
    let (s, lp, sol) = (dir.path().join("s"), dir.path().join("lp"), dir.path().join("sol"));
    let o = esched(&[
        "solve",
        &fixture("graphs/two.tg"),
        "--processors",
        "2",
        "-o",
        path(&s),
        "--lp",
        path(&lp),
        "--solution",
        path(&sol),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "energy 2.964608 mJ\nprocessors used 1\noptimal true\n");
    let read = |p: &Path| fs::read_to_string(p).unwrap();
    assert_eq!(read(&s), read(&fixtures().join("golden/two.sched")));
    assert_eq!(read(&lp), read(&fixtures().join("golden/two_k2.lp")));
    assert_eq!(read(&sol), read(&fixtures().join("golden/two.sol")));
}

fn write_manifest(dir: &Path, names: &[&str]) -> PathBuf {
    let mut text = String::from("suite v1\n");
    for n in names {
        fs::copy(
            fixtures().join("suite").join(format!("{n}.tg")),
            dir.join(format!("{n}.tg")),
        )
        .unwrap();
        let k = fs::read_to_string(fixtures().join("suite/manifest.txt"))
            .unwrap()
            .lines()
            .find(|l| l.starts_with(&format!("instance {n} ")))
            .unwrap()
            .rsplit(' ')
            .next()
            .unwrap()
            .to_string();
        text.push_str(&format!("instance {n} {n}.tg {k}\n"));
    }
    let m = dir.join("manifest.txt");
    fs::write(&m, text).unwrap();
    m
}

#[test]
fn compare_rows_and_average() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), &["s01", "s02", "s03"]);
    let o = esched(&["compare", path(&m), "--format", "json"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    let savings: Vec<f64> = lines[..3]
        .iter()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["saving_pct"]
                .as_f64()
                .unwrap()
        })
        .collect();
    let summary: serde_json::Value = serde_json::from_str(lines[3]).unwrap();
    let mean = summary["summary"]["mean_saving_pct"].as_f64().unwrap();
    assert!((mean - savings.iter().sum::<f64>() / 3.0).abs() < 1e-12);

    let text = stdout(&esched(&["compare", path(&m)]));
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().last().unwrap().starts_with("average saving"));
}

#[test]
fn empty_manifest_gives_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("empty.txt");
    fs::write(&m, "suite v1\n").unwrap();
    let o = esched(&["compare", path(&m)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn compare_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), &["s01", "s04", "s09"]);
    let run = |threads: &str, tag: &str| {
        let sched = dir.path().join(tag);
        let o = esched(&["compare", path(&m), "--threads", threads, "--schedules", path(&sched)]);
        assert!(o.status.success());
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&sched)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        (o.stdout, files)
    };
    let a = run("4", "a");
    assert_eq!(a.1.len(), 12);
    assert_eq!(a, run("4", "b"));
    assert_eq!(a, run("1", "c"));
}

#[test]
fn platform_file_changes_the_answer() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fast_sleep.txt");
    let text = fs::read_to_string(fixtures().join("platform.txt")).unwrap();
    fs::write(&p, text.replace("esw 385", "esw 1")).unwrap();
    let o = esched(&[
        "solve",
        &fixture("graphs/single.tg"),
        "--platform",
        path(&p),
        "-o",
        path(&dir.path().join("s")),
    ]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("1.674804"));
    let o = esched(&["solve", &fixture("graphs/single.tg"), "--platform", "/nonexistent"]);
    assert_eq!(o.status.code(), Some(1));
}
