//! `esched`: generate task graphs, solve, export, evaluate and compare.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible instance or
//! invalid schedule, 3 search budget exhausted.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use esched::eval::{
    check_schedule, compare_report, gantt_svg, schedule_energy, ComparisonTable, EvalReport, SwitchPolicy,
};
use esched::exact::{exact_isc_t_schedule, exact_schedule, ExactError, ExactLimits};
use esched::graph::{load_graph, parse_time, random_taskgraph, save_graph, GenParams};
use esched::heuristic::{heuristic_isc_t_schedule, heuristic_schedule, HeuristicError};
use esched::model::{build_isc_t_model, build_isct_model, export_lp, solution_from_schedule, MilpModel};
use esched::platform::{parse_platform, Platform};
use esched::suite::{parse_manifest, standard_suite, write_manifest, ManifestEntry};
use esched::{Schedule, TaskGraph};

#[derive(Parser)]
#[command(name = "esched", version, about = "Energy-aware scheduling of periodic task graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random task graph.
    Gen(GenArgs),
    /// Write the 25-instance seeded suite and its manifest.
    GenSuite(GenSuiteArgs),
    /// Schedule a task graph or export its model.
    Solve(SolveArgs),
    /// Check a schedule and report its energy and idle structure.
    Eval(EvalArgs),
    /// Solve every instance of a manifest both ways and tabulate.
    Compare(CompareArgs),
}

#[derive(clap::Args)]
struct PlatformArgs {
    /// Platform description; the built-in reference platform when absent.
    #[arg(long, env = "ESCHED_PLATFORM")]
    platform: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    tasks: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Period with unit, e.g. `8ms`.
    #[arg(long, value_parser = duration_arg)]
    period: f64,
    /// Mean task workload in cycles.
    #[arg(long, default_value_t = 2e6)]
    mean_workload: f64,
    /// Half-width of the workload range, as a fraction of the mean.
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    #[arg(long, default_value_t = 2)]
    max_in: usize,
    #[arg(long, default_value_t = 3)]
    max_out: usize,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenSuiteArgs {
    #[command(flatten)]
    platform: PlatformArgs,
    /// Directory for the graphs and `manifest.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Heuristic,
    ExportLp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    /// Execution and idle energy optimized together.
    Isct,
    /// Execution energy only, sleep decided afterwards.
    IscPlusT,
}

#[derive(clap::Args)]
struct SearchArgs {
    /// Exact search threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Run the exact search above its size limits.
    #[arg(long)]
    force: bool,
    /// Maximum number of LP solves in the exact search.
    #[arg(long)]
    node_budget: Option<usize>,
    /// Wall-clock limit for the exact search, in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Shuffle equal-rank ties in the list scheduler.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct SolveArgs {
    graph: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    method: Method,
    #[arg(long, value_enum, default_value = "isct")]
    objective: ObjectiveArg,
    #[command(flatten)]
    platform: PlatformArgs,
    /// Processor count; overrides the platform.
    #[arg(long)]
    processors: Option<usize>,
    #[command(flatten)]
    search: SearchArgs,
    /// Schedule file, or LP file for `export-lp`; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the model in LP format.
    #[arg(long)]
    lp: Option<PathBuf>,
    /// Also write the model variable values of the schedule.
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyArg {
    Given,
    Optimal,
    Never,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
struct EvalArgs {
    graph: PathBuf,
    schedule: PathBuf,
    #[command(flatten)]
    platform: PlatformArgs,
    /// How sleep decisions are taken.
    #[arg(long, value_enum, default_value = "given")]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write a Gantt chart SVG.
    #[arg(long)]
    gantt: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CompareArgs {
    manifest: PathBuf,
    #[command(flatten)]
    platform: PlatformArgs,
    /// Solver for the joint objective.
    #[arg(long, value_enum, default_value = "exact")]
    method: Solver,
    /// Solver for the baseline.
    #[arg(long, value_enum, default_value = "exact")]
    baseline: Solver,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write every schedule and its Gantt chart here.
    #[arg(long)]
    schedules: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Infeasible(anyhow::Error),
    Budget(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<ExactError> for Failure {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::Infeasible => Failure::Infeasible(e.into()),
            ExactError::BudgetExceeded => Failure::Budget(e.into()),
            e => Failure::Usage(e.into()),
        }
    }
}

impl From<HeuristicError> for Failure {
    fn from(e: HeuristicError) -> Self {
        match e {
            HeuristicError::Infeasible { .. } => Failure::Infeasible(e.into()),
            e => Failure::Usage(e.into()),
        }
    }
}

type Result<T, E = Failure> = std::result::Result<T, E>;

fn duration_arg(s: &str) -> Result<f64, String> {
    let split = s
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let unit = if unit.is_empty() { "s" } else { unit };
    match parse_time(num.trim(), unit) {
        Some(t) if t > 0.0 => Ok(t),
        _ => Err(format!("expected a positive duration such as `8ms`, got `{s}`")),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Write `data` to `output` or stdout. A summary goes to stdout when the
/// data went to a file and to stderr otherwise.
fn emit(output: Option<&Path>, data: &str, summary: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => {
            write(p, data)?;
            print!("{summary}");
        }
        None => {
            print!("{data}");
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn load_platform(args: &PlatformArgs) -> anyhow::Result<Platform> {
    match &args.platform {
        Some(p) => parse_platform(&read(p)?).with_context(|| format!("bad platform file {}", p.display())),
        None => Ok(Platform::reference()),
    }
}

fn load_graph_file(path: &Path) -> anyhow::Result<TaskGraph> {
    load_graph(&read(path)?).with_context(|| format!("bad task graph {}", path.display()))
}

fn limits(args: &SearchArgs) -> anyhow::Result<ExactLimits> {
    let time_budget = match args.time_budget {
        Some(t) if t.is_finite() && t >= 0.0 => Some(Duration::from_secs_f64(t)),
        Some(t) => return Err(anyhow!("bad time budget {t}")),
        None => None,
    };
    Ok(ExactLimits {
        node_budget: args.node_budget,
        time_budget,
        force: args.force,
        threads: args.threads,
        ..ExactLimits::default()
    })
}

/// Six decimals of `x · 1000`, without a sign on values that round to zero.
fn milli(x: f64) -> String {
    let s = format!("{:.6}", x * 1e3);
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn mj(j: f64) -> String {
    milli(j)
}

fn ms(s: f64) -> String {
    milli(s)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let graph = random_taskgraph(&GenParams {
        task_count: args.tasks,
        mean_workload: args.mean_workload,
        workload_spread: args.spread,
        max_in_degree: args.max_in,
        max_out_degree: args.max_out,
        period: args.period,
        seed: args.seed,
    })
    .map_err(anyhow::Error::from)?;
    let summary = format!(
        "tasks {}\nedges {}\ntotal workload {} cycles\n",
        graph.len(),
        graph.edges.len(),
        graph.total_workload()
    );
    emit(args.output.as_deref(), &save_graph(&graph), &summary)?;
    Ok(())
}

fn cmd_gen_suite(args: GenSuiteArgs) -> Result<()> {
    let platform = load_platform(&args.platform)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut entries = Vec::new();
    for inst in standard_suite(&platform.power) {
        let file = format!("{}.tg", inst.name);
        write(&args.out.join(&file), &save_graph(&inst.graph))?;
        entries.push(ManifestEntry {
            name: inst.name,
            graph: file,
            processors: inst.processors,
        });
    }
    write(&args.out.join("manifest.txt"), &write_manifest(&entries))?;
    println!("instances {}", entries.len());
    Ok(())
}

/// A solved instance: the schedule, its total energy and whether the search
/// was cut short by a budget.
struct Solved {
    schedule: Schedule,
    energy: f64,
    optimal: bool,
}

fn solve_one(
    graph: &TaskGraph,
    platform: &Platform,
    processors: usize,
    solver: Solver,
    objective: ObjectiveArg,
    search: &SearchArgs,
) -> Result<Solved> {
    let power = &platform.power;
    Ok(match (solver, objective) {
        (Solver::Exact, obj) => {
            let limits = limits(search)?;
            let out = match obj {
                ObjectiveArg::Isct => exact_schedule(graph, power, processors, &limits)?,
                ObjectiveArg::IscPlusT => exact_isc_t_schedule(graph, power, processors, &limits)?,
            };
            Solved {
                schedule: out.schedule,
                energy: out.energy,
                optimal: out.optimal,
            }
        }
        (Solver::Heuristic, obj) => {
            let out = match obj {
                ObjectiveArg::Isct => heuristic_schedule(graph, power, processors, search.seed)?,
                ObjectiveArg::IscPlusT => heuristic_isc_t_schedule(graph, power, processors, search.seed)?,
            };
            Solved {
                schedule: out.schedule,
                energy: out.energy,
                optimal: true,
            }
        }
    })
}

fn build_model(graph: &TaskGraph, platform: &Platform, k: usize, objective: ObjectiveArg) -> anyhow::Result<MilpModel> {
    let model = match objective {
        ObjectiveArg::Isct => build_isct_model(graph, &platform.power, k),
        ObjectiveArg::IscPlusT => build_isc_t_model(graph, &platform.power, k),
    };
    Ok(model?)
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let platform = load_platform(&args.platform)?;
    let graph = load_graph_file(&args.graph)?;
    let k = args.processors.unwrap_or(platform.processors);
    if k == 0 {
        return Err(anyhow!("at least one processor is required").into());
    }
    let solver = match args.method {
        Method::ExportLp => {
            let model = build_model(&graph, &platform, k, args.objective)?;
            let summary = format!("variables {}\nrows {}\n", model.num_vars(), model.rows.len());
            emit(args.output.as_deref(), &export_lp(&model), &summary)?;
            return Ok(());
        }
        Method::Exact => Solver::Exact,
        Method::Heuristic => Solver::Heuristic,
    };
    let solved = solve_one(&graph, &platform, k, solver, args.objective, &args.search)?;
    if args.lp.is_some() || args.solution.is_some() {
        let model = build_model(&graph, &platform, k, args.objective)?;
        if let Some(p) = &args.lp {
            write(p, &export_lp(&model))?;
        }
        if let Some(p) = &args.solution {
            write(
                p,
                &solution_from_schedule(&platform.power, &model, &solved.schedule).to_text(&model),
            )?;
        }
    }
    let summary = format!(
        "energy {} mJ\nprocessors used {}\noptimal {}\n",
        mj(solved.energy),
        solved.schedule.used_processors(),
        solved.optimal
    );
    emit(args.output.as_deref(), &solved.schedule.to_text(), &summary)?;
    if !solved.optimal {
        return Err(Failure::Budget(anyhow!(
            "budget exhausted; the schedule may not be optimal"
        )));
    }
    Ok(())
}

fn report_text(r: &EvalReport, period: f64, processors: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "total energy {} mJ", mj(r.total_energy));
    let _ = writeln!(s, "execution energy {} mJ", mj(r.exec_energy));
    let _ = writeln!(s, "idle energy {} mJ", mj(r.idle_energy));
    let _ = writeln!(s, "period {} ms", ms(period));
    let _ = writeln!(s, "processors used {} of {processors}", r.used_processors);
    let _ = writeln!(
        s,
        "idle intervals {} (long {}, switched {}), {} ms in total",
        r.idle_interval_count,
        r.long_interval_count,
        r.switched_count,
        ms(r.total_idle_time)
    );
    for p in &r.per_processor {
        let _ = writeln!(
            s,
            "processor {}: tasks {} busy {} ms idle {} ms exec {} mJ idle {} mJ intervals {}",
            p.processor + 1,
            p.tasks,
            ms(p.busy),
            ms(p.idle),
            mj(p.exec_energy),
            mj(p.idle_energy),
            p.intervals
        );
    }
    s
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let platform = load_platform(&args.platform)?;
    let graph = load_graph_file(&args.graph)?;
    let schedule = Schedule::from_text(&read(&args.schedule)?)
        .with_context(|| format!("bad schedule {}", args.schedule.display()))?;
    let violations = check_schedule(&graph, &platform.power, &schedule);
    if !violations.is_empty() {
        for v in &violations {
            println!("violation: {v}");
        }
        return Err(Failure::Infeasible(anyhow!(
            "schedule has {} violations",
            violations.len()
        )));
    }
    let policy = match args.policy {
        PolicyArg::Given => SwitchPolicy::Given,
        PolicyArg::Optimal => SwitchPolicy::Optimal,
        PolicyArg::Never => SwitchPolicy::Never,
    };
    let report = schedule_energy(&graph, &platform.power, &schedule, policy).map_err(anyhow::Error::from)?;
    match args.format {
        Format::Text => print!("{}", report_text(&report, graph.period, schedule.processors)),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?
        ),
    }
    if let Some(p) = &args.gantt {
        write(p, &gantt_svg(&platform.power, &schedule))?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let platform = load_platform(&args.platform)?;
    let entries =
        parse_manifest(&read(&args.manifest)?).with_context(|| format!("bad manifest {}", args.manifest.display()))?;
    let base_dir = args.manifest.parent().unwrap_or(Path::new("."));
    if let Some(dir) = &args.schedules {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut table = ComparisonTable::default();
    let mut all_optimal = true;
    for e in &entries {
        let graph = load_graph_file(&base_dir.join(&e.graph))?;
        let solve = |solver, objective| {
            solve_one(&graph, &platform, e.processors, solver, objective, &args.search).map_err(|f| match f {
                Failure::Usage(x) => Failure::Usage(x.context(format!("instance {}", e.name))),
                Failure::Infeasible(x) => Failure::Infeasible(x.context(format!("instance {}", e.name))),
                Failure::Budget(x) => Failure::Budget(x.context(format!("instance {}", e.name))),
            })
        };
        let isct = solve(args.method, ObjectiveArg::Isct)?;
        let base = solve(args.baseline, ObjectiveArg::IscPlusT)?;
        all_optimal &= isct.optimal && base.optimal;
        if let Some(dir) = &args.schedules {
            for (tag, s) in [("isct", &isct), ("isc-plus-t", &base)] {
                write(&dir.join(format!("{}.{tag}.sched", e.name)), &s.schedule.to_text())?;
                write(
                    &dir.join(format!("{}.{tag}.svg", e.name)),
                    &gantt_svg(&platform.power, &s.schedule),
                )?;
            }
        }
        let row = compare_report(
            &e.name,
            &graph,
            &platform.power,
            &isct.schedule,
            isct.energy,
            &base.schedule,
        )
        .map_err(|x| Failure::Infeasible(anyhow::Error::from(x).context(format!("instance {}", e.name))))?;
        table.rows.push(row);
    }
    let text = match args.format {
        Format::Text => table.to_text(),
        Format::Json => table.to_jsonl(),
    };
    let summary = format!("instances {}\n", table.rows.len());
    emit(args.output.as_deref(), &text, &summary)?;
    if !all_optimal {
        return Err(Failure::Budget(anyhow!("budget exhausted on at least one instance")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::GenSuite(a) => cmd_gen_suite(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(e)) => {
            eprintln!("infeasible: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Budget(e)) => {
            eprintln!("budget: {e:#}");
            ExitCode::from(3)
        }
    }
}
