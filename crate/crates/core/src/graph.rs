//! Periodic task graphs: data model, validation, text I/O, random
//! generation and upward ranks.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Task identifier, `1..=n` within a graph.
pub type TaskId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Task {
    pub id: TaskId,
    /// Processor cycles needed to complete the task.
    pub workload: u64,
}

/// A DAG of tasks repeated every `period` seconds; the period doubles as
/// the hard deadline of every task.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TaskGraph {
    pub tasks: Vec<Task>,
    pub edges: Vec<(TaskId, TaskId)>,
    pub period: f64,
}

/// One broken invariant. Variant order is the reporting order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    DuplicateTask(TaskId),
    /// Ids are not exactly `1..=n`.
    IdOutOfRange(TaskId),
    NonPositiveWorkload(TaskId),
    NonPositivePeriod,
    DanglingEdge(TaskId, TaskId),
    SelfLoop(TaskId),
    DuplicateEdge(TaskId, TaskId),
    /// Tasks that cannot be ordered: on a directed cycle or on a path
    /// between cycles.
    Cycle(Vec<TaskId>),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DuplicateTask(id) => write!(f, "task {id} declared more than once"),
            Violation::IdOutOfRange(id) => write!(f, "task id {id} outside 1..=n"),
            Violation::NonPositiveWorkload(id) => write!(f, "task {id} has zero workload"),
            Violation::NonPositivePeriod => write!(f, "period must be positive"),
            Violation::DanglingEdge(u, v) => write!(f, "edge {u}->{v} references a missing task"),
            Violation::SelfLoop(u) => write!(f, "self loop on task {u}"),
            Violation::DuplicateEdge(u, v) => write!(f, "duplicate edge {u}->{v}"),
            Violation::Cycle(ids) => write!(f, "cycle through tasks {ids:?}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph contains a cycle through task {0}")]
    Cycle(TaskId),
    #[error("invalid task graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid generator parameters: {0}")]
    Params(String),
}

impl TaskGraph {
    pub fn new(tasks: Vec<Task>, edges: Vec<(TaskId, TaskId)>, period: f64) -> Self {
        Self { tasks, edges, period }
    }

    /// Tasks `1..=n` with the given workloads.
    pub fn from_workloads(workloads: &[u64], edges: &[(TaskId, TaskId)], period: f64) -> Self {
        let tasks = workloads
            .iter()
            .enumerate()
            .map(|(i, &w)| Task { id: i + 1, workload: w })
            .collect();
        Self::new(tasks, edges.to_vec(), period)
    }

    /// Validate and bring into canonical form (tasks by id, edges sorted).
    pub fn checked(mut self) -> Result<Self, GraphError> {
        let v = validate(&self);
        if !v.is_empty() {
            return Err(GraphError::Invalid(v));
        }
        self.tasks.sort_by_key(|t| t.id);
        self.edges.sort_unstable();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Workload of the task at index `i` (id `i + 1`) of a canonical graph.
    pub fn workload(&self, i: usize) -> u64 {
        self.tasks[i].workload
    }

    pub fn total_workload(&self) -> u64 {
        self.tasks.iter().map(|t| t.workload).sum()
    }

    /// Successor indices per task index.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            out[u - 1].push(v - 1);
        }
        for s in &mut out {
            s.sort_unstable();
        }
        out
    }

    /// Predecessor indices per task index.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for &(u, v) in &self.edges {
            out[v - 1].push(u - 1);
        }
        for s in &mut out {
            s.sort_unstable();
        }
        out
    }

    /// `reach[u]` has bit `v` set when a directed path `u -> ... -> v` exists.
    /// Only for graphs of at most 64 tasks.
    pub fn reachability(&self) -> Vec<u64> {
        assert!(self.len() <= 64, "reachability masks hold at most 64 tasks");
        let order = topological_order(self).expect("acyclic graph");
        let succ = self.successors();
        let mut reach = vec![0u64; self.len()];
        for &id in order.iter().rev() {
            let u = id - 1;
            let mut m = 0u64;
            for &v in &succ[u] {
                m |= (1 << v) | reach[v];
            }
            reach[u] = m;
        }
        reach
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.predecessors().iter().map(Vec::len).collect()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.successors().iter().map(Vec::len).collect()
    }

    /// Graphviz rendering for inspection.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph taskgraph {\n  rankdir=TB;\n");
        let _ = writeln!(s, "  label=\"period {} s\";", self.period);
        for t in &self.tasks {
            let _ = writeln!(s, "  t{} [label=\"{}\\n{} cyc\"];", t.id, t.id, t.workload);
        }
        for &(u, v) in &self.edges {
            let _ = writeln!(s, "  t{u} -> t{v};");
        }
        s.push_str("}\n");
        s
    }
}

/// Every invariant violation, sorted by rule then ids.
pub fn validate(graph: &TaskGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = graph.tasks.len();
    let mut seen = BTreeSet::new();
    for t in &graph.tasks {
        if !seen.insert(t.id) {
            out.push(Violation::DuplicateTask(t.id));
        }
        if t.id == 0 || t.id > n {
            out.push(Violation::IdOutOfRange(t.id));
        }
        if t.workload == 0 {
            out.push(Violation::NonPositiveWorkload(t.id));
        }
    }
    if !(graph.period > 0.0 && graph.period.is_finite()) {
        out.push(Violation::NonPositivePeriod);
    }
    let mut edge_seen = BTreeSet::new();
    let mut good_edges = Vec::new();
    for &(u, v) in &graph.edges {
        if !seen.contains(&u) || !seen.contains(&v) {
            out.push(Violation::DanglingEdge(u, v));
        } else if u == v {
            out.push(Violation::SelfLoop(u));
        } else if !edge_seen.insert((u, v)) {
            out.push(Violation::DuplicateEdge(u, v));
        } else {
            good_edges.push((u, v));
        }
    }
    let ids: Vec<TaskId> = seen.iter().copied().collect();
    let cyc = cyclic_tasks(&ids, &good_edges);
    if !cyc.is_empty() {
        out.push(Violation::Cycle(cyc));
    }
    out.sort();
    out
}

fn cyclic_tasks(ids: &[TaskId], edges: &[(TaskId, TaskId)]) -> Vec<TaskId> {
    let pos = |id: TaskId| ids.binary_search(&id).expect("known id");
    let n = ids.len();
    let mut fwd = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    let mut bwd = vec![Vec::new(); n];
    for &(u, v) in edges {
        let (a, b) = (pos(u), pos(v));
        fwd[a].push(b);
        bwd[b].push(a);
        indeg[b] += 1;
        outdeg[a] += 1;
    }
    // Peel sources and sinks; what remains lies on or between cycles.
    let mut alive = vec![true; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0 || outdeg[i] == 0).collect();
    while let Some(i) = stack.pop() {
        if !alive[i] {
            continue;
        }
        alive[i] = false;
        for &j in &fwd[i] {
            indeg[j] -= 1;
            if alive[j] && indeg[j] == 0 {
                stack.push(j);
            }
        }
        for &j in &bwd[i] {
            outdeg[j] -= 1;
            if alive[j] && outdeg[j] == 0 {
                stack.push(j);
            }
        }
    }
    (0..n).filter(|&i| alive[i]).map(|i| ids[i]).collect()
}

/// Topological order with ties broken by ascending id.
pub fn topological_order(graph: &TaskGraph) -> Result<Vec<TaskId>, GraphError> {
    let n = graph.len();
    let mut indeg = vec![0usize; n + 1];
    let mut succ = vec![Vec::new(); n + 1];
    for &(u, v) in &graph.edges {
        succ[u].push(v);
        indeg[v] += 1;
    }
    let mut heap: BinaryHeap<Reverse<TaskId>> = graph
        .tasks
        .iter()
        .filter(|t| indeg[t.id] == 0)
        .map(|t| Reverse(t.id))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(u)) = heap.pop() {
        order.push(u);
        for &v in &succ[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                heap.push(Reverse(v));
            }
        }
    }
    if order.len() < n {
        // Walk unprocessed predecessors from the smallest stuck id until a
        // task repeats; the repeat closes a cycle.
        let mut pred = vec![Vec::new(); n + 1];
        for &(u, v) in &graph.edges {
            if indeg[u] > 0 {
                pred[v].push(u);
            }
        }
        let start = (1..=n).find(|&id| indeg[id] > 0).expect("some task left");
        let mut path = vec![start];
        let mut cur = start;
        loop {
            cur = *pred[cur].iter().min().expect("stuck task has a stuck predecessor");
            if let Some(p) = path.iter().position(|&x| x == cur) {
                let member = *path[p..].iter().min().expect("non-empty cycle");
                return Err(GraphError::Cycle(member));
            }
            path.push(cur);
        }
    }
    Ok(order)
}

/// Critical-path length to an exit task, including the task itself, with
/// every task run entirely at `f_max`. Indexed by task index (`id - 1`).
pub fn upward_ranks(graph: &TaskGraph, f_max: f64) -> Result<Vec<f64>, GraphError> {
    let order = topological_order(graph)?;
    let succ = graph.successors();
    let mut rank = vec![0.0; graph.len()];
    for &id in order.iter().rev() {
        let u = id - 1;
        let tail = succ[u].iter().map(|&v| rank[v]).fold(0.0, f64::max);
        rank[u] = graph.workload(u) as f64 / f_max + tail;
    }
    Ok(rank)
}

/// How equal upward ranks are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestId,
    /// Uniformly random among equal ranks, reproducible from the seed.
    Seeded(u64),
}

/// Task ids by decreasing upward rank.
pub fn rank_order(graph: &TaskGraph, f_max: f64, tie: TieBreak) -> Result<Vec<TaskId>, GraphError> {
    let rank = upward_ranks(graph, f_max)?;
    let mut key: Vec<u64> = (0..graph.len() as u64).collect();
    if let TieBreak::Seeded(seed) = tie {
        key.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut ids: Vec<TaskId> = (1..=graph.len()).collect();
    ids.sort_by(|&a, &b| {
        rank[b - 1]
            .partial_cmp(&rank[a - 1])
            .expect("finite ranks")
            .then(key[a - 1].cmp(&key[b - 1]))
    });
    Ok(ids)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenParams {
    pub task_count: usize,
    pub mean_workload: f64,
    /// Half-width of the workload range as a fraction of the mean.
    pub workload_spread: f64,
    pub max_in_degree: usize,
    pub max_out_degree: usize,
    pub period: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            task_count: 10,
            mean_workload: 2e6,
            workload_spread: 0.5,
            max_in_degree: 2,
            max_out_degree: 3,
            period: 10e-3,
            seed: 1,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: &str| Err(GraphError::Params(m.to_string()));
        if self.task_count == 0 {
            return bad("task_count must be at least 1");
        }
        if !(0.0..1.0).contains(&self.workload_spread) {
            return bad("workload_spread must lie in [0, 1)");
        }
        if self.max_in_degree == 0 || self.max_out_degree == 0 {
            return bad("degree caps must be at least 1");
        }
        if !(self.mean_workload >= 1.0 && self.mean_workload.is_finite()) {
            return bad("mean_workload must be at least one cycle");
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return bad("period must be positive");
        }
        Ok(())
    }
}

/// Random DAG grown from a single root.
///
/// Each new task hangs off a uniformly chosen earlier task that still has
/// out-degree to spare; afterwards up to `task_count` random forward edges
/// are tried, kept only when both degree caps allow. Forward edges between
/// increasing ids keep the graph acyclic.
pub fn random_taskgraph(params: &GenParams) -> Result<TaskGraph, GraphError> {
    params.validate()?;
    let n = params.task_count;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let lo = params.mean_workload * (1.0 - params.workload_spread);
    let hi = params.mean_workload * (1.0 + params.workload_spread);
    let workloads: Vec<u64> = (0..n)
        .map(|_| {
            let w = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            (w.round() as u64).max(1)
        })
        .collect();

    let mut indeg = vec![0usize; n];
    let mut outdeg = vec![0usize; n];
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| outdeg[u] < params.max_out_degree).collect();
        let Some(&u) = open.choose(&mut rng) else {
            continue;
        };
        edges.insert((u, v));
        outdeg[u] += 1;
        indeg[v] += 1;
    }
    if n > 1 {
        for _ in 0..n {
            let u = rng.gen_range(0..n - 1);
            let v = rng.gen_range(u + 1..n);
            if outdeg[u] < params.max_out_degree && indeg[v] < params.max_in_degree && edges.insert((u, v)) {
                outdeg[u] += 1;
                indeg[v] += 1;
            }
        }
    }
    let edges: Vec<(TaskId, TaskId)> = edges.into_iter().map(|(u, v)| (u + 1, v + 1)).collect();
    TaskGraph::from_workloads(&workloads, &edges, params.period).checked()
}

/// Seconds from a number and a `s`, `ms` or `us` unit.
pub fn parse_time(num: &str, unit: &str) -> Option<f64> {
    let exp = match unit {
        "s" => "",
        "ms" => "e-3",
        "us" => "e-6",
        _ => return None,
    };
    // Parse through the decimal string so that "8 ms" and "0.008 s" agree
    // to the last bit.
    let (mantissa, mexp) = match num.find(['e', 'E']) {
        Some(p) => (&num[..p], num[p + 1..].parse::<i32>().ok()?),
        None => (num, 0),
    };
    let shift = match exp {
        "" => 0,
        "e-3" => -3,
        _ => -6,
    };
    format!("{mantissa}e{}", mexp + shift).parse().ok()
}

/// Parse the line-oriented `taskgraph v1` format.
pub fn load_graph(text: &str) -> Result<TaskGraph, GraphError> {
    let mut header = false;
    let mut period = None;
    let mut tasks = Vec::new();
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let err = |msg: &str| GraphError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if !header {
            if tok != ["taskgraph", "v1"] {
                return Err(err("expected header `taskgraph v1`"));
            }
            header = true;
            continue;
        }
        match tok[0] {
            "period" => {
                if tok.len() != 3 {
                    return Err(err("expected `period <number> <s|ms|us>`"));
                }
                period = Some(parse_time(tok[1], tok[2]).ok_or_else(|| err("bad period"))?);
            }
            "task" => {
                if tok.len() != 3 {
                    return Err(err("expected `task <id> <cycles>`"));
                }
                let id = tok[1].parse().map_err(|_| err("bad task id"))?;
                let workload = tok[2].parse().map_err(|_| err("bad cycle count"))?;
                tasks.push(Task { id, workload });
            }
            "edge" => {
                if tok.len() != 3 {
                    return Err(err("expected `edge <src> <dst>`"));
                }
                let u = tok[1].parse().map_err(|_| err("bad edge source"))?;
                let v = tok[2].parse().map_err(|_| err("bad edge target"))?;
                edges.push((u, v));
            }
            other => return Err(err(&format!("unknown directive `{other}`"))),
        }
    }
    if !header {
        return Err(GraphError::Parse {
            line: 1,
            msg: "empty input".into(),
        });
    }
    let period = period.ok_or(GraphError::Parse {
        line: text.lines().count(),
        msg: "missing period".into(),
    })?;
    TaskGraph::new(tasks, edges, period).checked()
}

/// Canonical text form: period in seconds, tasks by id, edges sorted.
pub fn save_graph(graph: &TaskGraph) -> String {
    let mut s = String::from("taskgraph v1\n");
    let _ = writeln!(s, "period {} s", graph.period);
    let mut tasks = graph.tasks.clone();
    tasks.sort_by_key(|t| t.id);
    for t in &tasks {
        let _ = writeln!(s, "task {} {}", t.id, t.workload);
    }
    let mut edges = graph.edges.clone();
    edges.sort_unstable();
    for (u, v) in edges {
        let _ = writeln!(s, "edge {u} {v}");
    }
    s
}
