//! The linearized MILP: construction, LP-file export, solutions and
//! verification.
//!
//! Models are expressed in engineering units so that coefficients stay
//! within a few orders of magnitude of each other: time in ms, cycles in
//! Mcycles, frequency in GHz, energy in mJ, power in W. These are mutually
//! consistent (Mcycles / GHz = ms, W · ms = mJ).
//!
//! Variable names: `start_u`, `dur_u`, `n_u_i`, `p_k_u`, `o_k_u_v` (with
//! `u = 0` the virtual source and `v = n+1` the virtual sink), `i_v`,
//! `ip_k`, `sw_v`, `swp_k`, `used_k` and `aux_<j>`. Tasks, processors and
//! frequencies are numbered from 1.

mod build;
mod lp_file;
mod solution;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::graph::Violation;
pub use crate::lp::Relation;

pub use build::{build_isc_t_model, build_isct_model};
pub use lp_file::export_lp;
pub use solution::{parse_solution, solution_from_schedule, verify_solution, Solution, SolutionError, Verification};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("the platform needs at least one frequency")]
    NoFrequencies,
    #[error("the platform needs at least one processor")]
    NoProcessors,
    #[error("invalid task graph: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("product bounds must be finite, got [-{s1}, {s2}]")]
    UnboundedProduct { s1: f64, s2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VarRef {
    pub name: String,
    pub kind: VarKind,
    pub lo: f64,
    pub hi: f64,
}

/// `constant + Σ coef · var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn var(v: usize) -> Self {
        Self {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn plus(mut self, v: usize, coef: f64) -> Self {
        self.terms.push((v, coef));
        self
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(v, c)| (v, c * k)).collect(),
            constant: self.constant * k,
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v]).sum::<f64>()
    }
}

/// Constraint family tag, printed as `C1` .. `C12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct Family(pub u8);

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub family: Family,
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Amount by which `values` violate this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.lhs(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// How a derived variable follows from the ones before it.
#[derive(Debug, Clone, PartialEq)]
pub enum Definition {
    /// Product of a 0/1-valued expression and a bounded expression.
    BoolTimesReal {
        b: Affine,
        x: Affine,
    },
    BoolTimesBool {
        x: usize,
        y: usize,
    },
    Affine(Affine),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ModelKind {
    /// Execution and idle energy, all decisions joint.
    Isct,
    /// Execution energy only; sleep decisions are left to post-processing.
    IscPlusT,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub kind: ModelKind,
    pub vars: Vec<VarRef>,
    pub rows: Vec<Row>,
    pub objective: Vec<(usize, f64)>,
    /// Derived variables in dependency order.
    pub definitions: Vec<(usize, Definition)>,
    index: HashMap<String, usize>,
    family_counts: Vec<usize>,
    aux_count: usize,
}

impl MilpModel {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            definitions: Vec::new(),
            index: HashMap::new(),
            family_counts: vec![0; 13],
            aux_count: 0,
        }
    }

    pub fn add_var(&mut self, name: String, kind: VarKind, lo: f64, hi: f64) -> usize {
        let (lo, hi) = match kind {
            VarKind::Binary => (0.0, 1.0),
            VarKind::Continuous => (lo, hi),
        };
        let id = self.vars.len();
        let fresh = self.index.insert(name.clone(), id).is_none();
        assert!(fresh, "duplicate variable {name}");
        self.vars.push(VarRef { name, kind, lo, hi });
        id
    }

    /// A new `aux_<j>` variable.
    pub fn add_aux(&mut self, kind: VarKind, lo: f64, hi: f64) -> usize {
        self.aux_count += 1;
        self.add_var(format!("aux_{}", self.aux_count), kind, lo, hi)
    }

    pub fn add_row(&mut self, family: Family, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        let f = family.0 as usize;
        if self.family_counts.len() <= f {
            self.family_counts.resize(f + 1, 0);
        }
        self.family_counts[f] += 1;
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(slot) => slot.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.rows.push(Row {
            name: format!("{family}_{}", self.family_counts[f]),
            family,
            terms: merged,
            relation,
            rhs,
        });
    }

    /// Add `expr (rel) 0` with the constant moved to the right-hand side.
    pub fn add_affine_row(&mut self, family: Family, expr: Affine, relation: Relation) {
        self.add_row(family, expr.terms, relation, -expr.constant);
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Number of variables whose name starts with `prefix_`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        let p = format!("{prefix}_");
        self.vars.iter().filter(|v| v.name.starts_with(&p)).count()
    }

    pub fn family_count(&self, family: Family) -> usize {
        self.family_counts.get(family.0 as usize).copied().unwrap_or(0)
    }

    pub fn binary_count(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Row, bound and integrality violations larger than `tol`, scaled by
    /// `max(1, |rhs|)` for rows.
    pub fn check_feasibility(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (v, x) in self.vars.iter().zip(values) {
            if *x < v.lo - tol || *x > v.hi + tol {
                out.push(format!("{} = {x} outside [{}, {}]", v.name, v.lo, v.hi));
            }
            if v.kind == VarKind::Binary && (x - x.round()).abs() > tol {
                out.push(format!("{} = {x} is not binary", v.name));
            }
        }
        for row in &self.rows {
            let viol = row.violation(values);
            if viol > tol * row.rhs.abs().max(1.0) {
                out.push(format!("{} violated by {viol}", row.name));
            }
        }
        out
    }
}

/// Emit the product rows for `t = b · x` on an existing variable `t`, with
/// `b` a 0/1-valued expression and `x ∈ [-s1, s2]`:
///
/// ```text
/// -b·s1 <= t <= b·s2,   t + b·s1 - x <= s1,   t - b·s2 - x >= -s2
/// ```
pub fn product_rows(
    model: &mut MilpModel,
    family: Family,
    t: usize,
    b: &Affine,
    x: &Affine,
    s1: f64,
    s2: f64,
) -> Result<(), ModelError> {
    if !s1.is_finite() || !s2.is_finite() {
        return Err(ModelError::UnboundedProduct { s1, s2 });
    }
    let t_ = Affine::var(t);
    let combine = |parts: &[(&Affine, f64)]| {
        let mut out = Affine::default();
        for (e, k) in parts {
            let e = e.scaled(*k);
            out.terms.extend(e.terms);
            out.constant += e.constant;
        }
        out
    };
    model.add_affine_row(family, combine(&[(&t_, 1.0), (b, -s2)]), Relation::Le);
    model.add_affine_row(
        family,
        combine(&[(&t_, 1.0), (b, s1), (x, -1.0), (&Affine::constant(-s1), 1.0)]),
        Relation::Le,
    );
    model.add_affine_row(
        family,
        combine(&[(&t_, 1.0), (b, -s2), (x, -1.0), (&Affine::constant(s2), 1.0)]),
        Relation::Ge,
    );
    if s1 > 0.0 {
        model.add_affine_row(family, combine(&[(&t_, 1.0), (b, s1)]), Relation::Ge);
    }
    model.definitions.push((
        t,
        Definition::BoolTimesReal {
            b: b.clone(),
            x: x.clone(),
        },
    ));
    Ok(())
}

/// Replace `b · x` by a new bounded variable `t ∈ [-s1, s2]` and the rows
/// of [`product_rows`]. Returns `t`.
pub fn linearize_bool_times_real(
    model: &mut MilpModel,
    family: Family,
    b: &Affine,
    x: &Affine,
    s1: f64,
    s2: f64,
) -> Result<usize, ModelError> {
    if !s1.is_finite() || !s2.is_finite() {
        return Err(ModelError::UnboundedProduct { s1, s2 });
    }
    let t = model.add_aux(VarKind::Continuous, -s1, s2);
    product_rows(model, family, t, b, x, s1, s2)?;
    Ok(t)
}

/// Replace `x · y` of two binaries by a new binary `z` with
/// `z <= x`, `z <= y`, `x + y - z <= 1`. Returns `z`.
pub fn linearize_bool_times_bool(model: &mut MilpModel, family: Family, x: usize, y: usize) -> usize {
    let z = model.add_aux(VarKind::Binary, 0.0, 1.0);
    model.add_row(family, vec![(z, 1.0), (x, -1.0)], Relation::Le, 0.0);
    model.add_row(family, vec![(z, 1.0), (y, -1.0)], Relation::Le, 0.0);
    model.add_row(family, vec![(x, 1.0), (y, 1.0), (z, -1.0)], Relation::Le, 1.0);
    model.definitions.push((z, Definition::BoolTimesBool { x, y }));
    z
}

/// Feasible range of variable `t` when every other variable is fixed to
/// `values`, from the rows that mention `t` and its bounds. `None` when the
/// rows not involving `t` are violated or the range is empty.
pub fn feasible_range(model: &MilpModel, t: usize, values: &[f64], tol: f64) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (model.vars[t].lo, model.vars[t].hi);
    for row in &model.rows {
        let a: f64 = row.terms.iter().filter(|&&(v, _)| v == t).map(|&(_, c)| c).sum();
        let rest: f64 = row
            .terms
            .iter()
            .filter(|&&(v, _)| v != t)
            .map(|&(v, c)| c * values[v])
            .sum();
        let r = row.rhs - rest;
        if a == 0.0 {
            let ok = match row.relation {
                Relation::Le => rest <= row.rhs + tol,
                Relation::Ge => rest >= row.rhs - tol,
                Relation::Eq => (rest - row.rhs).abs() <= tol,
            };
            if !ok {
                return None;
            }
            continue;
        }
        let bound = r / a;
        let upper = matches!((row.relation, a > 0.0), (Relation::Le, true) | (Relation::Ge, false));
        match row.relation {
            Relation::Eq => {
                lo = lo.max(bound);
                hi = hi.min(bound);
            }
            _ if upper => hi = hi.min(bound),
            _ => lo = lo.max(bound),
        }
    }
    (lo <= hi + tol).then_some((lo, hi))
}
