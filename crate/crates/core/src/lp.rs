//! Small dense linear-program solver.
//!
//! Bounded-variable primal simplex on a dense tableau. Every structural
//! variable carries a finite lower bound and an optional finite upper bound;
//! nonbasic variables rest at one of their bounds. Pivoting follows Bland's
//! rule in both the entering and leaving choice, so the method terminates
//! on degenerate problems without perturbation and is fully deterministic.

use thiserror::Error;

/// Absolute tolerance on reduced costs.
const DUAL_TOL: f64 = 1e-10;
/// Smallest tableau entry accepted as a pivot.
const PIVOT_TOL: f64 = 1e-10;
/// Absolute tolerance on phase-1 infeasibility (problem units).
const FEAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coefs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coefs, relation, rhs }
    }
}

/// `min c·x` subject to linear rows and `lo <= x <= hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Per-variable `(lo, hi)`; `lo` must be finite, `hi` may be `+inf`.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program over `n` variables bounded to `[0, +inf)` with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coefs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coefs, relation, rhs));
    }

    /// Largest absolute row violation of `x`, including bound violations.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.constraints {
            let lhs: f64 = row.coefs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (&(lo, hi), &v) in self.bounds.iter().zip(x) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.bounds.len() != n {
            return Err(LpError::DimensionMismatch {
                what: "bounds",
                expected: n,
                found: self.bounds.len(),
            });
        }
        for row in &self.constraints {
            if row.coefs.len() != n {
                return Err(LpError::DimensionMismatch {
                    what: "constraint row",
                    expected: n,
                    found: row.coefs.len(),
                });
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || hi.is_nan() || lo > hi {
                return Err(LpError::InvalidBounds { var: j, lo, hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Primal point; meaningful only when `status == Optimal`.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Row duals `y` with `c - yᵀA` the reduced costs; empty unless optimal.
    pub duals: Vec<f64>,
}

impl LpOutcome {
    fn bare(status: LpStatus, n: usize) -> Self {
        Self {
            status,
            values: vec![0.0; n],
            objective: f64::NAN,
            duals: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("variable {var} has invalid bounds [{lo}, {hi}]")]
    InvalidBounds { var: usize, lo: f64, hi: f64 },
    #[error("simplex exceeded {0} iterations")]
    IterationLimit(usize),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic,
    Lower,
    Upper,
}

/// Working state: rows are `A x = b` over shifted structurals, slacks and
/// artificials, all with lower bound zero.
struct Tableau {
    m: usize,
    cols: usize,
    /// Row-major `B⁻¹A`.
    t: Vec<f64>,
    /// Current values of the basic variables.
    beta: Vec<f64>,
    /// Reduced costs for the active phase.
    d: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    iterations: usize,
    max_iterations: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn reset_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, &tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    fn entering(&self) -> Option<usize> {
        (0..self.cols).find(|&j| match self.status[j] {
            Status::Lower => self.upper[j] > 0.0 && self.d[j] < -DUAL_TOL,
            Status::Upper => self.d[j] > DUAL_TOL,
            Status::Basic => false,
        })
    }

    fn step(&mut self) -> Result<Step, LpError> {
        let Some(q) = self.entering() else {
            return Ok(Step::Optimal);
        };
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(LpError::IterationLimit(self.max_iterations));
        }
        let sigma = if self.status[q] == Status::Lower { 1.0 } else { -1.0 };

        // Ratio test; ties go to the smallest variable index (Bland).
        let mut theta = self.upper[q];
        let mut leave: Option<usize> = None; // row index, None = bound flip
        let mut leave_var = q;
        for i in 0..self.m {
            let rate = -sigma * self.at(i, q);
            let limit = if rate < -PIVOT_TOL {
                self.beta[i].max(0.0) / -rate
            } else if rate > PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                (self.upper[self.basis[i]] - self.beta[i]).max(0.0) / rate
            } else {
                continue;
            };
            let var = self.basis[i];
            if limit < theta || (limit == theta && var < leave_var) {
                theta = limit;
                leave = Some(i);
                leave_var = var;
            }
        }
        if theta.is_infinite() {
            return Ok(Step::Unbounded);
        }

        for i in 0..self.m {
            let rate = -sigma * self.at(i, q);
            self.beta[i] += rate * theta;
        }
        let Some(r) = leave else {
            self.status[q] = if sigma > 0.0 { Status::Upper } else { Status::Lower };
            return Ok(Step::Moved);
        };

        let out = self.basis[r];
        let rate = -sigma * self.at(r, q);
        self.status[out] = if rate < 0.0 { Status::Lower } else { Status::Upper };
        let entering_value = if sigma > 0.0 { theta } else { self.upper[q] - theta };
        self.pivot(r, q);
        self.beta[r] = entering_value;
        self.basis[r] = q;
        self.status[q] = Status::Basic;
        Ok(Step::Moved)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let p = self.at(r, q);
        for j in 0..cols {
            self.t[r * cols + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for (k, row) in before
            .chunks_exact_mut(cols)
            .chain(after.chunks_exact_mut(cols))
            .enumerate()
        {
            let _ = k;
            let f = row[q];
            if f != 0.0 {
                for (x, &pr) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * pr;
                }
                row[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (x, &pr) in self.d.iter_mut().zip(prow.iter()) {
                *x -= f * pr;
            }
            self.d[q] = 0.0;
        }
    }

    fn run(&mut self) -> Result<bool, LpError> {
        loop {
            match self.step()? {
                Step::Optimal => return Ok(true),
                Step::Unbounded => return Ok(false),
                Step::Moved => {}
            }
        }
    }
}

/// Solve `lp` to an optimal basic solution.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check()?;
    let n = lp.num_vars();
    let m = lp.constraints.len();

    // Normalize rows: shift structurals to lower bound zero, make rhs >= 0.
    let mut sign = vec![1.0; m];
    let mut rhs = vec![0.0; m];
    let mut slack_of = vec![None; m];
    let mut slack_coef = vec![0.0; m];
    let mut num_slacks = 0;
    for (i, row) in lp.constraints.iter().enumerate() {
        let shifted: f64 = row.coefs.iter().zip(&lp.bounds).map(|(a, &(lo, _))| a * lo).sum();
        let mut b = row.rhs - shifted;
        let mut s = match row.relation {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => 0.0,
        };
        if s != 0.0 {
            slack_of[i] = Some(n + num_slacks);
            num_slacks += 1;
        }
        if b < 0.0 {
            sign[i] = -1.0;
            b = -b;
            s = -s;
        }
        rhs[i] = b;
        slack_coef[i] = s;
    }
    // Rows whose slack enters with +1 start with the slack basic.
    let needs_art: Vec<bool> = (0..m).map(|i| slack_coef[i] <= 0.0).collect();
    let num_art = needs_art.iter().filter(|&&x| x).count();
    let cols = n + num_slacks + num_art;

    let mut t = vec![0.0; m * cols];
    let mut upper = vec![f64::INFINITY; cols];
    for j in 0..n {
        upper[j] = lp.bounds[j].1 - lp.bounds[j].0;
    }
    let mut basis = vec![0; m];
    let mut status = vec![Status::Lower; cols];
    let mut art = n + num_slacks;
    for (i, row) in lp.constraints.iter().enumerate() {
        for j in 0..n {
            t[i * cols + j] = sign[i] * row.coefs[j];
        }
        if let Some(s) = slack_of[i] {
            t[i * cols + s] = slack_coef[i];
        }
        if needs_art[i] {
            t[i * cols + art] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = slack_of[i].expect("row without artificial has a slack");
        }
        status[basis[i]] = Status::Basic;
    }

    let mut tab = Tableau {
        m,
        cols,
        t,
        beta: rhs.clone(),
        d: vec![0.0; cols],
        upper,
        status,
        basis,
        iterations: 0,
        max_iterations: 5000 + 200 * (m + cols),
    };

    // Phase 1.
    if num_art > 0 {
        let mut cost1 = vec![0.0; cols];
        for c in cost1.iter_mut().skip(n + num_slacks) {
            *c = 1.0;
        }
        tab.reset_costs(&cost1);
        tab.run()?;
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n + num_slacks)
            .map(|i| tab.beta[i])
            .sum();
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, &b| a.max(b));
        if infeas > FEAS_TOL * scale {
            return Ok(LpOutcome::bare(LpStatus::Infeasible, n));
        }
        // Drive zero-valued artificials out of the basis where possible.
        for i in 0..m {
            if tab.basis[i] < n + num_slacks {
                continue;
            }
            if let Some(q) = (0..n + num_slacks).find(|&j| tab.status[j] != Status::Basic && tab.at(i, j).abs() > 1e-7)
            {
                let leaving = tab.basis[i];
                let value = match tab.status[q] {
                    Status::Upper => tab.upper[q],
                    _ => 0.0,
                };
                tab.pivot(i, q);
                tab.beta[i] = value;
                tab.basis[i] = q;
                tab.status[q] = Status::Basic;
                tab.status[leaving] = Status::Lower;
            }
        }
        for j in n + num_slacks..cols {
            tab.upper[j] = 0.0;
        }
    }

    // Phase 2.
    let mut cost2 = vec![0.0; cols];
    cost2[..n].copy_from_slice(&lp.objective);
    tab.reset_costs(&cost2);
    if !tab.run()? {
        return Ok(LpOutcome::bare(LpStatus::Unbounded, n));
    }

    // Recover values from the final basis using the original columns.
    let column = |i: usize, j: usize| -> f64 {
        if j < n {
            sign[i] * lp.constraints[i].coefs[j]
        } else if j < n + num_slacks {
            if slack_of[i] == Some(j) {
                slack_coef[i]
            } else {
                0.0
            }
        } else {
            // artificial columns are unit vectors in creation order
            let mut a = n + num_slacks;
            for (k, &na) in needs_art.iter().enumerate() {
                if na {
                    if a == j {
                        return if k == i { 1.0 } else { 0.0 };
                    }
                    a += 1;
                }
            }
            0.0
        }
    };
    let mut full = vec![0.0; cols];
    for j in 0..cols {
        if tab.status[j] == Status::Upper {
            full[j] = tab.upper[j];
        }
    }
    let mut b_mat = vec![0.0; m * m];
    let mut b_rhs = rhs.clone();
    for i in 0..m {
        for (k, &bk) in tab.basis.iter().enumerate() {
            b_mat[i * m + k] = column(i, bk);
        }
        for j in 0..cols {
            if tab.status[j] == Status::Upper {
                b_rhs[i] -= column(i, j) * full[j];
            }
        }
    }
    match solve_dense(&b_mat, &b_rhs, m) {
        Some(xb) => {
            for (k, &bk) in tab.basis.iter().enumerate() {
                full[bk] = xb[k].clamp(0.0, tab.upper[bk]);
            }
        }
        None => {
            for (k, &bk) in tab.basis.iter().enumerate() {
                full[bk] = tab.beta[k];
            }
        }
    }

    let values: Vec<f64> = (0..n).map(|j| (lp.bounds[j].0 + full[j]).min(lp.bounds[j].1)).collect();
    let objective = lp.objective.iter().zip(&values).map(|(c, x)| c * x).sum();

    // Duals: solve Bᵀ y = c_B, then undo row sign normalization.
    let mut bt = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            bt[k * m + i] = b_mat[i * m + k];
        }
    }
    let cb: Vec<f64> = tab.basis.iter().map(|&j| cost2[j]).collect();
    let duals = solve_dense(&bt, &cb, m)
        .map(|y| y.iter().zip(&sign).map(|(v, s)| v * s).collect())
        .unwrap_or_default();

    Ok(LpOutcome {
        status: LpStatus::Optimal,
        values,
        objective,
        duals,
    })
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut a = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&p, &q| {
            a[p * n + col]
                .abs()
                .partial_cmp(&a[q * n + col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.swap(piv * n + j, col * n + j);
            }
            x.swap(piv, col);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in col + 1..n {
            s -= a[col * n + j] * x[j];
        }
        x[col] = s / a[col * n + col];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_upper_bounded_row() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![-1.0];
        lp.bounds = vec![(0.0, 10.0)];
        lp.add(vec![1.0], Relation::Le, 1.0);
        let out = solve_lp(&lp).unwrap();
        assert!(out.is_optimal());
        assert_relative_eq!(out.values[0], 1.0);
        assert_relative_eq!(out.objective, -1.0);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.add(vec![1.0], Relation::Ge, 2.0);
        lp.add(vec![1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_detected() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.add(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut lp = LinearProgram::new(2);
        lp.add(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::DimensionMismatch { .. })));
    }

    #[test]
    fn infinite_lower_bound_rejected() {
        let mut lp = LinearProgram::new(1);
        lp.bounds[0] = (f64::NEG_INFINITY, 0.0);
        assert!(matches!(solve_lp(&lp), Err(LpError::InvalidBounds { .. })));
    }

    #[test]
    fn shifted_lower_bounds_and_equalities() {
        // min x + 2y  s.t. x + y = 5, x <= 3, y in [1, 4]
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.bounds = vec![(0.0, 3.0), (1.0, 4.0)];
        lp.add(vec![1.0, 1.0], Relation::Eq, 5.0);
        let out = solve_lp(&lp).unwrap();
        assert_relative_eq!(out.values[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(out.values[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(out.objective, 7.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale) under textbook pivoting.
        let mut lp = LinearProgram::new(4);
        lp.objective = vec![-0.75, 150.0, -0.02, 6.0];
        lp.add(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        lp.add(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        lp.add(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let out = solve_lp(&lp).unwrap();
        assert!(out.is_optimal());
        assert_relative_eq!(out.objective, -0.05, epsilon = 1e-10);
    }

    #[test]
    fn fixed_variable_is_respected() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.bounds = vec![(2.0, 2.0), (0.0, 10.0)];
        lp.add(vec![1.0, 1.0], Relation::Le, 5.0);
        let out = solve_lp(&lp).unwrap();
        assert_relative_eq!(out.values[0], 2.0);
        assert_relative_eq!(out.values[1], 3.0, epsilon = 1e-12);
    }
}
