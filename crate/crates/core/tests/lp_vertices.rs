//! The simplex solver against brute-force vertex enumeration, plus
//! optimality conditions on the returned duals.

use esched::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use proptest::prelude::*;

/// A hyperplane `a·x = b` that may be active at a vertex.
type Plane = (Vec<f64>, f64);

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn feasible(lp: &LinearProgram, x: &[f64]) -> bool {
    lp.max_violation(x) <= 1e-7
}

/// Minimum over all basic feasible points, or `None` when there are none.
fn brute_force(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<Plane> = lp.constraints.iter().map(|c| (c.coefs.clone(), c.rhs)).collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), lo));
        planes.push((e, hi));
    }
    let mut best: Option<f64> = None;
    let m = planes.len();
    let mut pick = (0..n).collect::<Vec<_>>();
    loop {
        let a = pick.iter().map(|&i| planes[i].0.clone()).collect();
        let b = pick.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(lp, &x) {
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
        // Next n-combination of 0..m.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn arb_lp() -> impl Strategy<Value = LinearProgram> {
    (2usize..=3, 1usize..=4).prop_flat_map(|(n, rows)| {
        let coef = -5i32..=5;
        (
            prop::collection::vec(coef.clone(), n),
            prop::collection::vec((prop::collection::vec(coef, n), 0u8..3, -10i32..=10), rows),
            prop::collection::vec((-3i32..=0, 1i32..=6), n),
        )
            .prop_map(move |(obj, rows, bounds)| {
                let mut lp = LinearProgram::new(n);
                lp.objective = obj.into_iter().map(f64::from).collect();
                lp.bounds = bounds
                    .into_iter()
                    .map(|(l, w)| (f64::from(l), f64::from(l + w)))
                    .collect();
                for (coefs, rel, rhs) in rows {
                    let rel = [Relation::Le, Relation::Eq, Relation::Ge][rel as usize];
                    lp.add(coefs.into_iter().map(f64::from).collect(), rel, f64::from(rhs));
                }
                lp
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matches_vertex_enumeration(lp in arb_lp()) {
        let out = solve_lp(&lp).unwrap();
        match brute_force(&lp) {
            None => prop_assert_eq!(out.status, LpStatus::Infeasible),
            Some(best) => {
                prop_assert_eq!(out.status, LpStatus::Optimal);
                prop_assert!((out.objective - best).abs() <= 1e-7 * (1.0 + best.abs()), "{} vs {}", out.objective, best);
                prop_assert!(feasible(&lp, &out.values));
            }
        }
    }

    #[test]
    fn duals_certify_optimality(lp in arb_lp()) {
        let out = solve_lp(&lp).unwrap();
        prop_assume!(out.is_optimal());
        let tol = 1e-7;
        let n = lp.num_vars();
        let mut dual_obj = 0.0;
        for (c, &y) in lp.constraints.iter().zip(&out.duals) {
            match c.relation {
                Relation::Le => prop_assert!(y <= tol),
                Relation::Ge => prop_assert!(y >= -tol),
                Relation::Eq => {}
            }
            let lhs: f64 = c.coefs.iter().zip(&out.values).map(|(a, x)| a * x).sum();
            prop_assert!(y.abs() <= tol || (lhs - c.rhs).abs() <= 1e-6, "slack row with dual {}", y);
            dual_obj += y * c.rhs;
        }
        for j in 0..n {
            let d = lp.objective[j]
                - lp.constraints.iter().zip(&out.duals).map(|(c, y)| y * c.coefs[j]).sum::<f64>();
            let (lo, hi) = lp.bounds[j];
            let x = out.values[j];
            if (x - lo).abs() <= 1e-7 {
                prop_assert!(d >= -tol || (x - hi).abs() <= 1e-7);
            } else if (x - hi).abs() <= 1e-7 {
                prop_assert!(d <= tol);
            } else {
                prop_assert!(d.abs() <= tol, "interior variable with reduced cost {}", d);
            }
            dual_obj += d * x;
        }
        prop_assert!((dual_obj - out.objective).abs() <= 1e-6 * (1.0 + out.objective.abs()));
    }
}
