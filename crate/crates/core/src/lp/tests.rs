use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::constraints::Provenance;

fn row(coefs: &[(usize, f64)], sense: Sense, rhs: f64) -> ConstraintRow {
    ConstraintRow { coefficients: coefs.to_vec(), sense, rhs, provenance: Provenance::default() }
}

fn solve(lp: &LinearProgram) -> LpSolution {
    solve_lp(lp, &SolverOptions::default()).unwrap()
}

#[test]
fn single_variable_upper_row() {
    let mut lp = LinearProgram::new(Direction::Maximize);
    let x = lp.add_variable("x", 0.0, f64::INFINITY);
    lp.objective[x] = 1.0;
    lp.add_row(row(&[(x, 1.0)], Sense::Le, 3.0));
    let s = solve(&lp);
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.x[0] - 3.0).abs() < 1e-12);
    assert!((s.duals[0] - 1.0).abs() < 1e-12);
}

#[test]
fn degenerate_optimum_face() {
    let mut lp = LinearProgram::new(Direction::Maximize);
    let x = lp.add_variable("x", 0.0, f64::INFINITY);
    let y = lp.add_variable("y", 0.0, f64::INFINITY);
    lp.objective = vec![1.0, 1.0];
    lp.add_row(row(&[(x, 1.0), (y, 1.0)], Sense::Le, 1.0));
    let s = solve(&lp);
    assert!((s.objective - 1.0).abs() < 1e-12);
    assert!(s.max_violation <= 1e-9);
}

#[test]
fn infeasible_and_unbounded_are_reported() {
    let mut lp = LinearProgram::new(Direction::Maximize);
    let x = lp.add_variable("x", 0.0, f64::INFINITY);
    lp.objective[x] = 1.0;
    lp.add_row(row(&[(x, 1.0)], Sense::Le, -1.0));
    assert_eq!(solve(&lp).status, LpStatus::Infeasible);

    let mut lp = LinearProgram::new(Direction::Maximize);
    let x = lp.add_variable("x", 0.0, f64::INFINITY);
    let y = lp.add_variable("y", 0.0, f64::INFINITY);
    lp.objective = vec![1.0, 0.0];
    lp.add_row(row(&[(x, 1.0), (y, -1.0)], Sense::Le, 1.0));
    assert_eq!(solve(&lp).status, LpStatus::Unbounded);

    // Infeasible with a positive objective: the dual is infeasible too.
    let mut lp = LinearProgram::new(Direction::Maximize);
    let x = lp.add_variable("x", 0.0, f64::INFINITY);
    let y = lp.add_variable("y", 0.0, f64::INFINITY);
    lp.objective = vec![1.0, 1.0];
    lp.add_row(row(&[(x, 1.0), (y, 1.0)], Sense::Ge, 5.0));
    lp.add_row(row(&[(x, 1.0)], Sense::Le, 1.0));
    lp.add_row(row(&[(y, 1.0)], Sense::Le, 1.0));
    assert_eq!(solve(&lp).status, LpStatus::Infeasible);
}

#[test]
fn free_variables_and_equalities() {
    // min y  s.t.  y >= x - 1, y >= 1 - x, x + z = 4, both free.
    let mut lp = LinearProgram::new(Direction::Minimize);
    let x = lp.add_variable("x", f64::NEG_INFINITY, f64::INFINITY);
    let y = lp.add_variable("y", f64::NEG_INFINITY, f64::INFINITY);
    let z = lp.add_variable("z", f64::NEG_INFINITY, 2.0);
    lp.objective[y] = 1.0;
    lp.add_row(row(&[(y, 1.0), (x, -1.0)], Sense::Ge, -1.0));
    lp.add_row(row(&[(y, 1.0), (x, 1.0)], Sense::Ge, 1.0));
    lp.add_row(row(&[(x, 1.0), (z, 1.0)], Sense::Eq, 4.0));
    let s = solve(&lp);
    assert_eq!(s.status, LpStatus::Optimal);
    // z <= 2 forces x >= 2, so y >= 1.
    assert!((s.objective - 1.0).abs() < 1e-9, "{:?}", s);
}

#[test]
fn validate_reports_normalized_violation() {
    let mut lp = LinearProgram::new(Direction::Maximize);
    let x = lp.add_variable("x", 0.0, f64::INFINITY);
    lp.add_row(row(&[(x, 1.0)], Sense::Le, 1.0));
    assert_eq!(validate(&lp, &[0.5]), 0.0);
    assert!((validate(&lp, &[1.5]) - 0.5).abs() < 1e-15);
    lp.add_row(row(&[(x, 2.0)], Sense::Ge, 0.0));
    assert!((validate(&lp, &[-0.25]) - 0.25).abs() < 1e-15);
}

/// Solve a square system by Gaussian elimination; `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[piv][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        x[k] = (b[k] - (k + 1..n).map(|j| a[k][j] * x[j]).sum::<f64>()) / a[k][k];
    }
    Some(x)
}

/// Maximum over all vertices of the bounded polytope, by enumerating every
/// choice of `n` tight inequalities.
fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_variables();
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for r in &lp.rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &r.coefficients {
            a[j] += v;
        }
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        match r.sense {
            Sense::Le => ineq.push((a, r.rhs)),
            Sense::Ge => ineq.push((neg, -r.rhs)),
            Sense::Eq => {
                ineq.push((a, r.rhs));
                ineq.push((neg, -r.rhs));
            }
        }
    }
    for (j, v) in lp.variables.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        ineq.push((e.clone(), v.upper));
        e[j] = -1.0;
        ineq.push((e, -v.lower));
    }
    let sgn = if lp.direction == Direction::Maximize { 1.0 } else { -1.0 };
    let mut best: Option<f64> = None;
    let m = ineq.len();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a = idx.iter().map(|&i| ineq[i].0.clone()).collect();
        let b = idx.iter().map(|&i| ineq[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            let ok = ineq.iter().all(|(a, b)| a.iter().zip(&x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
            if ok {
                let obj = sgn * lp.objective_value(&x);
                best = Some(best.map_or(obj, |b: f64| b.max(obj)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best.map(|b| sgn * b);
            }
            i -= 1;
            if idx[i] < m - n + i {
                idx[i] += 1;
                for j in i + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=6);
    let dir = if rng.gen_bool(0.5) { Direction::Maximize } else { Direction::Minimize };
    let mut lp = LinearProgram::new(dir);
    for j in 0..n {
        let lo = if rng.gen_bool(0.3) { rng.gen_range(-3.0..0.0) } else { 0.0 };
        lp.add_variable(format!("x{j}"), lo, lo + rng.gen_range(1.0..6.0));
        lp.objective[j] = rng.gen_range(-2.0..2.0);
    }
    for _ in 0..m {
        let coefs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-1.0..1.0))).collect();
        let sense = match rng.gen_range(0..10) {
            0..=6 => Sense::Le,
            7..=8 => Sense::Ge,
            _ => Sense::Eq,
        };
        lp.add_row(row(&coefs, sense, rng.gen_range(-1.0..3.0)));
    }
    lp
}

#[test]
fn random_small_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut optimal = 0;
    for _ in 0..200 {
        let lp = random_lp(&mut rng);
        let s = solve(&lp);
        match vertex_oracle(&lp) {
            Some(v) => {
                assert_eq!(s.status, LpStatus::Optimal, "{lp:?}");
                assert!((s.objective - v).abs() < 1e-6, "{} vs {v}", s.objective);
                assert!(s.max_violation <= 1e-7);
                optimal += 1;
            }
            None => assert_eq!(s.status, LpStatus::Infeasible),
        }
    }
    assert!(optimal >= 20);
}

#[test]
fn duals_certify_optimality() {
    // For max c x, A x <= b, x >= 0 the returned multipliers satisfy y >= 0,
    // A^T y >= c and b y equals the primal optimum.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..30 {
        let n = rng.gen_range(2..8);
        let m = rng.gen_range(2..12);
        let mut lp = LinearProgram::new(Direction::Maximize);
        for j in 0..n {
            lp.add_variable(format!("x{j}"), 0.0, f64::INFINITY);
            lp.objective[j] = rng.gen_range(0.0..3.0);
        }
        for _ in 0..m {
            let coefs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(0.1..2.0))).collect();
            lp.add_row(row(&coefs, Sense::Le, rng.gen_range(1.0..5.0)));
        }
        let s = solve(&lp);
        assert_eq!(s.status, LpStatus::Optimal);
        let dual_obj: f64 = lp.rows.iter().zip(&s.duals).map(|(r, y)| r.rhs * y).sum();
        assert!((dual_obj - s.objective).abs() < 1e-7 * (1.0 + dual_obj.abs()));
        for (j, c) in lp.objective.iter().enumerate() {
            let aty: f64 = lp
                .rows
                .iter()
                .zip(&s.duals)
                .map(|(r, y)| r.coefficients.iter().filter(|e| e.0 == j).map(|e| e.1).sum::<f64>() * y)
                .sum();
            assert!(aty >= c - 1e-7);
        }
        assert!(s.duals.iter().all(|&y| y >= -1e-9));
    }
}

#[test]
fn solving_twice_gives_identical_results() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lp = random_lp(&mut rng);
    let a = solve(&lp);
    let b = solve(&lp);
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.x, b.x);
}

#[test]
fn iteration_limit_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut lp = LinearProgram::new(Direction::Maximize);
    for j in 0..6 {
        lp.add_variable(format!("x{j}"), 0.0, 10.0);
        lp.objective[j] = 1.0;
    }
    for _ in 0..6 {
        let coefs: Vec<(usize, f64)> = (0..6).map(|j| (j, rng.gen_range(0.1..1.0))).collect();
        lp.add_row(row(&coefs, Sense::Le, 3.0));
    }
    let opts = SolverOptions { max_iterations: 1, ..SolverOptions::default() };
    assert!(matches!(solve_lp(&lp, &opts), Err(crate::Error::IterationLimit { .. })));
}

#[test]
fn lp_text_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let mut lp = random_lp(&mut rng);
        lp.variables[0].lower = f64::NEG_INFINITY;
        let text = write_lp(&lp);
        let back = read_lp(&text).unwrap();
        assert_eq!(back.direction, lp.direction);
        assert_eq!(back.variables, lp.variables);
        assert_eq!(back.objective, lp.objective);
        assert_eq!(back.rows.len(), lp.rows.len());
        for (a, b) in back.rows.iter().zip(&lp.rows) {
            assert_eq!(a.coefficients, b.coefficients);
            assert_eq!(a.rhs, b.rhs);
            assert_eq!(a.sense, b.sense);
        }
        assert_eq!(write_lp(&back), text);
    }
}

#[test]
fn lp_text_errors_carry_line_numbers() {
    let err = read_lp("Maximize\n obj: x\nSubject To\n c: x <= abc\nEnd\n").unwrap_err();
    assert!(matches!(err, crate::Error::LpParse { line: 4, .. }), "{err:?}");
    assert!(read_lp("obj: x\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn optimal_solutions_validate(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng);
        let s = solve(&lp);
        if s.status == LpStatus::Optimal {
            prop_assert!(s.max_violation <= 1e-7);
            prop_assert!(validate(&lp, &s.x) <= 1e-7);
        }
    }
}
