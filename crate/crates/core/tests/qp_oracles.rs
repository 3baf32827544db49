mod common;

use std::time::Instant;

use common::{brute_force_objective, dense, pinv_kkt, random_qp, rel_diff};
use hfgse::qp::{kkt_residuals, solve_eq_qp, solve_qp, QuadraticProgram, SolverOptions, Status};
use hfgse::sparse::SparseMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn equality_qp_matches_dense_pseudo_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..25 {
        let qp = random_qp(&mut rng, 20, 8, 0);
        let sol = solve_eq_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let h: Vec<f64> = qp.f_quad.iter().map(|f| 2.0 * f).collect();
        let (x, lambda) = pinv_kkt(&h, &qp.f_lin, &dense(&qp.a_eq), &qp.b_eq).unwrap();
        for (a, b) in sol.x.iter().zip(&x) {
            assert!(rel_diff(*a, *b) < 1e-8, "{a} vs {b}");
        }
        for (a, b) in sol.duals_eq.iter().zip(&lambda) {
            assert!(rel_diff(*a, *b) < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn symmetric_split_under_one_equality() {
    // (x−2)² + (y−2)² s.t. x + y = 2
    let qp = QuadraticProgram::new(
        vec![1.0, 1.0],
        vec![-4.0, -4.0],
        SparseMatrix::from_triplets(1, 2, vec![(0, 0, 1.0), (0, 1, 1.0)]).unwrap(),
        vec![2.0],
        SparseMatrix::zeros(0, 2),
        vec![],
    )
    .unwrap();
    let sol = solve_eq_qp(&qp, &SolverOptions::default()).unwrap();
    assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
}

#[test]
fn redundant_consistent_rows_are_dropped() {
    // the same row three times, once scaled
    let a = SparseMatrix::from_triplets(
        3,
        2,
        vec![
            (0, 0, 1.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 1.0),
            (2, 0, 2.0),
            (2, 1, 2.0),
        ],
    )
    .unwrap();
    let qp = QuadraticProgram::new(
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        a.clone(),
        vec![2.0, 2.0, 4.0],
        SparseMatrix::zeros(0, 2),
        vec![],
    )
    .unwrap();
    let sol = solve_eq_qp(&qp, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-12);

    let qp = QuadraticProgram::new(
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        a,
        vec![2.0, 2.0, 5.0],
        SparseMatrix::zeros(0, 2),
        vec![],
    )
    .unwrap();
    assert_eq!(
        solve_eq_qp(&qp, &SolverOptions::default()).unwrap().status,
        Status::Infeasible
    );
}

#[test]
fn semidefinite_objective_with_ray_is_unbounded() {
    // min −x s.t. y ≤ 0 leaves x free to grow
    let qp = QuadraticProgram::new(
        vec![0.0, 0.0],
        vec![-1.0, 0.0],
        SparseMatrix::zeros(0, 2),
        vec![],
        SparseMatrix::from_triplets(1, 2, vec![(0, 1, 1.0)]).unwrap(),
        vec![0.0],
    )
    .unwrap();
    assert_eq!(
        solve_qp(&qp, &SolverOptions::default()).unwrap().status,
        Status::Unbounded
    );
}

#[test]
fn linear_program_reaches_vertex() {
    // min −x − y s.t. x + 2y ≤ 4, 3x + y ≤ 6, x ≥ 0, y ≥ 0 → (1.6, 1.2)
    let d = SparseMatrix::from_triplets(
        4,
        2,
        vec![
            (0, 0, 1.0),
            (0, 1, 2.0),
            (1, 0, 3.0),
            (1, 1, 1.0),
            (2, 0, -1.0),
            (3, 1, -1.0),
        ],
    )
    .unwrap();
    let qp = QuadraticProgram::new(
        vec![0.0, 0.0],
        vec![-1.0, -1.0],
        SparseMatrix::zeros(0, 2),
        vec![],
        d,
        vec![4.0, 6.0, 0.0, 0.0],
    )
    .unwrap();
    let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!(
        (sol.x[0] - 1.6).abs() < 1e-10 && (sol.x[1] - 1.2).abs() < 1e-10,
        "{:?}",
        sol.x
    );
}

#[test]
fn random_programs_match_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    for case in 0..60 {
        let n = rng.gen_range(2..=12);
        let m_eq = rng.gen_range(0..=n / 3);
        let m_in = rng.gen_range(1..=8);
        let qp = random_qp(&mut rng, n, m_eq, m_in);
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal, "case {case}");
        let oracle = brute_force_objective(&qp).unwrap();
        assert!(
            rel_diff(sol.objective, oracle) < 1e-7,
            "case {case}: {} vs {oracle}",
            sol.objective
        );
    }
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn row_permutation_does_not_move_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let qp = random_qp(&mut rng, 10, 3, 8);
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        let perm_rows = |m: &SparseMatrix, v: &[f64]| {
            let k = m.n_rows();
            let triplets: Vec<_> = m.iter().map(|(r, c, x)| (k - 1 - r, c, x)).collect();
            let rev: Vec<f64> = v.iter().rev().copied().collect();
            (
                SparseMatrix::from_triplets(k, m.n_cols(), triplets).unwrap(),
                rev,
            )
        };
        let (a, b) = perm_rows(&qp.a_eq, &qp.b_eq);
        let (d, e) = perm_rows(&qp.d_ineq, &qp.e_ineq);
        let permuted =
            QuadraticProgram::new(qp.f_quad.clone(), qp.f_lin.clone(), a, b, d, e).unwrap();
        let other = solve_qp(&permuted, &SolverOptions::default()).unwrap();
        for (x, y) in sol.x.iter().zip(&other.x) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn identical_input_gives_identical_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let qp = random_qp(&mut rng, 12, 3, 10);
    let a = solve_qp(&qp, &SolverOptions::default()).unwrap();
    let b = solve_qp(&qp.clone(), &SolverOptions::default()).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.x), bits(&b.x));
    assert_eq!(bits(&a.duals_eq), bits(&b.duals_eq));
    assert_eq!(bits(&a.duals_ineq), bits(&b.duals_ineq));
}

#[test]
fn iteration_cap_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let qp = random_qp(&mut rng, 10, 0, 10);
    let opts = SolverOptions {
        max_iterations: Some(1),
        ..SolverOptions::default()
    };
    let sol = solve_qp(&qp, &opts).unwrap();
    assert!(matches!(
        sol.status,
        Status::MaxIterations | Status::Optimal
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_output_meets_residual_contract(seed in any::<u64>(), n in 2usize..10, m_eq in 0usize..3, m_in in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = random_qp(&mut rng, n, m_eq.min(n - 1), m_in);
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let r = kkt_residuals(&qp, &sol.x, &sol.duals_eq, &sol.duals_ineq).unwrap();
        let bnorm = qp.b_eq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-8 * (1.0 + bnorm);
        prop_assert!(r.primal <= tol && r.stationarity <= tol && r.complementarity <= tol, "{:?}", r);
        // at a KKT point the Lagrangian equals the objective
        let ax = qp.a_eq.mul_vec(&sol.x).unwrap();
        let dx = qp.d_ineq.mul_vec(&sol.x).unwrap();
        let mut lagrangian = sol.objective;
        for i in 0..ax.len() { lagrangian += sol.duals_eq[i] * (ax[i] - qp.b_eq[i]); }
        for i in 0..dx.len() { lagrangian += sol.duals_ineq[i] * (dx[i] - qp.e_ineq[i]); }
        prop_assert!((lagrangian - sol.objective).abs() <= 1e-8 * (1.0 + sol.objective.abs()));
    }
}
