//! Independent dense oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use hfgse::qp::QuadraticProgram;
use hfgse::sparse::SparseMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn dense(m: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.n_rows(), m.n_cols());
    for (r, c, v) in m.iter() {
        d[(r, c)] = v;
    }
    d
}

/// Solves the KKT system of `min ½xᵀHx + gᵀx s.t. Cx = c` with a
/// pseudo-inverse, returning `(x, multipliers)` when the system is consistent.
pub fn pinv_kkt(
    h: &[f64],
    g: &[f64],
    c: &DMatrix<f64>,
    rhs: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = h.len();
    let m = c.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        k[(i, i)] = h[i];
    }
    for r in 0..m {
        for j in 0..n {
            k[(n + r, j)] = c[(r, j)];
            k[(j, n + r)] = c[(r, j)];
        }
    }
    let mut b = DVector::zeros(n + m);
    for i in 0..n {
        b[i] = -g[i];
    }
    for r in 0..m {
        b[n + r] = rhs[r];
    }
    let pinv = k.clone().pseudo_inverse(1e-12).ok()?;
    let sol = &pinv * &b;
    let resid = (&k * &sol - &b).amax();
    if resid > 1e-8 * (1.0 + b.amax()) {
        return None;
    }
    Some((
        sol.rows(0, n).iter().copied().collect(),
        sol.rows(n, m).iter().copied().collect(),
    ))
}

/// Same system solved by LU; `None` when singular.
pub fn lu_kkt(h: &[f64], g: &[f64], c: &DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = h.len();
    let m = c.nrows();
    let mut k = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        k[(i, i)] = h[i];
    }
    for r in 0..m {
        for j in 0..n {
            k[(n + r, j)] = c[(r, j)];
            k[(j, n + r)] = c[(r, j)];
        }
    }
    let mut b = DVector::zeros(n + m);
    for i in 0..n {
        b[i] = -g[i];
    }
    for r in 0..m {
        b[n + r] = rhs[r];
    }
    let sol = k.clone().lu().solve(&b)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if (&k * &sol - &b).amax() > 1e-9 * (1.0 + b.amax()) {
        return None;
    }
    Some(sol.rows(0, n).iter().copied().collect())
}

/// Optimal objective of a strictly convex QP found by trying every subset of
/// inequality rows as the active set and keeping the best feasible point.
pub fn brute_force_objective(qp: &QuadraticProgram) -> Option<f64> {
    let n = qp.n_vars();
    let h: Vec<f64> = qp.f_quad.iter().map(|f| 2.0 * f).collect();
    let a = dense(&qp.a_eq);
    let d = dense(&qp.d_ineq);
    let m_in = qp.e_ineq.len();
    let feas_tol = 1e-9
        * (1.0
            + qp.b_eq
                .iter()
                .chain(&qp.e_ineq)
                .fold(0.0f64, |m, v| m.max(v.abs())));
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << m_in) {
        let active: Vec<usize> = (0..m_in).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > n {
            continue;
        }
        let rows = a.nrows() + active.len();
        let mut c = DMatrix::zeros(rows, n);
        let mut rhs = Vec::with_capacity(rows);
        for r in 0..a.nrows() {
            c.set_row(r, &a.row(r));
            rhs.push(qp.b_eq[r]);
        }
        for (k, &i) in active.iter().enumerate() {
            c.set_row(a.nrows() + k, &d.row(i));
            rhs.push(qp.e_ineq[i]);
        }
        let Some(x) = lu_kkt(&h, &qp.f_lin, &c, &rhs) else {
            continue;
        };
        let xv = DVector::from_vec(x.clone());
        let dx = &d * &xv;
        if (0..m_in).any(|i| dx[i] - qp.e_ineq[i] > feas_tol) {
            continue;
        }
        let obj = qp.objective(&x);
        if best.is_none_or(|b| obj < b) {
            best = Some(obj);
        }
    }
    best
}

/// Random strictly convex program with a feasible point inside a box.
/// `m_in` inequality rows: box bounds first, then dense random rows.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, m_eq: usize, m_in: usize) -> QuadraticProgram {
    let f_quad: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
    let f_lin: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let x_feas: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut eq = Vec::new();
    let mut b = Vec::new();
    for r in 0..m_eq {
        let mut acc = 0.0;
        for j in 0..n {
            if rng.gen_bool(0.5) {
                let v: f64 = rng.gen_range(-2.0..2.0);
                eq.push((r, j, v));
                acc += v * x_feas[j];
            }
        }
        b.push(acc);
    }
    let mut ineq = Vec::new();
    let mut e = Vec::new();
    for r in 0..m_in {
        if r < n && rng.gen_bool(0.7) {
            // a bound on one variable, either side
            let j = rng.gen_range(0..n);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            ineq.push((r, j, sign));
            e.push(sign * x_feas[j] + rng.gen_range(0.0..1.0));
        } else {
            let mut acc = 0.0;
            for j in 0..n {
                if rng.gen_bool(0.4) {
                    let v: f64 = rng.gen_range(-2.0..2.0);
                    ineq.push((r, j, v));
                    acc += v * x_feas[j];
                }
            }
            e.push(acc + rng.gen_range(0.0..1.0));
        }
    }
    let a_eq = SparseMatrix::from_triplets_summed(m_eq, n, eq).unwrap();
    let d_ineq = SparseMatrix::from_triplets_summed(m_in, n, ineq).unwrap();
    QuadraticProgram::new(f_quad, f_lin, a_eq, b, d_ineq, e).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}
