//! Sparse convex quadratic programs with a diagonal Hessian.
//!
//! The problem is
//!
//! ```text
//! minimize    xᵀ F x + fᵀ x          (F diagonal, F ≥ 0)
//! subject to  A x = b
//!             D x ≤ e
//! ```
//!
//! Multipliers use the Lagrangian `L = Z + λᵀ(Ax − b) + μᵀ(Dx − e)`, so at an
//! optimum `2Fx + f + Aᵀλ + Dᵀμ = 0` with `μ ≥ 0`.

mod active_set;
mod eqp;
pub mod ldl;

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::{read_triplets, write_triplets, SparseError, SparseMatrix};
use active_set::{Exit, Problem, Settings};
use eqp::{solve_eqp, EqpOutcome, Row};
pub use ldl::LdlOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadratic coefficient {index} is {value}; it must be finite and nonnegative")]
    QuadraticCoefficient { index: usize, value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("the equality solver does not accept inequality rows ({0} given)")]
    HasInequalities(usize),
    #[error("invalid solver option: {0}")]
    Options(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub f_quad: Vec<f64>,
    pub f_lin: Vec<f64>,
    pub a_eq: SparseMatrix,
    pub b_eq: Vec<f64>,
    pub d_ineq: SparseMatrix,
    pub e_ineq: Vec<f64>,
}

impl QuadraticProgram {
    pub fn new(
        f_quad: Vec<f64>,
        f_lin: Vec<f64>,
        a_eq: SparseMatrix,
        b_eq: Vec<f64>,
        d_ineq: SparseMatrix,
        e_ineq: Vec<f64>,
    ) -> Result<Self, QpError> {
        let qp = QuadraticProgram {
            f_quad,
            f_lin,
            a_eq,
            b_eq,
            d_ineq,
            e_ineq,
        };
        qp.validate()?;
        Ok(qp)
    }

    /// A program over `n` variables with no rows.
    pub fn unconstrained(f_quad: Vec<f64>, f_lin: Vec<f64>) -> Result<Self, QpError> {
        let n = f_quad.len();
        Self::new(
            f_quad,
            f_lin,
            SparseMatrix::zeros(0, n),
            vec![],
            SparseMatrix::zeros(0, n),
            vec![],
        )
    }

    pub fn n_vars(&self) -> usize {
        self.f_quad.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.f_quad.len();
        if self.f_lin.len() != n {
            return Err(QpError::Dimension(format!(
                "f_lin has length {}, expected {n}",
                self.f_lin.len()
            )));
        }
        if self.a_eq.n_cols() != n || self.a_eq.n_rows() != self.b_eq.len() {
            return Err(QpError::Dimension(format!(
                "equality system is {:?} with {} right-hand sides for {n} variables",
                self.a_eq.shape(),
                self.b_eq.len()
            )));
        }
        if self.d_ineq.n_cols() != n || self.d_ineq.n_rows() != self.e_ineq.len() {
            return Err(QpError::Dimension(format!(
                "inequality system is {:?} with {} right-hand sides for {n} variables",
                self.d_ineq.shape(),
                self.e_ineq.len()
            )));
        }
        for (index, &value) in self.f_quad.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(QpError::QuadraticCoefficient { index, value });
            }
        }
        if self.f_lin.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("f_lin"));
        }
        if self.b_eq.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("b_eq"));
        }
        if self.e_ineq.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("e_ineq"));
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.f_quad)
            .zip(&self.f_lin)
            .map(|((x, q), l)| q * x * x + l * x)
            .sum()
    }

    /// Writes the program as six triplet blocks (`F`, `f`, `A`, `b`, `D`, `e`),
    /// each preceded by a `# name` line. Vectors are written as one-column matrices.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let n = self.n_vars();
        let diag = SparseMatrix::from_triplets(
            n,
            n,
            self.f_quad.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
        .map_err(io::Error::other)?;
        let blocks: [(&str, SparseMatrix); 6] = [
            ("F", diag),
            ("f", column(&self.f_lin)),
            ("A", self.a_eq.clone()),
            ("b", column(&self.b_eq)),
            ("D", self.d_ineq.clone()),
            ("e", column(&self.e_ineq)),
        ];
        for (name, block) in blocks {
            writeln!(out, "# {name}")?;
            write_triplets(out, &block)?;
        }
        Ok(())
    }

    /// Reads a dump written by [`write_dump`](Self::write_dump).
    pub fn read_dump<R: BufRead>(input: &mut R) -> Result<Self, QpError> {
        let f = read_triplets(input)?;
        let f_lin = dense_column(&read_triplets(input)?);
        let a_eq = read_triplets(input)?;
        let b_eq = dense_column(&read_triplets(input)?);
        let d_ineq = read_triplets(input)?;
        let e_ineq = dense_column(&read_triplets(input)?);
        let mut f_quad = vec![0.0; f.n_rows()];
        for (r, c, v) in f.iter() {
            if r != c {
                return Err(QpError::Dimension(format!(
                    "off-diagonal quadratic entry ({r}, {c})"
                )));
            }
            f_quad[r] = v;
        }
        Self::new(f_quad, f_lin, a_eq, b_eq, d_ineq, e_ineq)
    }
}

fn column(v: &[f64]) -> SparseMatrix {
    SparseMatrix::from_triplets(v.len(), 1, v.iter().enumerate().map(|(i, &x)| (i, 0, x)))
        .expect("finite vector entries")
}

fn dense_column(m: &SparseMatrix) -> Vec<f64> {
    let mut v = vec![0.0; m.n_rows()];
    for (r, _, x) in m.iter() {
        v[r] = x;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    /// The final iterate failed the residual check.
    NumericalFailure,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::MaxIterations => "max_iterations",
            Status::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub duals_eq: Vec<f64>,
    pub duals_ineq: Vec<f64>,
    pub status: Status,
    pub residuals: Residuals,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Iteration cap; `None` picks a bound from the problem size.
    pub max_iterations: Option<usize>,
    pub ldl: LdlOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_abs: 1e-8,
            tol_rel: 1e-8,
            max_iterations: None,
            ldl: LdlOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), QpError> {
        if !(self.tol_abs.is_finite() && self.tol_abs > 0.0) {
            return Err(QpError::Options(format!(
                "tol_abs must be positive, got {}",
                self.tol_abs
            )));
        }
        if !(self.tol_rel.is_finite() && self.tol_rel >= 0.0) {
            return Err(QpError::Options(format!(
                "tol_rel must be nonnegative, got {}",
                self.tol_rel
            )));
        }
        let u = self.ldl.pivot_threshold;
        if !(u > 0.0 && u <= 0.5) {
            return Err(QpError::Options(format!(
                "pivot threshold must lie in (0, 0.5], got {u}"
            )));
        }
        Ok(())
    }
}

/// Recomputes primal feasibility, stationarity and complementarity (all
/// ∞-norms) for a candidate point and multipliers.
pub fn kkt_residuals(
    qp: &QuadraticProgram,
    x: &[f64],
    duals_eq: &[f64],
    duals_ineq: &[f64],
) -> Result<Residuals, QpError> {
    let n = qp.n_vars();
    if x.len() != n || duals_eq.len() != qp.b_eq.len() || duals_ineq.len() != qp.e_ineq.len() {
        return Err(QpError::Dimension("solution does not match program".into()));
    }
    let ax = qp.a_eq.mul_vec(x)?;
    let dx = qp.d_ineq.mul_vec(x)?;
    let mut primal = 0.0f64;
    for (v, b) in ax.iter().zip(&qp.b_eq) {
        primal = primal.max((v - b).abs());
    }
    for (v, e) in dx.iter().zip(&qp.e_ineq) {
        primal = primal.max(v - e);
    }
    let at = qp.a_eq.tr_mul_vec(duals_eq)?;
    let dt = qp.d_ineq.tr_mul_vec(duals_ineq)?;
    let mut stationarity = 0.0f64;
    for i in 0..n {
        let r = 2.0 * qp.f_quad[i] * x[i] + qp.f_lin[i] + at[i] + dt[i];
        stationarity = stationarity.max(r.abs());
    }
    let mut complementarity = 0.0f64;
    for ((mu, v), e) in duals_ineq.iter().zip(&dx).zip(&qp.e_ineq) {
        complementarity = complementarity.max((mu * (v - e)).abs());
        if -mu > complementarity {
            complementarity = -mu;
        }
    }
    Ok(Residuals {
        primal,
        stationarity,
        complementarity,
    })
}

/// Magnitudes the residuals are compared against (relative part of the tolerance).
fn residual_scales(qp: &QuadraticProgram, sol: &Solution) -> Residuals {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let abs_row_products = |m: &SparseMatrix, x: &[f64]| {
        let mut acc = vec![0.0f64; m.n_rows()];
        for (r, c, v) in m.iter() {
            acc[r] += (v * x[c]).abs();
        }
        inf(&acc)
    };
    let abs_col_products = |m: &SparseMatrix, y: &[f64]| {
        let mut acc = vec![0.0f64; m.n_cols()];
        for (r, c, v) in m.iter() {
            acc[c] += (v * y[r]).abs();
        }
        inf(&acc)
    };
    let primal = inf(&qp.b_eq)
        .max(inf(&qp.e_ineq))
        .max(abs_row_products(&qp.a_eq, &sol.x))
        .max(abs_row_products(&qp.d_ineq, &sol.x));
    let curvature: Vec<f64> = qp
        .f_quad
        .iter()
        .zip(&sol.x)
        .map(|(f, x)| 2.0 * f * x)
        .collect();
    let stationarity = inf(&qp.f_lin)
        .max(inf(&curvature))
        .max(abs_col_products(&qp.a_eq, &sol.duals_eq))
        .max(abs_col_products(&qp.d_ineq, &sol.duals_ineq));
    Residuals {
        primal,
        stationarity,
        complementarity: primal * inf(&sol.duals_ineq),
    }
}

fn within_tolerance(qp: &QuadraticProgram, sol: &Solution, options: &SolverOptions) -> bool {
    let scales = residual_scales(qp, sol);
    let r = sol.residuals;
    let ok = |res: f64, scale: f64| res <= options.tol_abs + options.tol_rel * scale;
    ok(r.primal, scales.primal)
        && ok(r.stationarity, scales.stationarity)
        && ok(r.complementarity, scales.complementarity)
}

/// Solves a program without inequality rows through one KKT factorization.
pub fn solve_eq_qp(qp: &QuadraticProgram, options: &SolverOptions) -> Result<Solution, QpError> {
    qp.validate()?;
    options.validate()?;
    if !qp.e_ineq.is_empty() {
        return Err(QpError::HasInequalities(qp.e_ineq.len()));
    }
    solve_qp(qp, options)
}

/// Solves the program with a primal active-set method.
pub fn solve_qp(qp: &QuadraticProgram, options: &SolverOptions) -> Result<Solution, QpError> {
    qp.validate()?;
    options.validate()?;
    let n = qp.n_vars();
    let m_eq = qp.b_eq.len();
    let m_in = qp.e_ineq.len();

    // objective scaling keeps the KKT blocks comparable; duals are mapped back
    let hmax = qp.f_quad.iter().fold(0.0f64, |m, v| m.max(2.0 * v));
    let gmax = qp.f_lin.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sigma = if hmax.max(gmax) > 0.0 {
        1.0 / hmax.max(gmax)
    } else {
        1.0
    };

    let problem = Problem {
        h: qp.f_quad.iter().map(|f| 2.0 * f * sigma).collect(),
        g: qp.f_lin.iter().map(|f| f * sigma).collect(),
        eq_rows: qp.a_eq.rows(),
        b: qp.b_eq.clone(),
        in_rows: qp.d_ineq.rows(),
        e: qp.e_ineq.clone(),
    };
    let settings = Settings {
        ldl: options.ldl,
        max_iterations: options.max_iterations.unwrap_or(100 + 10 * (n + m_in)),
    };
    let feas_scale = 1.0
        + qp.b_eq
            .iter()
            .chain(&qp.e_ineq)
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let feas_tol = 0.1 * (options.tol_abs + options.tol_rel * feas_scale);

    let eq_refs: Vec<&Row> = problem.eq_rows.iter().collect();
    let unrestricted = solve_eqp(&problem.h, &problem.g, &eq_refs, &problem.b, options.ldl);

    let finish =
        |x: Vec<f64>, lambda: Vec<f64>, mu: Vec<f64>, status: Status, iterations: usize| {
            let duals_eq: Vec<f64> = lambda.iter().map(|v| v / sigma).collect();
            let duals_ineq: Vec<f64> = mu.iter().map(|v| v / sigma).collect();
            let residuals = kkt_residuals(qp, &x, &duals_eq, &duals_ineq)?;
            let mut sol = Solution {
                objective: qp.objective(&x),
                x,
                duals_eq,
                duals_ineq,
                status,
                residuals,
                iterations,
            };
            if sol.status == Status::Optimal && !within_tolerance(qp, &sol, options) {
                log::warn!(
                    "final residuals {:?} exceed tolerance; reporting numerical failure",
                    sol.residuals
                );
                sol.status = Status::NumericalFailure;
            }
            Ok(sol)
        };

    let x0 = match unrestricted {
        EqpOutcome::Inconsistent => {
            return finish(
                vec![0.0; n],
                vec![0.0; m_eq],
                vec![0.0; m_in],
                Status::Infeasible,
                1,
            );
        }
        EqpOutcome::Solved { x, multipliers } => {
            if problem.max_violation(&x).0 <= feas_tol {
                return finish(x, multipliers, vec![0.0; m_in], Status::Optimal, 1);
            }
            x
        }
        EqpOutcome::Ray(_) if m_in == 0 => {
            let x = feasible_point(&problem, options.ldl);
            return finish(x, vec![0.0; m_eq], vec![0.0; m_in], Status::Unbounded, 1);
        }
        EqpOutcome::Ray(_) => feasible_point(&problem, options.ldl),
    };

    let mut iterations = 1;
    let (violation, worst) = problem.max_violation(&x0);
    let start = if violation <= feas_tol {
        x0
    } else {
        let phase_one = phase_one_problem(&problem);
        let mut y = x0.clone();
        y.push(violation);
        let worst = worst.expect("violated row");
        let out = active_set::run(&phase_one, y, vec![worst], &settings);
        iterations += out.iterations;
        match out.exit {
            Exit::Optimal => {}
            Exit::MaxIterations => {
                return finish(
                    out.x[..n].to_vec(),
                    vec![0.0; m_eq],
                    vec![0.0; m_in],
                    Status::MaxIterations,
                    iterations,
                );
            }
            Exit::Unbounded | Exit::NumericalFailure => {
                return finish(
                    out.x[..n].to_vec(),
                    vec![0.0; m_eq],
                    vec![0.0; m_in],
                    Status::NumericalFailure,
                    iterations,
                );
            }
        }
        let x1 = out.x[..n].to_vec();
        if problem.max_violation(&x1).0 > feas_tol || out.x[n] > feas_tol {
            log::debug!("phase one ended with violation {}", out.x[n]);
            return finish(
                x1,
                vec![0.0; m_eq],
                vec![0.0; m_in],
                Status::Infeasible,
                iterations,
            );
        }
        x1
    };

    let settings = Settings {
        ldl: settings.ldl,
        max_iterations: settings.max_iterations.saturating_sub(iterations).max(1),
    };
    let out = active_set::run(&problem, start, Vec::new(), &settings);
    iterations += out.iterations;
    let status = match out.exit {
        Exit::Optimal => Status::Optimal,
        Exit::Unbounded => Status::Unbounded,
        Exit::MaxIterations => Status::MaxIterations,
        Exit::NumericalFailure => Status::NumericalFailure,
    };
    finish(out.x, out.lambda, out.mu, status, iterations)
}

/// Minimum-norm point of the equality system (zero when it has no rows).
fn feasible_point(problem: &Problem, ldl: LdlOptions) -> Vec<f64> {
    let n = problem.n();
    let rows: Vec<&Row> = problem.eq_rows.iter().collect();
    match solve_eqp(&vec![1.0; n], &vec![0.0; n], &rows, &problem.b, ldl) {
        EqpOutcome::Solved { x, .. } => x,
        _ => vec![0.0; n],
    }
}

/// Appends a shared slack `t`: minimize t² with every inequality relaxed by t.
fn phase_one_problem(problem: &Problem) -> Problem {
    let n = problem.n();
    let mut h = vec![0.0; n];
    h.push(2.0);
    let mut in_rows: Vec<Row> = problem
        .in_rows
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.push((n, -1.0));
            r
        })
        .collect();
    in_rows.push(vec![(n, -1.0)]);
    let mut e = problem.e.clone();
    e.push(0.0);
    Problem {
        h,
        g: vec![0.0; n + 1],
        eq_rows: problem.eq_rows.clone(),
        b: problem.b.clone(),
        in_rows,
        e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_qp(f_quad: f64, f_lin: f64, eq: Option<f64>, ineq: Option<f64>) -> QuadraticProgram {
        let (a, b) = match eq {
            Some(v) => (SparseMatrix::identity(1), vec![v]),
            None => (SparseMatrix::zeros(0, 1), vec![]),
        };
        let (d, e) = match ineq {
            Some(v) => (SparseMatrix::identity(1), vec![v]),
            None => (SparseMatrix::zeros(0, 1), vec![]),
        };
        QuadraticProgram::new(vec![f_quad], vec![f_lin], a, b, d, e).unwrap()
    }

    #[test]
    fn equality_dual_sign() {
        // min x² s.t. x = 1
        let qp = scalar_qp(1.0, 0.0, Some(1.0), None);
        let sol = solve_eq_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.duals_eq[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn active_and_inactive_bounds() {
        // (x − 2)² = x² − 4x + 4
        let qp = scalar_qp(1.0, -4.0, None, Some(1.0));
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.duals_ineq[0] - 2.0).abs() < 1e-12);

        let qp = scalar_qp(1.0, -4.0, None, Some(3.0));
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12);
        assert_eq!(sol.duals_ineq[0], 0.0);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        // x = 2 and x ≤ 1
        let qp = scalar_qp(1.0, 0.0, Some(2.0), Some(1.0));
        assert_eq!(
            solve_qp(&qp, &SolverOptions::default()).unwrap().status,
            Status::Infeasible
        );
        // min −x with no curvature, x ≥ ... nothing bounds it from above
        let qp = scalar_qp(0.0, -1.0, None, None);
        assert_eq!(
            solve_qp(&qp, &SolverOptions::default()).unwrap().status,
            Status::Unbounded
        );
        // min −x s.t. x ≤ 5 is bounded by the inequality
        let qp = scalar_qp(0.0, -1.0, None, Some(5.0));
        let sol = solve_qp(&qp, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 5.0).abs() < 1e-12);
        assert!((sol.duals_ineq[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_inequalities_in_equality_solver() {
        let qp = scalar_qp(1.0, 0.0, None, Some(1.0));
        assert_eq!(
            solve_eq_qp(&qp, &SolverOptions::default()),
            Err(QpError::HasInequalities(1))
        );
    }

    #[test]
    fn residuals_of_perturbed_point() {
        let qp = scalar_qp(1.0, 0.0, Some(1.0), None);
        let exact = kkt_residuals(&qp, &[1.0], &[-2.0], &[]).unwrap();
        assert!(
            exact.primal < 1e-12 && exact.stationarity < 1e-12 && exact.complementarity < 1e-12
        );
        let off = kkt_residuals(&qp, &[1.1], &[-2.0], &[]).unwrap();
        assert!((off.primal - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dump_round_trips() {
        let d = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, -1.0), (1, 1, 0.5)])
            .unwrap();
        let qp = QuadraticProgram::new(
            vec![1.0, 0.0],
            vec![0.25, -3.0],
            SparseMatrix::from_triplets(1, 2, vec![(0, 1, 2.0)]).unwrap(),
            vec![1.0 / 3.0],
            d,
            vec![4.0, 0.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        qp.write_dump(&mut buf).unwrap();
        let back = QuadraticProgram::read_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(back, qp);
    }

    #[test]
    fn rejects_negative_curvature() {
        let err = QuadraticProgram::unconstrained(vec![-1.0], vec![0.0]).unwrap_err();
        assert!(matches!(
            err,
            QpError::QuadraticCoefficient { index: 0, .. }
        ));
    }
}
