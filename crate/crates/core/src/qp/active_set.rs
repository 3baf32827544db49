//! Primal active-set iteration over inequality rows.

use super::eqp::{solve_eqp, EqpOutcome, Row};
use super::ldl::LdlOptions;

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    pub eq_rows: Vec<Row>,
    pub b: Vec<f64>,
    pub in_rows: Vec<Row>,
    pub e: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Exit {
    Optimal,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub exit: Exit,
    pub iterations: usize,
}

/// Consecutive zero-length steps after which removal switches to lowest index.
const BLAND_AFTER: usize = 3;

impl Problem {
    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn row_dot(row: &Row, x: &[f64]) -> f64 {
        row.iter().map(|&(j, v)| v * x[j]).sum()
    }

    /// Largest violation of the inequality rows at `x` (zero when feasible),
    /// with the lowest index among rows attaining it.
    pub fn max_violation(&self, x: &[f64]) -> (f64, Option<usize>) {
        let mut best = (0.0, None);
        for (i, row) in self.in_rows.iter().enumerate() {
            let v = Self::row_dot(row, x) - self.e[i];
            if v > best.0 {
                best = (v, Some(i));
            }
        }
        best
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.h
            .iter()
            .zip(x)
            .zip(&self.g)
            .map(|((h, x), g)| h * x + g)
            .collect()
    }
}

pub(crate) struct Settings {
    pub ldl: LdlOptions,
    pub max_iterations: usize,
}

/// Runs the iteration from a point feasible for all rows of `problem`,
/// starting with `working` as the working set.
pub(crate) fn run(
    problem: &Problem,
    mut x: Vec<f64>,
    mut working: Vec<usize>,
    settings: &Settings,
) -> Outcome {
    let m_eq = problem.eq_rows.len();
    let m_in = problem.in_rows.len();
    let mut in_working = vec![false; m_in];
    for &i in &working {
        in_working[i] = true;
    }
    let mut degenerate = 0usize;
    let mut iterations = 0usize;
    let finish =
        |x: Vec<f64>, lambda: Vec<f64>, mu: Vec<f64>, exit: Exit, iterations: usize| Outcome {
            x,
            lambda,
            mu,
            exit,
            iterations,
        };

    loop {
        if iterations >= settings.max_iterations {
            return finish(
                x,
                vec![0.0; m_eq],
                vec![0.0; m_in],
                Exit::MaxIterations,
                iterations,
            );
        }
        iterations += 1;
        working.sort_unstable();
        let grad = problem.gradient(&x);
        let mut rows: Vec<&Row> = problem.eq_rows.iter().collect();
        let mut rhs: Vec<f64> = problem
            .eq_rows
            .iter()
            .zip(&problem.b)
            .map(|(r, b)| b - Problem::row_dot(r, &x))
            .collect();
        for &i in &working {
            rows.push(&problem.in_rows[i]);
            rhs.push(problem.e[i] - Problem::row_dot(&problem.in_rows[i], &x));
        }
        match solve_eqp(&problem.h, &grad, &rows, &rhs, settings.ldl) {
            EqpOutcome::Inconsistent => {
                return finish(
                    x,
                    vec![0.0; m_eq],
                    vec![0.0; m_in],
                    Exit::NumericalFailure,
                    iterations,
                );
            }
            EqpOutcome::Ray(d) => match ratio_test(problem, &x, &d, &in_working, f64::INFINITY) {
                None => {
                    return finish(
                        x,
                        vec![0.0; m_eq],
                        vec![0.0; m_in],
                        Exit::Unbounded,
                        iterations,
                    );
                }
                Some((alpha, blocking)) => {
                    axpy(&mut x, alpha, &d);
                    in_working[blocking] = true;
                    working.push(blocking);
                    degenerate = if alpha == 0.0 { degenerate + 1 } else { 0 };
                }
            },
            EqpOutcome::Solved { x: p, multipliers } => {
                if let Some((alpha, blocking)) = ratio_test(problem, &x, &p, &in_working, 1.0) {
                    axpy(&mut x, alpha, &p);
                    in_working[blocking] = true;
                    working.push(blocking);
                    degenerate = if alpha == 0.0 { degenerate + 1 } else { 0 };
                    continue;
                }
                axpy(&mut x, 1.0, &p);
                let lambda = multipliers[..m_eq].to_vec();
                let mu_w = &multipliers[m_eq..];
                let scale = 1.0
                    + grad.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                    + multipliers.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let dual_tol = 1e-10 * scale;
                let negative: Vec<(usize, f64)> = working
                    .iter()
                    .zip(mu_w)
                    .filter(|(_, &mu)| mu < -dual_tol)
                    .map(|(&i, &mu)| (i, mu))
                    .collect();
                if negative.is_empty() {
                    let mut mu = vec![0.0; m_in];
                    for (&i, &v) in working.iter().zip(mu_w) {
                        mu[i] = v.max(0.0);
                    }
                    return finish(x, lambda, mu, Exit::Optimal, iterations);
                }
                let leave = if degenerate >= BLAND_AFTER {
                    negative[0].0
                } else {
                    // most negative; ties keep the lowest index
                    let mut best = negative[0];
                    for &cand in &negative[1..] {
                        if cand.1 < best.1 {
                            best = cand;
                        }
                    }
                    best.0
                };
                in_working[leave] = false;
                working.retain(|&i| i != leave);
            }
        }
    }
}

/// Largest step in `[0, cap]` along `d` keeping inactive rows feasible.
/// Returns the step and the blocking row, or `None` when nothing blocks
/// before `cap`.
fn ratio_test(
    problem: &Problem,
    x: &[f64],
    d: &[f64],
    in_working: &[bool],
    cap: f64,
) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, row) in problem.in_rows.iter().enumerate() {
        if in_working[i] {
            continue;
        }
        let mut slope = 0.0;
        let mut size = 0.0f64;
        for &(j, v) in row {
            slope += v * d[j];
            size = size.max((v * d[j]).abs());
        }
        if slope <= 1e-13 * size || slope <= 0.0 {
            continue;
        }
        let slack = (problem.e[i] - Problem::row_dot(row, x)).max(0.0);
        let alpha = slack / slope;
        if alpha < cap && best.is_none_or(|(a, _)| alpha < a) {
            best = Some((alpha, i));
        }
    }
    best
}

fn axpy(x: &mut [f64], alpha: f64, d: &[f64]) {
    x.iter_mut().zip(d).for_each(|(a, b)| *a += alpha * b);
}
