//! Equality-constrained subproblems solved through one KKT factorization.

use super::ldl::{LdlFactor, LdlOptions, SymMatrix};

pub(crate) type Row = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub(crate) enum EqpOutcome {
    /// Minimizer and one multiplier per constraint row.
    Solved { x: Vec<f64>, multipliers: Vec<f64> },
    /// Direction of unbounded descent: `g·d < 0`, `H d = 0`, `C d = 0`.
    Ray(Vec<f64>),
    /// The constraint rows cannot all hold.
    Inconsistent,
}

/// Minimizes `½ xᵀ diag(h) x + gᵀ x` subject to `row_i · x = rhs_i`.
///
/// Multipliers follow `diag(h) x + g + Cᵀ λ = 0`. When the minimizer is not
/// unique the one with the smallest Euclidean norm is returned.
pub(crate) fn solve_eqp(
    h: &[f64],
    g: &[f64],
    rows: &[&Row],
    rhs: &[f64],
    options: LdlOptions,
) -> EqpOutcome {
    let n = h.len();
    // empty rows carry no multiplier; a nonzero right-hand side makes them contradictory
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut kept = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        if row.iter().any(|&(_, v)| v != 0.0) {
            kept.push(r);
        } else if rhs[r].abs() > 1e-14 * scale.max(1.0) {
            return EqpOutcome::Inconsistent;
        }
    }
    let m = kept.len();
    let mut kkt = SymMatrix::new(n + m);
    for (i, &hi) in h.iter().enumerate() {
        kkt.add(i, i, hi);
    }
    for (k, &r) in kept.iter().enumerate() {
        for &(j, v) in rows[r].iter() {
            kkt.add(n + k, j, v);
        }
    }
    let mut full_rhs: Vec<f64> = g.iter().map(|v| -v).collect();
    full_rhs.extend(kept.iter().map(|&r| rhs[r]));

    let factor = LdlFactor::factor(kkt, options);
    let solved = factor.solve(&full_rhs);
    let rhs_norm = full_rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut ray: Option<Vec<f64>> = None;
    let mut free_directions: Vec<Vec<f64>> = Vec::new();
    for &(node, _) in &solved.null_residuals {
        let mut v = factor.null_vector(node);
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if vmax == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vmax);
        let (cx, ax) = dot_with_abs(&v[..n], &full_rhs[..n]);
        let (cc, ac) = dot_with_abs(&v[n..], &full_rhs[n..]);
        let floor = 1e-14 * rhs_norm;
        if cc.abs() > 1e-9 * ac && cc.abs() > floor {
            return EqpOutcome::Inconsistent;
        }
        let x_part = &v[..n];
        let x_size = x_part.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if cx.abs() > 1e-9 * ax && cx.abs() > floor {
            if ray.is_none() {
                let sign = cx.signum();
                ray = Some(x_part.iter().map(|x| x * sign).collect());
            }
        } else if x_size > 1e-9 {
            free_directions.push(x_part.to_vec());
        }
    }
    if let Some(d) = ray {
        return EqpOutcome::Ray(d);
    }
    let mut x = solved.x[..n].to_vec();
    let mut multipliers = vec![0.0; rows.len()];
    for (k, &r) in kept.iter().enumerate() {
        multipliers[r] = solved.x[n + k];
    }
    if !free_directions.is_empty() {
        project_out(&mut x, free_directions);
    }
    EqpOutcome::Solved { x, multipliers }
}

fn dot_with_abs(a: &[f64], b: &[f64]) -> (f64, f64) {
    a.iter()
        .zip(b)
        .fold((0.0, 0.0), |(s, t), (x, y)| (s + x * y, t + (x * y).abs()))
}

/// Removes from `x` its components along the span of `directions`
/// (modified Gram–Schmidt, dependent directions skipped).
fn project_out(x: &mut [f64], directions: Vec<Vec<f64>>) {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in directions {
        let original = norm(&v);
        for q in &basis {
            let c = dot(q, &v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let nv = norm(&v);
        if nv <= 1e-10 * original {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        basis.push(v);
    }
    for q in &basis {
        let c = dot(q, x);
        x.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> LdlOptions {
        LdlOptions::default()
    }

    #[test]
    fn unconstrained_quadratic() {
        match solve_eqp(&[2.0, 4.0], &[-2.0, 4.0], &[], &[], opts()) {
            EqpOutcome::Solved { x, .. } => {
                assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] + 1.0).abs() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_objective_without_curvature_is_a_ray() {
        let row: Row = vec![(0, 1.0), (1, 1.0)];
        match solve_eqp(&[0.0, 0.0], &[1.0, 0.0], &[&row], &[1.0], opts()) {
            EqpOutcome::Ray(d) => {
                assert!(d[0] < 0.0);
                assert!((d[0] + d[1]).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contradictory_rows_are_inconsistent() {
        let r1: Row = vec![(0, 1.0)];
        let r2: Row = vec![(0, 1.0)];
        let out = solve_eqp(&[1.0], &[0.0], &[&r1, &r2], &[1.0, 2.0], opts());
        assert!(matches!(out, EqpOutcome::Inconsistent));
        let out = solve_eqp(&[1.0], &[0.0], &[&r1, &r2], &[1.0, 1.0], opts());
        assert!(matches!(out, EqpOutcome::Solved { .. }));
        let empty: Row = vec![];
        let out = solve_eqp(&[1.0], &[0.0], &[&r1, &empty], &[1.0, 1e-3], opts());
        assert!(matches!(out, EqpOutcome::Inconsistent));
        match solve_eqp(&[1.0], &[0.0], &[&empty, &r1], &[0.0, 1.0], opts()) {
            EqpOutcome::Solved { x, multipliers } => {
                assert_eq!(multipliers.len(), 2);
                assert_eq!(multipliers[0], 0.0);
                assert!((x[0] - 1.0).abs() < 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn free_variables_take_minimum_norm() {
        let row: Row = vec![(0, 1.0), (1, 1.0)];
        match solve_eqp(&[0.0, 0.0], &[0.0, 0.0], &[&row], &[2.0], opts()) {
            EqpOutcome::Solved { x, .. } => {
                assert!(
                    (x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12,
                    "{x:?}"
                );
            }
            other => panic!("{other:?}"),
        }
    }
}
