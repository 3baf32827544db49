//! Weighted least squares estimation of steady flows over an architecture.
//!
//! Decision vector `[U[1]; …; U[K+1]; E]`, with one error variable per
//! (series, bucket). The program is
//!
//! ```text
//! min  Σ_{k=1..K} α ‖U[k]‖² + Σ w_m E_m²
//! s.t. ΔT (M+ − M−) U[k] = 0          k = 1..K
//!      D_U U − E = C
//!      U[K+1] = 0
//!      0 ≤ U[k],  U_ψ[k] ≤ cap_ψ
//! ```

mod aggregation;
mod report;
mod weights;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregation::{
    build_capability_aggregation, build_measurement_matrix, build_temporal_aggregation,
    downsample_fine_data, AggregationMatrices, FineSeries,
};
pub use report::{error_report, ErrorGroupRow, Grouping};
pub use weights::{compute_weights, AlphaRule, WeightingScheme};

use crate::hfg::{incidence_matrices, HfgError, SystemArchitecture};
use crate::provenance::{Constraint, ProgramBuilder, TaggedProgram};
use crate::qp::{solve_qp, QpError, Residuals, SolverOptions, Status};
use crate::sparse::{SparseError, SparseMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WlseError {
    #[error("measurement `{id}`: {message}")]
    Measurement { id: String, message: String },
    #[error("invalid bucket: {0}")]
    Bucket(String),
    #[error("weights need at least one measurement")]
    NoMeasurements,
    #[error("flow penalty must be finite and nonnegative, got {0}")]
    Alpha(f64),
    #[error("capacity for `{capability}`: {message}")]
    Capacity { capability: String, message: String },
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("solver stopped with status {status} after {iterations} iterations (residuals: primal {:.3e}, stationarity {:.3e}, complementarity {:.3e})", .residuals.primal, .residuals.stationarity, .residuals.complementarity)]
    Solver {
        status: Status,
        iterations: usize,
        residuals: Residuals,
    },
    #[error("conservation residual {0:.3e} exceeds 1e-6")]
    Conservation(f64),
    #[error(transparent)]
    Architecture(#[from] HfgError),
    #[error(transparent)]
    Program(#[from] QpError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// One data series: a sum over a set of capabilities, reported per bucket
/// of model steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSeries {
    pub id: String,
    /// Capability ids whose flows add up to the measured quantity.
    pub capabilities: Vec<String>,
    /// Model steps (1-based) covered by each value.
    pub buckets: Vec<Vec<usize>>,
    pub values: Vec<f64>,
    /// Replaces the default error weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl MeasurementSeries {
    /// One value per model step.
    pub fn per_step(id: &str, capabilities: &[&str], values: Vec<f64>) -> Self {
        MeasurementSeries {
            id: id.into(),
            capabilities: capabilities.iter().map(|c| c.to_string()).collect(),
            buckets: (1..=values.len()).map(|k| vec![k]).collect(),
            values,
            weight: None,
        }
    }

    /// A single value covering steps `1..=horizon`.
    pub fn total(id: &str, capabilities: &[&str], value: f64, horizon: usize) -> Self {
        MeasurementSeries {
            id: id.into(),
            capabilities: capabilities.iter().map(|c| c.to_string()).collect(),
            buckets: vec![(1..=horizon).collect()],
            values: vec![value],
            weight: None,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = Some(weight);
        self
    }

    fn resolve(&self, arch: &SystemArchitecture, horizon: usize) -> Result<Vec<usize>, WlseError> {
        let err = |message: String| WlseError::Measurement {
            id: self.id.clone(),
            message,
        };
        if self.capabilities.is_empty() {
            return Err(err("empty capability footprint".into()));
        }
        if self.buckets.is_empty() {
            return Err(err("no buckets".into()));
        }
        if self.values.len() != self.buckets.len() {
            return Err(err(format!(
                "{} values for {} buckets",
                self.values.len(),
                self.buckets.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(err(format!("value {v} is not finite")));
        }
        if let Some(w) = self.weight {
            if !(w.is_finite() && w > 0.0) {
                return Err(err(format!("weight {w} must be positive")));
            }
        }
        build_temporal_aggregation(horizon, &self.buckets).map_err(|e| err(e.to_string()))?;
        let mut out = BTreeSet::new();
        for c in &self.capabilities {
            let i = arch
                .capability_index(c)
                .ok_or_else(|| err(format!("unknown capability `{c}`")))?;
            out.insert(i);
        }
        Ok(out.into_iter().collect())
    }
}

/// Per-step upper bounds on selected capabilities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacitySet {
    /// `(capability index, bound)`, sorted by index.
    pub bounds: Vec<(usize, f64)>,
}

impl CapacitySet {
    pub fn new(mut bounds: Vec<(usize, f64)>) -> Result<Self, WlseError> {
        bounds.sort_by_key(|b| b.0);
        for w in bounds.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(WlseError::Capacity {
                    capability: w[0].0.to_string(),
                    message: "given twice".into(),
                });
            }
        }
        if let Some(&(c, v)) = bounds.iter().find(|b| !(b.1.is_finite() && b.1 >= 0.0)) {
            return Err(WlseError::Capacity {
                capability: c.to_string(),
                message: format!("bound {v} must be finite and nonnegative"),
            });
        }
        Ok(CapacitySet { bounds })
    }

    /// Bounds declared on the capabilities themselves.
    pub fn from_architecture(arch: &SystemArchitecture) -> Result<Self, WlseError> {
        Self::new(
            arch.capabilities
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.capacity.map(|v| (i, v)))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlseProblem {
    pub architecture: SystemArchitecture,
    pub measurements: Vec<MeasurementSeries>,
    pub capacities: CapacitySet,
    pub horizon: usize,
    pub dt: f64,
}

impl WlseProblem {
    /// Checks measurements, capacities, horizon and time step without assembling.
    pub fn validate(&self) -> Result<(), WlseError> {
        if self.horizon == 0 {
            return Err(WlseError::Horizon);
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(WlseError::TimeStep(self.dt));
        }
        let n_e = self.architecture.n_capabilities();
        if let Some(&(c, _)) = self.capacities.bounds.iter().find(|b| b.0 >= n_e) {
            return Err(WlseError::Capacity {
                capability: c.to_string(),
                message: "index out of range".into(),
            });
        }
        let mut ids = BTreeSet::new();
        for s in &self.measurements {
            if !ids.insert(s.id.as_str()) {
                return Err(WlseError::Measurement {
                    id: s.id.clone(),
                    message: "duplicate id".into(),
                });
            }
            s.resolve(&self.architecture, self.horizon)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WlseOptions {
    pub alpha: AlphaRule,
    pub solver: SolverOptions,
}

/// Where one measurement value sits in the program.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementRow {
    pub series: usize,
    pub bucket: usize,
    /// Row index within the equality block.
    pub row: usize,
    /// Column of the error variable.
    pub error_col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledWlse {
    pub program: TaggedProgram,
    pub n_capabilities: usize,
    pub horizon: usize,
    pub weights: WeightingScheme,
    pub rows: Vec<MeasurementRow>,
    /// Resolved capability footprint of each series.
    pub footprints: Vec<Vec<usize>>,
}

impl AssembledWlse {
    /// Column of `U_ψ[k]`, `k` 1-based up to `K+1`.
    pub fn flow_col(&self, capability: usize, k: usize) -> usize {
        (k - 1) * self.n_capabilities + capability
    }
}

pub fn assemble_wlse(problem: &WlseProblem, alpha: AlphaRule) -> Result<AssembledWlse, WlseError> {
    problem.validate()?;
    let k_max = problem.horizon;
    let arch = &problem.architecture;
    let m = incidence_matrices(arch)?;
    let net = m.net();
    let n_e = arch.n_capabilities();
    let footprints = problem
        .measurements
        .iter()
        .map(|s| s.resolve(arch, k_max))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = if problem.measurements.is_empty() {
        WeightingScheme {
            f_error: Vec::new(),
            alpha: match alpha {
                AlphaRule::Fixed(a) => a,
                _ => 0.0,
            },
        }
    } else {
        compute_weights(&problem.measurements, alpha)?
    };
    if !(weights.alpha.is_finite() && weights.alpha >= 0.0) {
        return Err(WlseError::Alpha(weights.alpha));
    }

    let n_flow = n_e * (k_max + 1);
    let n_err: usize = problem.measurements.iter().map(|s| s.values.len()).sum();
    let mut b = ProgramBuilder::new(n_flow + n_err);
    let flow = |c: usize, k: usize| (k - 1) * n_e + c;
    let place_labels = arch.place_labels();
    let cap_ids = arch.capability_ids();

    let rows = net.rows();
    for k in 1..=k_max {
        for (i, row) in rows.iter().enumerate() {
            b.equality(
                row.iter().map(|&(c, v)| (flow(c, k), v * problem.dt)),
                0.0,
                Constraint::Conservation,
                Some(k),
                &place_labels[i],
            );
        }
    }

    let mut meas_rows = Vec::new();
    let mut err_col = n_flow;
    for (si, (s, fp)) in problem.measurements.iter().zip(&footprints).enumerate() {
        let d_cap = build_capability_aggregation(std::slice::from_ref(fp), n_e)?;
        let d_time = build_temporal_aggregation(k_max, &s.buckets)?;
        let d_u = build_measurement_matrix(&d_cap, &d_time);
        for (bi, row) in d_u.rows().iter().enumerate() {
            let mut terms: Vec<(usize, f64)> = row.clone();
            terms.push((err_col, -1.0));
            meas_rows.push(MeasurementRow {
                series: si,
                bucket: bi,
                row: b.n_eq(),
                error_col: err_col,
            });
            let k = (s.buckets[bi].len() == 1).then(|| s.buckets[bi][0]);
            b.equality(terms, s.values[bi], Constraint::Measurement, k, &s.id);
            err_col += 1;
        }
    }

    for c in 0..n_e {
        b.equality(
            [(flow(c, k_max + 1), 1.0)],
            0.0,
            Constraint::TerminalFiring,
            Some(k_max + 1),
            &cap_ids[c],
        );
    }
    for k in 1..=k_max {
        for c in 0..n_e {
            b.inequality(
                [(flow(c, k), -1.0)],
                0.0,
                Constraint::FlowNonnegativity,
                Some(k),
                &cap_ids[c],
            );
        }
    }
    for k in 1..=k_max {
        for &(c, cap) in &problem.capacities.bounds {
            b.inequality(
                [(flow(c, k), 1.0)],
                cap,
                Constraint::Capacity,
                Some(k),
                &cap_ids[c],
            );
        }
    }

    let mut f_quad = vec![0.0; n_flow + n_err];
    for v in &mut f_quad[..n_e * k_max] {
        *v = weights.alpha;
    }
    for r in &meas_rows {
        f_quad[r.error_col] = weights.f_error[r.series];
    }
    let program = b.finish(f_quad, vec![0.0; n_flow + n_err])?;
    Ok(AssembledWlse {
        program,
        n_capabilities: n_e,
        horizon: k_max,
        weights,
        rows: meas_rows,
        footprints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementError {
    pub series: String,
    pub bucket: usize,
    pub imposed: f64,
    pub estimated: f64,
    pub error: f64,
    pub weight: f64,
    /// `weight · error²`.
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityBinding {
    pub capability: String,
    pub step: usize,
    pub bound: f64,
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub capabilities: Vec<String>,
    /// `flows[ψ][k-1]`, steps `1..=K`.
    pub flows: Vec<Vec<f64>>,
    pub errors: Vec<MeasurementError>,
    pub objective: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub status: Status,
    pub residuals: Residuals,
    /// `max_k ‖(M+ − M−) u[k]‖∞ / (1 + ‖u[k]‖∞)`, recomputed from the flows.
    pub conservation_residual: f64,
    /// Largest `|D_U U − C − E|` over measurement rows.
    pub measurement_residual: f64,
    pub capacity_binding: Vec<CapacityBinding>,
}

impl EstimationResult {
    pub fn horizon(&self) -> usize {
        self.flows.first().map_or(0, |f| f.len())
    }

    pub fn flow(&self, capability: &str, k: usize) -> Option<f64> {
        let i = self.capabilities.iter().position(|c| c == capability)?;
        self.flows[i].get(k - 1).copied()
    }
}

/// Relative conservation residual of a `|E_S| × K` flow table.
pub fn conservation_residual(incidence: &SparseMatrix, flows: &[Vec<f64>]) -> f64 {
    let k_max = flows.first().map_or(0, |f| f.len());
    let mut worst = 0.0f64;
    for k in 0..k_max {
        let u: Vec<f64> = flows.iter().map(|f| f[k]).collect();
        let r = incidence
            .mul_vec(&u)
            .expect("shape follows the architecture");
        let num = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let den = 1.0 + u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(num / den);
    }
    worst
}

pub fn estimate(
    problem: &WlseProblem,
    options: &WlseOptions,
) -> Result<EstimationResult, WlseError> {
    let a = assemble_wlse(problem, options.alpha)?;
    estimate_assembled(problem, &a, options)
}

/// Solves an already assembled program; lets callers dump it first.
pub fn estimate_assembled(
    problem: &WlseProblem,
    a: &AssembledWlse,
    options: &WlseOptions,
) -> Result<EstimationResult, WlseError> {
    let qp = &a.program.qp;
    let sol = solve_qp(qp, &options.solver)?;
    if sol.status != Status::Optimal {
        return Err(WlseError::Solver {
            status: sol.status,
            iterations: sol.iterations,
            residuals: sol.residuals,
        });
    }
    let arch = &problem.architecture;
    let n_e = a.n_capabilities;
    let flows: Vec<Vec<f64>> = (0..n_e)
        .map(|c| (1..=a.horizon).map(|k| sol.x[a.flow_col(c, k)]).collect())
        .collect();
    let incidence = incidence_matrices(arch)?.net();
    let conservation = conservation_residual(&incidence, &flows);
    if conservation > 1e-6 {
        return Err(WlseError::Conservation(conservation));
    }

    let dx = qp.a_eq.mul_vec(&sol.x)?;
    let mut errors = Vec::new();
    let mut measurement_residual = 0.0f64;
    for r in &a.rows {
        let s = &problem.measurements[r.series];
        let e = sol.x[r.error_col];
        let estimated = dx[r.row] + e;
        measurement_residual = measurement_residual.max((dx[r.row] - qp.b_eq[r.row]).abs());
        let w = a.weights.f_error[r.series];
        errors.push(MeasurementError {
            series: s.id.clone(),
            bucket: r.bucket,
            imposed: s.values[r.bucket],
            estimated,
            error: e,
            weight: w,
            weighted: w * e * e,
        });
    }

    let cap_rows = a.program.ineq_rows_of(Constraint::Capacity);
    let mut capacity_binding = Vec::new();
    let d_x = qp.d_ineq.mul_vec(&sol.x)?;
    for r in cap_rows {
        let slack = qp.e_ineq[r] - d_x[r];
        let dual = sol.duals_ineq[r];
        if slack <= options.solver.tol_abs + options.solver.tol_rel * qp.e_ineq[r].abs() {
            let tag = &a.program.ineq_tags[r];
            capacity_binding.push(CapacityBinding {
                capability: tag.entity.clone(),
                step: tag.k.unwrap_or(0),
                bound: qp.e_ineq[r],
                dual,
            });
        }
    }

    Ok(EstimationResult {
        capabilities: arch.capability_ids(),
        flows,
        errors,
        objective: sol.objective,
        alpha: a.weights.alpha,
        iterations: sol.iterations,
        status: sol.status,
        residuals: sol.residuals,
        conservation_residual: conservation,
        measurement_residual,
        capacity_binding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfg::{Buffer, BufferKind, Capability, Operand, ProcessSpec};

    fn chain(cap: Option<f64>) -> SystemArchitecture {
        let mut gen = Capability::at("gen", ProcessSpec::injection("generate", "e"), "p");
        gen.capacity = cap;
        SystemArchitecture {
            operands: vec![Operand {
                id: "e".into(),
                name: "electricity".into(),
                unit: "GJ".into(),
            }],
            buffers: vec![Buffer {
                id: "p".into(),
                name: "plant".into(),
                location: "r1".into(),
                kind: BufferKind::Terminal,
            }],
            capabilities: vec![
                gen,
                Capability::at("load", ProcessSpec::withdrawal("consume", "e"), "p"),
            ],
        }
    }

    fn problem(cap: Option<f64>, measurements: Vec<MeasurementSeries>) -> WlseProblem {
        let arch = chain(cap);
        WlseProblem {
            capacities: CapacitySet::from_architecture(&arch).unwrap(),
            architecture: arch,
            measurements,
            horizon: 1,
            dt: 1.0,
        }
    }

    fn zero_alpha() -> WlseOptions {
        WlseOptions {
            alpha: AlphaRule::Fixed(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn demand_is_routed() {
        let p = problem(
            None,
            vec![MeasurementSeries::per_step("d", &["load"], vec![10.0])],
        );
        let r = estimate(&p, &zero_alpha()).unwrap();
        assert!((r.flow("gen", 1).unwrap() - 10.0).abs() < 1e-9);
        assert!(r.errors[0].error.abs() < 1e-9);
    }

    #[test]
    fn capacity_shortfall_becomes_error() {
        let p = problem(
            Some(6.0),
            vec![MeasurementSeries::per_step("d", &["load"], vec![10.0])],
        );
        let r = estimate(&p, &zero_alpha()).unwrap();
        assert!((r.flow("load", 1).unwrap() - 6.0).abs() < 1e-9);
        assert!((r.errors[0].error + 4.0).abs() < 1e-9);
        assert_eq!(r.capacity_binding.len(), 1);
        assert!(r.capacity_binding[0].dual > 0.0);
    }

    #[test]
    fn no_measurements_gives_zero_flow() {
        let r = estimate(&problem(None, vec![]), &WlseOptions::default()).unwrap();
        assert!(r.flows.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn unknown_capability_is_rejected() {
        let p = problem(
            None,
            vec![MeasurementSeries::per_step("d", &["nope"], vec![1.0])],
        );
        assert!(matches!(
            assemble_wlse(&p, AlphaRule::FromData),
            Err(WlseError::Measurement { .. })
        ));
    }

    #[test]
    fn measurement_rows_define_the_error() {
        let p = problem(
            None,
            vec![MeasurementSeries::per_step("d", &["load"], vec![3.0])],
        );
        let a = assemble_wlse(&p, AlphaRule::FromData).unwrap();
        assert_eq!(a.program.eq_rows_of(Constraint::Measurement), vec![1]);
        assert_eq!(a.program.eq_rows_of(Constraint::TerminalFiring).len(), 2);
        assert!((a.weights.alpha - 0.09).abs() < 1e-15);
        let r = estimate(&p, &WlseOptions::default()).unwrap();
        assert!(r.measurement_residual < 1e-12);
    }
}
