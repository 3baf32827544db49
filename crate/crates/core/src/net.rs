//! Discrete-time Petri-net dynamics of the engineering system net and the
//! operand nets.
//!
//! Step `k` maps markings `Q[k]` to `Q[k+1]`:
//!
//! ```text
//! Q_places[k+1]      = Q_places[k] + (M+ U+[k] − M− U−[k]) ΔT
//! Q_transitions[k+1] = Q_transitions[k] + (U−[k] − U+[k]) ΔT
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hfg::{incidence_matrices, HfgError, SystemArchitecture};
use crate::sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{what} must be finite and nonnegative (entry {index} is {value})")]
    Negative {
        what: String,
        index: usize,
        value: f64,
    },
    #[error("time step must be positive, got {0}")]
    TimeStep(f64),
    #[error("synchronization matrices may only hold 0 or 1, found {value} at ({row}, {col})")]
    NotBinary { row: usize, col: usize, value: f64 },
    #[error(transparent)]
    Architecture(#[from] HfgError),
}

/// Structure shared by the engineering system net and the operand nets.
#[derive(Debug, Clone, PartialEq)]
pub struct PetriNet {
    pub m_plus: SparseMatrix,
    pub m_minus: SparseMatrix,
    pub durations: Vec<usize>,
    pub initial_places: Vec<f64>,
    pub initial_transitions: Vec<f64>,
    pub place_labels: Vec<String>,
    pub transition_labels: Vec<String>,
}

impl PetriNet {
    pub fn new(
        m_plus: SparseMatrix,
        m_minus: SparseMatrix,
        durations: Vec<usize>,
        initial_places: Vec<f64>,
        initial_transitions: Vec<f64>,
    ) -> Result<Self, NetError> {
        let (p, t) = m_plus.shape();
        if m_minus.shape() != (p, t) {
            return Err(NetError::Shape(format!(
                "M+ is {:?} but M− is {:?}",
                m_plus.shape(),
                m_minus.shape()
            )));
        }
        if durations.len() != t || initial_transitions.len() != t {
            return Err(NetError::Shape(format!(
                "{t} transitions but {} durations and {} transition markings",
                durations.len(),
                initial_transitions.len()
            )));
        }
        if initial_places.len() != p {
            return Err(NetError::Shape(format!(
                "{p} places but {} place markings",
                initial_places.len()
            )));
        }
        check_nonnegative("initial place marking", &initial_places)?;
        check_nonnegative("initial transition marking", &initial_transitions)?;
        Ok(PetriNet {
            m_plus,
            m_minus,
            durations,
            initial_places,
            initial_transitions,
            place_labels: (0..p).map(|i| format!("place{i}")).collect(),
            transition_labels: (0..t).map(|i| format!("transition{i}")).collect(),
        })
    }

    pub fn with_labels(
        mut self,
        places: Vec<String>,
        transitions: Vec<String>,
    ) -> Result<Self, NetError> {
        if places.len() != self.n_places() || transitions.len() != self.n_transitions() {
            return Err(NetError::Shape("label counts do not match the net".into()));
        }
        self.place_labels = places;
        self.transition_labels = transitions;
        Ok(self)
    }

    pub fn n_places(&self) -> usize {
        self.m_plus.n_rows()
    }

    pub fn n_transitions(&self) -> usize {
        self.m_plus.n_cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineeringSystemNet {
    pub net: PetriNet,
    /// Length of one time step.
    pub dt: f64,
}

impl EngineeringSystemNet {
    pub fn new(net: PetriNet, dt: f64) -> Result<Self, NetError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(NetError::TimeStep(dt));
        }
        Ok(EngineeringSystemNet { net, dt })
    }

    /// Net of a validated architecture with empty initial markings.
    pub fn from_architecture(arch: &SystemArchitecture, dt: f64) -> Result<Self, NetError> {
        let m = incidence_matrices(arch)?;
        let durations = arch.capabilities.iter().map(|c| c.duration).collect();
        let net = PetriNet::new(
            m.m_plus,
            m.m_minus,
            durations,
            vec![0.0; arch.n_places()],
            vec![0.0; arch.n_capabilities()],
        )?
        .with_labels(arch.place_labels(), arch.capability_ids())?;
        Self::new(net, dt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperandNet {
    pub operand: String,
    pub net: PetriNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiringSchedule {
    /// `u_minus[k - 1]` is the input firing vector of step `k`.
    pub u_minus: Vec<Vec<f64>>,
    pub u_plus: Vec<Vec<f64>>,
}

impl FiringSchedule {
    pub fn new(u_minus: Vec<Vec<f64>>, u_plus: Vec<Vec<f64>>) -> Result<Self, NetError> {
        if u_minus.len() != u_plus.len() {
            return Err(NetError::Shape(format!(
                "{} input firing steps but {} output firing steps",
                u_minus.len(),
                u_plus.len()
            )));
        }
        for (k, (um, up)) in u_minus.iter().zip(&u_plus).enumerate() {
            check_nonnegative(&format!("U−[{}]", k + 1), um)?;
            check_nonnegative(&format!("U+[{}]", k + 1), up)?;
        }
        Ok(FiringSchedule { u_minus, u_plus })
    }

    pub fn empty() -> Self {
        FiringSchedule {
            u_minus: vec![],
            u_plus: vec![],
        }
    }

    pub fn horizon(&self) -> usize {
        self.u_minus.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetViolation {
    NegativePlace {
        step: usize,
        place: String,
        value: f64,
    },
    NegativeTransition {
        step: usize,
        transition: String,
        value: f64,
    },
    /// `U+[step + duration]` differs from `U−[step]`.
    Duration {
        step: usize,
        transition: String,
        expected: f64,
        found: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub places: Vec<f64>,
    pub transitions: Vec<f64>,
    pub violations: Vec<NetViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Place markings `Q[1..=K+1]`.
    pub places: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<f64>>,
    pub violations: Vec<NetViolation>,
}

fn check_nonnegative(what: &str, v: &[f64]) -> Result<(), NetError> {
    for (index, &value) in v.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(NetError::Negative {
                what: what.to_string(),
                index,
                value,
            });
        }
    }
    Ok(())
}

fn negative_threshold(q: &[f64]) -> f64 {
    -1e-9 * (1.0 + q.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

fn step_net(
    net: &PetriNet,
    dt: f64,
    step: usize,
    q_places: &[f64],
    q_transitions: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
) -> Result<StepOutcome, NetError> {
    let (p, t) = (net.n_places(), net.n_transitions());
    if q_places.len() != p || q_transitions.len() != t || u_minus.len() != t || u_plus.len() != t {
        return Err(NetError::Shape(format!(
            "net has {p} places and {t} transitions; got markings of length {} and {} and firings of length {} and {}",
            q_places.len(),
            q_transitions.len(),
            u_minus.len(),
            u_plus.len()
        )));
    }
    let inflow = net.m_plus.mul_vec(u_plus).expect("checked shape");
    let outflow = net.m_minus.mul_vec(u_minus).expect("checked shape");
    let places: Vec<f64> = (0..p)
        .map(|i| q_places[i] + (inflow[i] - outflow[i]) * dt)
        .collect();
    let transitions: Vec<f64> = (0..t)
        .map(|j| q_transitions[j] + (u_minus[j] - u_plus[j]) * dt)
        .collect();
    let mut violations = Vec::new();
    let tp = negative_threshold(&places);
    for (i, &v) in places.iter().enumerate() {
        if v < tp {
            violations.push(NetViolation::NegativePlace {
                step,
                place: net.place_labels[i].clone(),
                value: v,
            });
        }
    }
    let tt = negative_threshold(&transitions);
    for (j, &v) in transitions.iter().enumerate() {
        if v < tt {
            violations.push(NetViolation::NegativeTransition {
                step,
                transition: net.transition_labels[j].clone(),
                value: v,
            });
        }
    }
    Ok(StepOutcome {
        places,
        transitions,
        violations,
    })
}

/// One step of the engineering system net. Negative markings are reported, not clipped.
pub fn step_esn(
    esn: &EngineeringSystemNet,
    q_b: &[f64],
    q_e: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
) -> Result<StepOutcome, NetError> {
    step_net(&esn.net, esn.dt, 1, q_b, q_e, u_minus, u_plus)
}

/// One step of an operand net with time step `dt`.
pub fn step_operand_net(
    net: &OperandNet,
    dt: f64,
    q_s: &[f64],
    q_e: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
) -> Result<StepOutcome, NetError> {
    step_net(&net.net, dt, 1, q_s, q_e, u_minus, u_plus)
}

fn simulate_net(
    net: &PetriNet,
    dt: f64,
    schedule: &FiringSchedule,
) -> Result<Trajectory, NetError> {
    let horizon = schedule.horizon();
    let mut places = vec![net.initial_places.clone()];
    let mut transitions = vec![net.initial_transitions.clone()];
    let mut violations = Vec::new();
    for k in 1..=horizon {
        let out = step_net(
            net,
            dt,
            k,
            &places[k - 1],
            &transitions[k - 1],
            &schedule.u_minus[k - 1],
            &schedule.u_plus[k - 1],
        )?;
        places.push(out.places);
        transitions.push(out.transitions);
        violations.extend(out.violations);
    }
    violations.extend(duration_violations(net, schedule));
    Ok(Trajectory {
        places,
        transitions,
        violations,
    })
}

/// `U+[k + k_d] = U−[k]` for every transition and every `k ≤ K − k_d`.
fn duration_violations(net: &PetriNet, schedule: &FiringSchedule) -> Vec<NetViolation> {
    let horizon = schedule.horizon();
    let mut out = Vec::new();
    for (j, &kd) in net.durations.iter().enumerate() {
        for k in 1..=horizon.saturating_sub(kd) {
            let expected = schedule.u_minus[k - 1][j];
            let found = schedule.u_plus[k + kd - 1][j];
            if (expected - found).abs() > 1e-9 * (1.0 + expected.abs().max(found.abs())) {
                out.push(NetViolation::Duration {
                    step: k,
                    transition: net.transition_labels[j].clone(),
                    expected,
                    found,
                });
            }
        }
    }
    out
}

/// Chains [`step_esn`] over the schedule from the net's initial marking.
pub fn simulate(
    esn: &EngineeringSystemNet,
    schedule: &FiringSchedule,
) -> Result<Trajectory, NetError> {
    simulate_net(&esn.net, esn.dt, schedule)
}

pub fn simulate_operand_net(
    net: &OperandNet,
    dt: f64,
    schedule: &FiringSchedule,
) -> Result<Trajectory, NetError> {
    simulate_net(&net.net, dt, schedule)
}

/// 0/1 matrices mapping system-net firings onto the stacked operand-net firings.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncMatrices {
    pub lambda_plus: SparseMatrix,
    pub lambda_minus: SparseMatrix,
}

impl SyncMatrices {
    pub fn new(lambda_plus: SparseMatrix, lambda_minus: SparseMatrix) -> Result<Self, NetError> {
        if lambda_plus.shape() != lambda_minus.shape() {
            return Err(NetError::Shape("Λ+ and Λ− differ in shape".into()));
        }
        for m in [&lambda_plus, &lambda_minus] {
            for (row, col, value) in m.iter() {
                if value != 0.0 && value != 1.0 {
                    return Err(NetError::NotBinary { row, col, value });
                }
            }
        }
        Ok(SyncMatrices {
            lambda_plus,
            lambda_minus,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncResiduals {
    pub minus: Vec<f64>,
    pub plus: Vec<f64>,
}

impl SyncResiduals {
    pub fn max_abs(&self) -> f64 {
        self.minus
            .iter()
            .chain(&self.plus)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Residuals `U_L± − Λ± U±`; zero exactly when the nets are synchronized.
pub fn check_sync(
    sync: &SyncMatrices,
    u_l_minus: &[f64],
    u_l_plus: &[f64],
    u_minus: &[f64],
    u_plus: &[f64],
) -> Result<SyncResiduals, NetError> {
    let (rows, cols) = sync.lambda_plus.shape();
    if u_l_minus.len() != rows
        || u_l_plus.len() != rows
        || u_minus.len() != cols
        || u_plus.len() != cols
    {
        return Err(NetError::Shape(format!(
            "Λ is {rows}×{cols}; firings have lengths {}, {}, {}, {}",
            u_l_minus.len(),
            u_l_plus.len(),
            u_minus.len(),
            u_plus.len()
        )));
    }
    let lm = sync.lambda_minus.mul_vec(u_minus).expect("checked shape");
    let lp = sync.lambda_plus.mul_vec(u_plus).expect("checked shape");
    Ok(SyncResiduals {
        minus: u_l_minus.iter().zip(&lm).map(|(a, b)| a - b).collect(),
        plus: u_l_plus.iter().zip(&lp).map(|(a, b)| a - b).collect(),
    })
}
