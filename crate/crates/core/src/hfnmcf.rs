//! Time-expanded minimum cost flow over the engineering system net and its
//! operand nets, assembled as one [`QuadraticProgram`].
//!
//! Every step `k ∈ 1..=K+1` owns a block
//! `[Q_B; Q_E; Q_SL; Q_EL; U−; U+; U_L−; U_L+]`. Markings at `K+1` are the
//! terminal state; firings at `K+1` exist so that the final condition can
//! pin `U−[K+1]` and `U_L−[K+1]` to zero.

use serde::Serialize;
use thiserror::Error;

use crate::hfg::SystemArchitecture;
use crate::net::{
    simulate, simulate_operand_net, EngineeringSystemNet, FiringSchedule, NetError, OperandNet,
    SyncMatrices, Trajectory,
};
use crate::provenance::{Constraint, ProgramBuilder, TaggedProgram};
use crate::qp::{QpError, Solution, Status};
use crate::sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("{block}: {message}")]
    Shape {
        block: &'static str,
        message: String,
    },
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("device models are not supported ({0} given)")]
    DeviceModels(usize),
    #[error(transparent)]
    Program(#[from] QpError),
    #[error(transparent)]
    Net(#[from] NetError),
}

fn shape(block: &'static str, message: String) -> AssemblyError {
    AssemblyError::Shape { block, message }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    QB,
    QE,
    QSL,
    QEL,
    UMinus,
    UPlus,
    ULMinus,
    ULPlus,
}

impl Block {
    pub const ALL: [Block; 8] = [
        Block::QB,
        Block::QE,
        Block::QSL,
        Block::QEL,
        Block::UMinus,
        Block::UPlus,
        Block::ULMinus,
        Block::ULPlus,
    ];
}

/// Column offsets of the stacked decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecisionLayout {
    pub n_places: usize,
    pub n_transitions: usize,
    pub n_operand_places: usize,
    pub n_operand_transitions: usize,
    pub horizon: usize,
}

impl DecisionLayout {
    pub fn block_len(&self, block: Block) -> usize {
        match block {
            Block::QB => self.n_places,
            Block::QE | Block::UMinus | Block::UPlus => self.n_transitions,
            Block::QSL => self.n_operand_places,
            Block::QEL | Block::ULMinus | Block::ULPlus => self.n_operand_transitions,
        }
    }

    pub fn step_len(&self) -> usize {
        Block::ALL.iter().map(|&b| self.block_len(b)).sum()
    }

    /// Number of step blocks, `K + 1`.
    pub fn n_steps(&self) -> usize {
        self.horizon + 1
    }

    pub fn total(&self) -> usize {
        self.step_len() * self.n_steps()
    }

    /// Offset of `block` within one step.
    pub fn block_offset(&self, block: Block) -> usize {
        Block::ALL
            .iter()
            .take_while(|&&b| b != block)
            .map(|&b| self.block_len(b))
            .sum()
    }

    /// First column of `block` at step `k` (1-based, up to `K+1`).
    pub fn offset(&self, block: Block, k: usize) -> usize {
        assert!(
            (1..=self.n_steps()).contains(&k),
            "step {k} outside 1..={}",
            self.n_steps()
        );
        (k - 1) * self.step_len() + self.block_offset(block)
    }

    pub fn col(&self, block: Block, k: usize, i: usize) -> usize {
        debug_assert!(i < self.block_len(block));
        self.offset(block, k) + i
    }

    pub fn slice<'a>(&self, x: &'a [f64], block: Block, k: usize) -> &'a [f64] {
        let o = self.offset(block, k);
        &x[o..o + self.block_len(block)]
    }
}

/// Per-step costs `xᵀ F x + fᵀ x`, applied to steps `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepObjective {
    pub f_quad: Vec<f64>,
    pub f_lin: Vec<f64>,
}

impl StepObjective {
    pub fn zero(layout: &DecisionLayout) -> Self {
        StepObjective {
            f_quad: vec![0.0; layout.step_len()],
            f_lin: vec![0.0; layout.step_len()],
        }
    }
}

/// Rows `D·v[k] = C[k]` for one firing block, `k = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRows {
    pub matrix: SparseMatrix,
    /// `values[k-1]` holds the right-hand side for step `k`.
    pub values: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl BoundaryRows {
    /// Same right-hand side at every step.
    pub fn constant(matrix: SparseMatrix, values: Vec<f64>, horizon: usize) -> Self {
        let labels = (0..matrix.n_rows()).map(|i| format!("row{i}")).collect();
        BoundaryRows {
            matrix,
            values: vec![values; horizon],
            labels,
        }
    }

    fn check(
        &self,
        block: &'static str,
        n_cols: usize,
        horizon: usize,
    ) -> Result<(), AssemblyError> {
        let rows = self.matrix.n_rows();
        if self.matrix.n_cols() != n_cols {
            return Err(shape(
                block,
                format!(
                    "matrix has {} columns, expected {n_cols}",
                    self.matrix.n_cols()
                ),
            ));
        }
        if self.labels.len() != rows {
            return Err(shape(
                block,
                format!("{} labels for {rows} rows", self.labels.len()),
            ));
        }
        if self.values.len() != horizon {
            return Err(shape(
                block,
                format!("{} steps of values, expected {horizon}", self.values.len()),
            ));
        }
        if let Some(v) = self.values.iter().find(|v| v.len() != rows) {
            return Err(shape(
                block,
                format!("value vector of length {}, expected {rows}", v.len()),
            ));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(shape(block, "values must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryData {
    pub u_plus: Option<BoundaryRows>,
    pub u_minus: Option<BoundaryRows>,
    pub ul_plus: Option<BoundaryRows>,
    pub ul_minus: Option<BoundaryRows>,
}

/// Terminal markings. `None` leaves that block free.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FinalConditions {
    pub q_b: Option<Vec<f64>>,
    pub q_e: Option<Vec<f64>>,
    pub q_sl: Option<Vec<f64>>,
}

/// Placeholder for nonlinear device models; assembly rejects any entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceModel {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HfnmcfInstance {
    pub esn: EngineeringSystemNet,
    pub operand_nets: Vec<OperandNet>,
    /// Required when operand nets are present.
    pub sync: Option<SyncMatrices>,
    pub horizon: usize,
    pub objective: StepObjective,
    pub boundary: BoundaryData,
    pub final_conditions: FinalConditions,
    /// Upper bound on `U−[k]` per transition, `k = 1..=K`.
    pub capacities: Vec<Option<f64>>,
    pub device_models: Vec<DeviceModel>,
}

impl HfnmcfInstance {
    /// No operand nets, zero costs, no boundary data, free terminal state.
    pub fn new(esn: EngineeringSystemNet, horizon: usize) -> Self {
        let t = esn.net.n_transitions();
        let mut inst = HfnmcfInstance {
            esn,
            operand_nets: Vec::new(),
            sync: None,
            horizon,
            objective: StepObjective {
                f_quad: Vec::new(),
                f_lin: Vec::new(),
            },
            boundary: BoundaryData::default(),
            final_conditions: FinalConditions::default(),
            capacities: vec![None; t],
            device_models: Vec::new(),
        };
        inst.objective = StepObjective::zero(&inst.layout());
        inst
    }

    /// Net and capacities taken from an architecture.
    pub fn from_architecture(
        arch: &SystemArchitecture,
        dt: f64,
        horizon: usize,
    ) -> Result<Self, AssemblyError> {
        let esn = EngineeringSystemNet::from_architecture(arch, dt)?;
        let mut inst = Self::new(esn, horizon);
        inst.capacities = arch.capabilities.iter().map(|c| c.capacity).collect();
        Ok(inst)
    }

    /// Replaces the operand nets and rebuilds a zero objective for the new layout.
    pub fn with_operand_nets(mut self, nets: Vec<OperandNet>, sync: SyncMatrices) -> Self {
        self.operand_nets = nets;
        self.sync = Some(sync);
        self.objective = StepObjective::zero(&self.layout());
        self
    }

    pub fn layout(&self) -> DecisionLayout {
        DecisionLayout {
            n_places: self.esn.net.n_places(),
            n_transitions: self.esn.net.n_transitions(),
            n_operand_places: self.operand_nets.iter().map(|n| n.net.n_places()).sum(),
            n_operand_transitions: self
                .operand_nets
                .iter()
                .map(|n| n.net.n_transitions())
                .sum(),
            horizon: self.horizon,
        }
    }

    /// Sets the same per-step cost on every entry of one block.
    pub fn set_block_cost(&mut self, block: Block, quad: f64, lin: f64) {
        let layout = self.layout();
        let o = layout.block_offset(block);
        for i in o..o + layout.block_len(block) {
            self.objective.f_quad[i] = quad;
            self.objective.f_lin[i] = lin;
        }
    }

    fn validate(&self) -> Result<DecisionLayout, AssemblyError> {
        if self.horizon == 0 {
            return Err(AssemblyError::Horizon);
        }
        if !self.device_models.is_empty() {
            return Err(AssemblyError::DeviceModels(self.device_models.len()));
        }
        let l = self.layout();
        let step = l.step_len();
        if self.objective.f_quad.len() != step || self.objective.f_lin.len() != step {
            return Err(shape(
                "objective",
                format!(
                    "per-step costs have lengths {} and {}, layout has {step}",
                    self.objective.f_quad.len(),
                    self.objective.f_lin.len()
                ),
            ));
        }
        match (&self.sync, self.operand_nets.is_empty()) {
            (None, false) => {
                return Err(shape(
                    "sync_plus",
                    "operand nets need synchronization matrices".into(),
                ))
            }
            (Some(s), _) => {
                let want = (l.n_operand_transitions, l.n_transitions);
                if s.lambda_plus.shape() != want {
                    return Err(shape(
                        "sync_plus",
                        format!("Λ+ is {:?}, expected {want:?}", s.lambda_plus.shape()),
                    ));
                }
                if s.lambda_minus.shape() != want {
                    return Err(shape(
                        "sync_minus",
                        format!("Λ− is {:?}, expected {want:?}", s.lambda_minus.shape()),
                    ));
                }
            }
            (None, true) => {}
        }
        let b = &self.boundary;
        if let Some(r) = &b.u_plus {
            r.check("boundary_plus", l.n_transitions, self.horizon)?;
        }
        if let Some(r) = &b.u_minus {
            r.check("boundary_minus", l.n_transitions, self.horizon)?;
        }
        if let Some(r) = &b.ul_plus {
            r.check(
                "operand_boundary_plus",
                l.n_operand_transitions,
                self.horizon,
            )?;
        }
        if let Some(r) = &b.ul_minus {
            r.check(
                "operand_boundary_minus",
                l.n_operand_transitions,
                self.horizon,
            )?;
        }
        let f = &self.final_conditions;
        for (v, n) in [
            (&f.q_b, l.n_places),
            (&f.q_e, l.n_transitions),
            (&f.q_sl, l.n_operand_places),
        ] {
            if let Some(v) = v {
                if v.len() != n {
                    return Err(shape(
                        "final_condition",
                        format!("marking of length {}, expected {n}", v.len()),
                    ));
                }
            }
        }
        if self.capacities.len() != l.n_transitions {
            return Err(shape(
                "step_capacity",
                format!(
                    "{} capacities for {} transitions",
                    self.capacities.len(),
                    l.n_transitions
                ),
            ));
        }
        if let Some(c) = self
            .capacities
            .iter()
            .flatten()
            .find(|c| !(c.is_finite() && **c >= 0.0))
        {
            return Err(shape(
                "step_capacity",
                format!("capacity {c} must be finite and nonnegative"),
            ));
        }
        Ok(l)
    }

    fn operand_place_labels(&self) -> Vec<String> {
        self.operand_nets
            .iter()
            .flat_map(|n| {
                n.net
                    .place_labels
                    .iter()
                    .map(move |p| format!("{}:{p}", n.operand))
            })
            .collect()
    }

    fn operand_transition_labels(&self) -> Vec<String> {
        self.operand_nets
            .iter()
            .flat_map(|n| {
                n.net
                    .transition_labels
                    .iter()
                    .map(move |p| format!("{}:{p}", n.operand))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledProgram {
    pub program: TaggedProgram,
    pub layout: DecisionLayout,
}

/// Stacked incidence of all operand nets as block-diagonal triplets.
struct StackedNets {
    m_plus: Vec<Vec<(usize, f64)>>,
    m_minus: Vec<Vec<(usize, f64)>>,
    durations: Vec<usize>,
    initial_places: Vec<f64>,
}

fn stack_operand_nets(nets: &[OperandNet]) -> StackedNets {
    let mut out = StackedNets {
        m_plus: Vec::new(),
        m_minus: Vec::new(),
        durations: Vec::new(),
        initial_places: Vec::new(),
    };
    let mut col0 = 0;
    for n in nets {
        let shift = |rows: Vec<Vec<(usize, f64)>>| -> Vec<Vec<(usize, f64)>> {
            rows.into_iter()
                .map(|r| r.into_iter().map(|(c, v)| (c + col0, v)).collect())
                .collect()
        };
        out.m_plus.extend(shift(n.net.m_plus.rows()));
        out.m_minus.extend(shift(n.net.m_minus.rows()));
        out.durations.extend(&n.net.durations);
        out.initial_places.extend(&n.net.initial_places);
        col0 += n.net.n_transitions();
    }
    out
}

struct NetBlocks {
    q: Block,
    e: Block,
    um: Block,
    up: Block,
}

const ESN_BLOCKS: NetBlocks = NetBlocks {
    q: Block::QB,
    e: Block::QE,
    um: Block::UMinus,
    up: Block::UPlus,
};
const OPERAND_BLOCKS: NetBlocks = NetBlocks {
    q: Block::QSL,
    e: Block::QEL,
    um: Block::ULMinus,
    up: Block::ULPlus,
};

struct NetRows<'a> {
    m_plus: &'a [Vec<(usize, f64)>],
    m_minus: &'a [Vec<(usize, f64)>],
    durations: &'a [usize],
    place_labels: &'a [String],
    transition_labels: &'a [String],
}

/// Place balance, transition balance and duration rows of one (stacked) net.
fn net_rows(
    b: &mut ProgramBuilder,
    l: &DecisionLayout,
    dt: f64,
    blocks: &NetBlocks,
    rows: &NetRows<'_>,
    tags: [Constraint; 3],
) {
    let k_max = l.horizon;
    for k in 1..=k_max {
        for (i, label) in rows.place_labels.iter().enumerate() {
            let mut terms = vec![
                (l.col(blocks.q, k + 1, i), -1.0),
                (l.col(blocks.q, k, i), 1.0),
            ];
            terms.extend(
                rows.m_plus[i]
                    .iter()
                    .map(|&(j, v)| (l.col(blocks.up, k, j), v * dt)),
            );
            terms.extend(
                rows.m_minus[i]
                    .iter()
                    .map(|&(j, v)| (l.col(blocks.um, k, j), -v * dt)),
            );
            b.equality(terms, 0.0, tags[0], Some(k), label);
        }
    }
    for k in 1..=k_max {
        for (j, label) in rows.transition_labels.iter().enumerate() {
            let terms = [
                (l.col(blocks.e, k + 1, j), -1.0),
                (l.col(blocks.e, k, j), 1.0),
                (l.col(blocks.up, k, j), -dt),
                (l.col(blocks.um, k, j), dt),
            ];
            b.equality(terms, 0.0, tags[1], Some(k), label);
        }
    }
    for k in 1..=k_max {
        for (j, label) in rows.transition_labels.iter().enumerate() {
            let kd = rows.durations[j];
            if k + kd <= k_max {
                let terms = [
                    (l.col(blocks.up, k + kd, j), -1.0),
                    (l.col(blocks.um, k, j), 1.0),
                ];
                b.equality(terms, 0.0, tags[2], Some(k), label);
            }
        }
    }
}

fn boundary_rows(
    b: &mut ProgramBuilder,
    l: &DecisionLayout,
    parts: [(Option<&BoundaryRows>, Block, Constraint); 2],
) {
    for k in 1..=l.horizon {
        for (rows, block, tag) in parts {
            let Some(rows) = rows else { continue };
            for (r, row) in rows.matrix.rows().iter().enumerate() {
                let terms = row.iter().map(|&(j, v)| (l.col(block, k, j), v));
                b.equality(terms, rows.values[k - 1][r], tag, Some(k), &rows.labels[r]);
            }
        }
    }
}

fn pin(
    b: &mut ProgramBuilder,
    l: &DecisionLayout,
    block: Block,
    k: usize,
    values: &[f64],
    labels: &[String],
    tag: Constraint,
) {
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        b.equality([(l.col(block, k, i), 1.0)], v, tag, Some(k), label);
    }
}

/// Builds the program. Equality rows come in this order, each block
/// time-major: system-net place balance, transition balance, durations;
/// the same three for the stacked operand nets; synchronization (plus, then
/// minus); boundary rows on system firings, then on operand firings;
/// initial markings; terminal markings and zero terminal input firings.
/// Inequalities: nonnegative firings at every step, then per-step capacities.
pub fn assemble_hfnmcf(inst: &HfnmcfInstance) -> Result<AssembledProgram, AssemblyError> {
    let l = inst.validate()?;
    let net = &inst.esn.net;
    let dt = inst.esn.dt;
    let mut b = ProgramBuilder::new(l.total());

    let esn_plus = net.m_plus.rows();
    let esn_minus = net.m_minus.rows();
    net_rows(
        &mut b,
        &l,
        dt,
        &ESN_BLOCKS,
        &NetRows {
            m_plus: &esn_plus,
            m_minus: &esn_minus,
            durations: &net.durations,
            place_labels: &net.place_labels,
            transition_labels: &net.transition_labels,
        },
        [
            Constraint::EsnPlaceBalance,
            Constraint::EsnTransitionBalance,
            Constraint::EsnDuration,
        ],
    );

    let stacked = stack_operand_nets(&inst.operand_nets);
    let op_places = inst.operand_place_labels();
    let op_transitions = inst.operand_transition_labels();
    net_rows(
        &mut b,
        &l,
        dt,
        &OPERAND_BLOCKS,
        &NetRows {
            m_plus: &stacked.m_plus,
            m_minus: &stacked.m_minus,
            durations: &stacked.durations,
            place_labels: &op_places,
            transition_labels: &op_transitions,
        },
        [
            Constraint::OperandPlaceBalance,
            Constraint::OperandTransitionBalance,
            Constraint::OperandDuration,
        ],
    );

    if let Some(sync) = &inst.sync {
        for (lambda, ul, u, tag) in [
            (
                &sync.lambda_plus,
                Block::ULPlus,
                Block::UPlus,
                Constraint::SyncPlus,
            ),
            (
                &sync.lambda_minus,
                Block::ULMinus,
                Block::UMinus,
                Constraint::SyncMinus,
            ),
        ] {
            let rows = lambda.rows();
            for k in 1..=l.horizon {
                for (r, row) in rows.iter().enumerate() {
                    let mut terms = vec![(l.col(ul, k, r), 1.0)];
                    terms.extend(row.iter().map(|&(j, v)| (l.col(u, k, j), -v)));
                    b.equality(terms, 0.0, tag, Some(k), &op_transitions[r]);
                }
            }
        }
    }

    let bd = &inst.boundary;
    boundary_rows(
        &mut b,
        &l,
        [
            (bd.u_plus.as_ref(), Block::UPlus, Constraint::BoundaryPlus),
            (
                bd.u_minus.as_ref(),
                Block::UMinus,
                Constraint::BoundaryMinus,
            ),
        ],
    );
    boundary_rows(
        &mut b,
        &l,
        [
            (
                bd.ul_plus.as_ref(),
                Block::ULPlus,
                Constraint::OperandBoundaryPlus,
            ),
            (
                bd.ul_minus.as_ref(),
                Block::ULMinus,
                Constraint::OperandBoundaryMinus,
            ),
        ],
    );

    pin(
        &mut b,
        &l,
        Block::QB,
        1,
        &net.initial_places,
        &net.place_labels,
        Constraint::InitialCondition,
    );
    pin(
        &mut b,
        &l,
        Block::QE,
        1,
        &net.initial_transitions,
        &net.transition_labels,
        Constraint::InitialCondition,
    );
    pin(
        &mut b,
        &l,
        Block::QSL,
        1,
        &stacked.initial_places,
        &op_places,
        Constraint::InitialCondition,
    );

    let last = l.horizon + 1;
    let f = &inst.final_conditions;
    if let Some(v) = &f.q_b {
        pin(
            &mut b,
            &l,
            Block::QB,
            last,
            v,
            &net.place_labels,
            Constraint::FinalCondition,
        );
    }
    if let Some(v) = &f.q_e {
        pin(
            &mut b,
            &l,
            Block::QE,
            last,
            v,
            &net.transition_labels,
            Constraint::FinalCondition,
        );
    }
    if let Some(v) = &f.q_sl {
        pin(
            &mut b,
            &l,
            Block::QSL,
            last,
            v,
            &op_places,
            Constraint::FinalCondition,
        );
    }
    pin(
        &mut b,
        &l,
        Block::UMinus,
        last,
        &vec![0.0; l.n_transitions],
        &net.transition_labels,
        Constraint::FinalCondition,
    );
    pin(
        &mut b,
        &l,
        Block::ULMinus,
        last,
        &vec![0.0; l.n_operand_transitions],
        &op_transitions,
        Constraint::FinalCondition,
    );

    for k in 1..=last {
        for (block, labels) in [
            (Block::UMinus, &net.transition_labels),
            (Block::UPlus, &net.transition_labels),
            (Block::ULMinus, &op_transitions),
            (Block::ULPlus, &op_transitions),
        ] {
            for (i, label) in labels.iter().enumerate() {
                b.inequality(
                    [(l.col(block, k, i), -1.0)],
                    0.0,
                    Constraint::FiringNonnegativity,
                    Some(k),
                    label,
                );
            }
        }
    }
    for k in 1..=l.horizon {
        for (j, cap) in inst.capacities.iter().enumerate() {
            if let Some(cap) = cap {
                b.inequality(
                    [(l.col(Block::UMinus, k, j), 1.0)],
                    *cap,
                    Constraint::StepCapacity,
                    Some(k),
                    &net.transition_labels[j],
                );
            }
        }
    }

    let mut f_quad = vec![0.0; l.total()];
    let mut f_lin = vec![0.0; l.total()];
    let step = l.step_len();
    for k in 0..l.horizon {
        f_quad[k * step..(k + 1) * step].copy_from_slice(&inst.objective.f_quad);
        f_lin[k * step..(k + 1) * step].copy_from_slice(&inst.objective.f_lin);
    }
    Ok(AssembledProgram {
        program: b.finish(f_quad, f_lin)?,
        layout: l,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("solution status is {0}, trajectories need an optimal solution")]
    NotOptimal(Status),
    #[error("solution has {found} entries, layout expects {expected}")]
    Length { expected: usize, found: usize },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Markings for steps `1..=K+1` and firings for steps `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetTrajectory {
    pub places: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<f64>>,
    pub u_minus: Vec<Vec<f64>>,
    pub u_plus: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HfnmcfTrajectories {
    pub esn: NetTrajectory,
    pub operand_nets: Vec<NetTrajectory>,
    /// Largest gap between the extracted markings and a replay of the
    /// extracted firings from the initial markings.
    pub replay_residual: f64,
}

fn net_trajectory(
    l: &DecisionLayout,
    x: &[f64],
    blocks: &NetBlocks,
    place_range: (usize, usize),
    trans_range: (usize, usize),
) -> NetTrajectory {
    let cut =
        |block: Block, k: usize, (a, n): (usize, usize)| l.slice(x, block, k)[a..a + n].to_vec();
    NetTrajectory {
        places: (1..=l.n_steps())
            .map(|k| cut(blocks.q, k, place_range))
            .collect(),
        transitions: (1..=l.n_steps())
            .map(|k| cut(blocks.e, k, trans_range))
            .collect(),
        u_minus: (1..=l.horizon)
            .map(|k| cut(blocks.um, k, trans_range))
            .collect(),
        u_plus: (1..=l.horizon)
            .map(|k| cut(blocks.up, k, trans_range))
            .collect(),
    }
}

fn clipped_schedule(t: &NetTrajectory) -> Result<FiringSchedule, NetError> {
    // tiny negative firings from the solver are clipped; the clipping shows up in the gap
    let clip = |v: &Vec<Vec<f64>>| {
        v.iter()
            .map(|r| r.iter().map(|x| x.max(0.0)).collect())
            .collect()
    };
    FiringSchedule::new(clip(&t.u_minus), clip(&t.u_plus))
}

fn replay_gap(t: &NetTrajectory, replay: &Trajectory) -> f64 {
    let places = replay
        .places
        .iter()
        .flatten()
        .zip(t.places.iter().flatten());
    let transitions = replay
        .transitions
        .iter()
        .flatten()
        .zip(t.transitions.iter().flatten());
    places
        .chain(transitions)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Splits an optimal solution into per-net trajectories and replays them.
pub fn extract_trajectories(
    inst: &HfnmcfInstance,
    solution: &Solution,
) -> Result<HfnmcfTrajectories, ExtractError> {
    if solution.status != Status::Optimal {
        return Err(ExtractError::NotOptimal(solution.status));
    }
    let l = inst.validate()?;
    if solution.x.len() != l.total() {
        return Err(ExtractError::Length {
            expected: l.total(),
            found: solution.x.len(),
        });
    }
    let x = &solution.x;
    let esn = net_trajectory(&l, x, &ESN_BLOCKS, (0, l.n_places), (0, l.n_transitions));
    let mut residual = replay_gap(&esn, &simulate(&inst.esn, &clipped_schedule(&esn)?)?);
    let mut operand_nets = Vec::new();
    let (mut p0, mut t0) = (0, 0);
    for n in &inst.operand_nets {
        let (p, t) = (n.net.n_places(), n.net.n_transitions());
        let traj = net_trajectory(&l, x, &OPERAND_BLOCKS, (p0, p), (t0, t));
        let replay = simulate_operand_net(n, inst.esn.dt, &clipped_schedule(&traj)?)?;
        residual = residual.max(replay_gap(&traj, &replay));
        operand_nets.push(traj);
        p0 += p;
        t0 += t;
    }
    Ok(HfnmcfTrajectories {
        esn,
        operand_nets,
        replay_residual: residual,
    })
}

/// Assumptions under which the flow program reduces to a steady-state
/// estimator over a single balance block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseAssumption {
    /// The horizon is one step.
    SingleStep,
    /// Place markings start and end at zero, so nothing accumulates in buffers.
    NoAccumulation,
    /// Every transition completes within the step it starts.
    Instantaneous,
    /// No operand nets are attached.
    NoOperandState,
}

impl CollapseAssumption {
    pub fn describe(self) -> &'static str {
        match self {
            CollapseAssumption::SingleStep => "horizon must be a single step",
            CollapseAssumption::NoAccumulation => {
                "buffers must not accumulate operand (initial and terminal place markings zero)"
            }
            CollapseAssumption::Instantaneous => "all transition durations must be zero",
            CollapseAssumption::NoOperandState => "no operand nets may be attached",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("collapse assumptions violated: {}", .0.iter().map(|a| a.describe()).collect::<Vec<_>>().join("; "))]
pub struct CollapseError(pub Vec<CollapseAssumption>);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    /// Duration rows only tie `U+[k]` to `U−[k]` within the same step.
    pub duration_rows_trivial: bool,
    /// No operand-net, synchronization or operand boundary rows exist.
    pub operand_rows_absent: bool,
    /// After merging `U+` with `U−`, the place balance of step 1 reads
    /// `ΔT (M+ − M−) U = 0`.
    pub balance_is_incidence: bool,
    /// Boundary rows act on step-1 firings only, so they read `D U = C`.
    pub boundary_is_measurement: bool,
}

impl CollapseReport {
    pub fn all_pass(&self) -> bool {
        self.duration_rows_trivial
            && self.operand_rows_absent
            && self.balance_is_incidence
            && self.boundary_is_measurement
    }
}

fn collapse_preconditions(inst: &HfnmcfInstance) -> Vec<CollapseAssumption> {
    let mut failed = Vec::new();
    if inst.horizon != 1 {
        failed.push(CollapseAssumption::SingleStep);
    }
    let zero = |v: &[f64]| v.iter().all(|x| *x == 0.0);
    let pinned_zero = inst.final_conditions.q_b.as_deref().is_some_and(zero);
    if !(zero(&inst.esn.net.initial_places) && pinned_zero) {
        failed.push(CollapseAssumption::NoAccumulation);
    }
    if inst.esn.net.durations.iter().any(|&d| d != 0) {
        failed.push(CollapseAssumption::Instantaneous);
    }
    if !inst.operand_nets.is_empty()
        || inst.sync.is_some()
        || inst.boundary.ul_plus.is_some()
        || inst.boundary.ul_minus.is_some()
    {
        failed.push(CollapseAssumption::NoOperandState);
    }
    failed
}

/// Checks the assembled program of a single-step, no-storage, instantaneous,
/// operand-free instance against the structure of a steady-state estimator.
pub fn check_static_collapse(inst: &HfnmcfInstance) -> Result<CollapseReport, AssemblyError> {
    let failed = collapse_preconditions(inst);
    if !failed.is_empty() {
        return Err(shape("collapse", CollapseError(failed).to_string()));
    }
    let assembled = assemble_hfnmcf(inst)?;
    let p = &assembled.program;
    let l = &assembled.layout;
    let rows = p.qp.a_eq.rows();
    let row_of = |i: usize| -> &Vec<(usize, f64)> { &rows[i] };

    let um = |j: usize| l.col(Block::UMinus, 1, j);
    let up = |j: usize| l.col(Block::UPlus, 1, j);

    let duration = p.eq_rows_of(Constraint::EsnDuration);
    let duration_rows_trivial = duration.len() == l.n_transitions
        && duration.iter().enumerate().all(|(j, &r)| {
            let mut row = row_of(r).clone();
            row.sort_by_key(|e| e.0);
            let mut want = vec![(um(j), 1.0), (up(j), -1.0)];
            want.sort_by_key(|e| e.0);
            row == want
        });

    let operand_rows_absent = [
        Constraint::OperandPlaceBalance,
        Constraint::OperandTransitionBalance,
        Constraint::OperandDuration,
        Constraint::SyncPlus,
        Constraint::SyncMinus,
        Constraint::OperandBoundaryPlus,
        Constraint::OperandBoundaryMinus,
    ]
    .iter()
    .all(|&c| p.eq_rows_of(c).is_empty());

    // merge U+ into U− and drop the marking columns, which are pinned to zero
    let merge = |row: &Vec<(usize, f64)>| -> Vec<f64> {
        let mut dense = vec![0.0; l.n_transitions];
        for &(c, v) in row {
            for j in 0..l.n_transitions {
                if c == um(j) || c == up(j) {
                    dense[j] += v;
                }
            }
        }
        dense
    };
    let incidence = inst
        .esn
        .net
        .m_plus
        .sub(&inst.esn.net.m_minus)
        .map_err(QpError::from)?
        .to_dense();
    let balance = p.eq_rows_of(Constraint::EsnPlaceBalance);
    let dt = inst.esn.dt;
    let balance_is_incidence = balance.len() == l.n_places
        && balance.iter().enumerate().all(|(i, &r)| {
            let merged = merge(row_of(r));
            let q_cols_ok = row_of(r)
                .iter()
                .filter(|(c, _)| *c == l.col(Block::QB, 1, i) || *c == l.col(Block::QB, 2, i))
                .count()
                == 2;
            q_cols_ok
                && p.qp.b_eq[r] == 0.0
                && merged
                    .iter()
                    .zip(&incidence[i])
                    .all(|(a, m)| (a - m * dt).abs() <= 1e-15 * (1.0 + (m * dt).abs()))
        });

    let firing_cols = |c: usize| (0..l.n_transitions).any(|j| c == um(j) || c == up(j));
    let boundary: Vec<usize> = [Constraint::BoundaryPlus, Constraint::BoundaryMinus]
        .iter()
        .flat_map(|&c| p.eq_rows_of(c))
        .collect();
    let n_boundary = inst
        .boundary
        .u_plus
        .as_ref()
        .map_or(0, |r| r.matrix.n_rows())
        + inst
            .boundary
            .u_minus
            .as_ref()
            .map_or(0, |r| r.matrix.n_rows());
    let boundary_is_measurement = boundary.len() == n_boundary
        && boundary
            .iter()
            .all(|&r| row_of(r).iter().all(|&(c, _)| firing_cols(c)));

    Ok(CollapseReport {
        duration_rows_trivial,
        operand_rows_absent,
        balance_is_incidence,
        boundary_is_measurement,
    })
}

/// The assumptions `inst` violates; empty when the collapse applies.
pub fn collapse_violations(inst: &HfnmcfInstance) -> Vec<CollapseAssumption> {
    collapse_preconditions(inst)
}
