//! Hetero-functional graph architecture types and incidence tensors.
//!
//! Matricized tensors use operand-major rows: the place of operand `i` at
//! buffer `y` is row `i * n_buffers + y`. Columns are capabilities in
//! architecture order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparse::{SparseError, SparseMatrix};

fn default_unit() -> String {
    "GJ".to_string()
}

fn one() -> f64 {
    1.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

fn is_zero(x: &usize) -> bool {
    *x == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operand {
    pub id: String,
    pub name: String,
    #[serde(default = "default_unit")]
    pub unit: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferKind {
    Plant,
    Terminal,
    Port,
    Substation,
    Junction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Buffer {
    pub id: String,
    pub name: String,
    pub location: String,
    pub kind: BufferKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Injection,
    Withdrawal,
    Transport,
    Storage,
    Transformation,
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProcessKind::Injection => "injection",
            ProcessKind::Withdrawal => "withdrawal",
            ProcessKind::Transport => "transport",
            ProcessKind::Storage => "storage",
            ProcessKind::Transformation => "transformation",
        };
        f.write_str(s)
    }
}

/// One operand consumed or produced by a process, in GJ per GJ of reference output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperandFlow {
    pub operand: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub coefficient: f64,
}

impl OperandFlow {
    pub fn new(operand: &str, coefficient: f64) -> Self {
        OperandFlow {
            operand: operand.to_string(),
            coefficient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    /// Process type label shared by capabilities that do the same thing
    /// (e.g. "Generate Electric Power from Coal").
    pub name: String,
    pub kind: ProcessKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<OperandFlow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<OperandFlow>,
}

impl ProcessSpec {
    pub fn injection(name: &str, operand: &str) -> Self {
        ProcessSpec {
            name: name.to_string(),
            kind: ProcessKind::Injection,
            inputs: vec![],
            outputs: vec![OperandFlow::new(operand, 1.0)],
        }
    }

    pub fn withdrawal(name: &str, operand: &str) -> Self {
        ProcessSpec {
            name: name.to_string(),
            kind: ProcessKind::Withdrawal,
            inputs: vec![OperandFlow::new(operand, 1.0)],
            outputs: vec![],
        }
    }

    pub fn transport(name: &str, operand: &str) -> Self {
        ProcessSpec {
            name: name.to_string(),
            kind: ProcessKind::Transport,
            inputs: vec![OperandFlow::new(operand, 1.0)],
            outputs: vec![OperandFlow::new(operand, 1.0)],
        }
    }

    pub fn storage(name: &str, operand: &str) -> Self {
        ProcessSpec {
            kind: ProcessKind::Storage,
            ..Self::transport(name, operand)
        }
    }

    /// Single-output transformation: `input_coefficient` GJ of input per GJ of output.
    pub fn transformation(name: &str, input: &str, input_coefficient: f64, output: &str) -> Self {
        ProcessSpec {
            name: name.to_string(),
            kind: ProcessKind::Transformation,
            inputs: vec![OperandFlow::new(input, input_coefficient)],
            outputs: vec![OperandFlow::new(output, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capability {
    pub id: String,
    pub process: ProcessSpec,
    pub origin: String,
    pub destination: String,
    /// Firing duration in time steps.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub duration: usize,
    /// Upper bound on flow per time step, GJ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

impl Capability {
    /// A capability located at one buffer.
    pub fn at(id: &str, process: ProcessSpec, buffer: &str) -> Self {
        Capability {
            id: id.to_string(),
            process,
            origin: buffer.to_string(),
            destination: buffer.to_string(),
            duration: 0,
            capacity: None,
        }
    }

    pub fn between(id: &str, process: ProcessSpec, origin: &str, destination: &str) -> Self {
        Capability {
            destination: destination.to_string(),
            ..Self::at(id, process, origin)
        }
    }

    pub fn with_capacity(mut self, capacity: f64) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_duration(mut self, duration: usize) -> Self {
        self.duration = duration;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemArchitecture {
    pub operands: Vec<Operand>,
    pub buffers: Vec<Buffer>,
    pub capabilities: Vec<Capability>,
}

impl SystemArchitecture {
    pub fn n_operands(&self) -> usize {
        self.operands.len()
    }

    pub fn n_buffers(&self) -> usize {
        self.buffers.len()
    }

    pub fn n_capabilities(&self) -> usize {
        self.capabilities.len()
    }

    pub fn n_places(&self) -> usize {
        self.operands.len() * self.buffers.len()
    }

    pub fn operand_index(&self, id: &str) -> Option<usize> {
        self.operands.iter().position(|o| o.id == id)
    }

    pub fn buffer_index(&self, id: &str) -> Option<usize> {
        self.buffers.iter().position(|b| b.id == id)
    }

    pub fn capability_index(&self, id: &str) -> Option<usize> {
        self.capabilities.iter().position(|c| c.id == id)
    }

    pub fn place_index(&self, operand: usize, buffer: usize) -> usize {
        operand * self.buffers.len() + buffer
    }

    /// `operand@buffer` labels in row order.
    pub fn place_labels(&self) -> Vec<String> {
        self.operands
            .iter()
            .flat_map(|o| {
                self.buffers
                    .iter()
                    .map(move |b| format!("{}@{}", o.id, b.id))
            })
            .collect()
    }

    pub fn capability_ids(&self) -> Vec<String> {
        self.capabilities.iter().map(|c| c.id.clone()).collect()
    }
}

/// A broken invariant: which entity and which rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl Violation {
    fn new(entity: &str, rule: &str) -> Self {
        Violation {
            entity: entity.to_string(),
            rule: rule.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

/// Checks every architecture invariant; an empty list means the architecture is valid.
pub fn validate_architecture(arch: &SystemArchitecture) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for o in &arch.operands {
        if o.id.is_empty() {
            out.push(Violation::new(&o.name, "id must be non-empty"));
        }
        if !seen.insert(o.id.as_str()) {
            out.push(Violation::new(&o.id, "duplicate operand id"));
        }
    }
    let mut seen = BTreeSet::new();
    for b in &arch.buffers {
        if b.id.is_empty() {
            out.push(Violation::new(&b.name, "id must be non-empty"));
        }
        if !seen.insert(b.id.as_str()) {
            out.push(Violation::new(&b.id, "duplicate buffer id"));
        }
        if b.location.is_empty() {
            out.push(Violation::new(&b.id, "buffer needs a location"));
        }
    }
    let operands: BTreeSet<&str> = arch.operands.iter().map(|o| o.id.as_str()).collect();
    let buffers: BTreeSet<&str> = arch.buffers.iter().map(|b| b.id.as_str()).collect();
    let mut seen = BTreeSet::new();
    for cap in &arch.capabilities {
        let id = cap.id.as_str();
        if id.is_empty() {
            out.push(Violation::new(&cap.process.name, "id must be non-empty"));
        }
        if !seen.insert(id) {
            out.push(Violation::new(id, "duplicate capability id"));
        }
        if !buffers.contains(cap.origin.as_str()) {
            out.push(Violation::new(id, "unknown origin buffer"));
        }
        if !buffers.contains(cap.destination.as_str()) {
            out.push(Violation::new(id, "unknown destination buffer"));
        }
        if let Some(c) = cap.capacity {
            if !(c.is_finite() && c >= 0.0) {
                out.push(Violation::new(id, "capacity must be nonnegative"));
            }
        }
        let p = &cap.process;
        for side in [&p.inputs, &p.outputs] {
            let mut listed = BTreeSet::new();
            for flow in side {
                if !operands.contains(flow.operand.as_str()) {
                    out.push(Violation::new(id, "unknown operand"));
                }
                if !(flow.coefficient.is_finite() && flow.coefficient > 0.0) {
                    out.push(Violation::new(id, "coefficient must be positive"));
                }
                if !listed.insert(flow.operand.as_str()) {
                    out.push(Violation::new(id, "operand listed twice"));
                }
            }
        }
        match p.kind {
            ProcessKind::Injection => {
                if !p.inputs.is_empty() || p.outputs.is_empty() {
                    out.push(Violation::new(id, "injection has outputs only"));
                }
            }
            ProcessKind::Withdrawal => {
                if !p.outputs.is_empty() || p.inputs.is_empty() {
                    out.push(Violation::new(id, "withdrawal has inputs only"));
                }
            }
            ProcessKind::Transport | ProcessKind::Storage => {
                let noun = p.kind.to_string();
                if p.inputs.len() != 1 || p.outputs.len() != 1 {
                    out.push(Violation::new(
                        id,
                        &format!("{noun} needs one input and one output"),
                    ));
                } else {
                    if p.inputs[0].operand != p.outputs[0].operand {
                        out.push(Violation::new(id, &format!("{noun} must preserve operand")));
                    }
                    if p.inputs[0].coefficient != 1.0 || p.outputs[0].coefficient != 1.0 {
                        out.push(Violation::new(id, &format!("{noun} coefficient must be 1")));
                    }
                }
            }
            ProcessKind::Transformation => {
                if p.inputs.is_empty() || p.outputs.is_empty() {
                    out.push(Violation::new(
                        id,
                        "transformation needs inputs and outputs",
                    ));
                }
            }
        }
        if p.kind != ProcessKind::Transport && cap.origin != cap.destination {
            out.push(Violation::new(id, "origin must equal destination"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidenceTensorEntry {
    pub operand: usize,
    pub buffer: usize,
    pub capability: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceTensors {
    pub negative: Vec<IncidenceTensorEntry>,
    pub positive: Vec<IncidenceTensorEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HfgError {
    #[error("capability `{capability}` references unknown {kind} `{reference}`")]
    UnknownReference {
        capability: String,
        kind: &'static str,
        reference: String,
    },
    #[error("entry ({operand}, {buffer}, {capability}) is out of range")]
    OutOfRange {
        operand: usize,
        buffer: usize,
        capability: usize,
    },
    #[error("duplicate tensor entry at row {row}, capability {capability}")]
    DuplicateEntry { row: usize, capability: usize },
    #[error("tensor weight at row {row}, capability {capability} must be positive")]
    NonPositiveWeight { row: usize, capability: usize },
    #[error("invalid architecture: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Negative entries pull each input from the origin buffer; positive entries
/// inject each output into the destination buffer.
pub fn build_incidence_tensors(arch: &SystemArchitecture) -> Result<IncidenceTensors, HfgError> {
    let operand_index: BTreeMap<&str, usize> = arch
        .operands
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.as_str(), i))
        .collect();
    let buffer_index: BTreeMap<&str, usize> = arch
        .buffers
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let lookup = |map: &BTreeMap<&str, usize>, cap: &Capability, kind: &'static str, id: &str| {
        map.get(id)
            .copied()
            .ok_or_else(|| HfgError::UnknownReference {
                capability: cap.id.clone(),
                kind,
                reference: id.to_string(),
            })
    };
    let mut negative = Vec::new();
    let mut positive = Vec::new();
    for (psi, cap) in arch.capabilities.iter().enumerate() {
        let origin = lookup(&buffer_index, cap, "buffer", &cap.origin)?;
        let destination = lookup(&buffer_index, cap, "buffer", &cap.destination)?;
        for flow in &cap.process.inputs {
            negative.push(IncidenceTensorEntry {
                operand: lookup(&operand_index, cap, "operand", &flow.operand)?,
                buffer: origin,
                capability: psi,
                weight: flow.coefficient,
            });
        }
        for flow in &cap.process.outputs {
            positive.push(IncidenceTensorEntry {
                operand: lookup(&operand_index, cap, "operand", &flow.operand)?,
                buffer: destination,
                capability: psi,
                weight: flow.coefficient,
            });
        }
    }
    Ok(IncidenceTensors { negative, positive })
}

/// Flattens tensor entries into a `(n_operands·n_buffers) × n_capabilities` matrix.
pub fn matricize(
    entries: &[IncidenceTensorEntry],
    n_operands: usize,
    n_buffers: usize,
    n_capabilities: usize,
) -> Result<SparseMatrix, HfgError> {
    let mut triplets = Vec::with_capacity(entries.len());
    let mut seen = BTreeSet::new();
    for e in entries {
        if e.operand >= n_operands || e.buffer >= n_buffers || e.capability >= n_capabilities {
            return Err(HfgError::OutOfRange {
                operand: e.operand,
                buffer: e.buffer,
                capability: e.capability,
            });
        }
        let row = e.operand * n_buffers + e.buffer;
        if !seen.insert((row, e.capability)) {
            return Err(HfgError::DuplicateEntry {
                row,
                capability: e.capability,
            });
        }
        if !(e.weight.is_finite() && e.weight > 0.0) {
            return Err(HfgError::NonPositiveWeight {
                row,
                capability: e.capability,
            });
        }
        triplets.push((row, e.capability, e.weight));
    }
    Ok(SparseMatrix::from_triplets(
        n_operands * n_buffers,
        n_capabilities,
        triplets,
    )?)
}

/// Inverse of [`matricize`]: entries in column-major order of the matrix.
pub fn entries_from_matrix(matrix: &SparseMatrix, n_buffers: usize) -> Vec<IncidenceTensorEntry> {
    matrix
        .iter()
        .map(|(row, col, weight)| IncidenceTensorEntry {
            operand: row / n_buffers,
            buffer: row % n_buffers,
            capability: col,
            weight,
        })
        .collect()
}

/// Matricized negative and positive tensors of a validated architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrices {
    pub m_minus: SparseMatrix,
    pub m_plus: SparseMatrix,
}

impl IncidenceMatrices {
    /// `M = M+ − M−`.
    pub fn net(&self) -> SparseMatrix {
        self.m_plus
            .sub(&self.m_minus)
            .expect("tensors share a shape")
    }
}

/// Validates the architecture and returns its matricized tensors.
pub fn incidence_matrices(arch: &SystemArchitecture) -> Result<IncidenceMatrices, HfgError> {
    let violations = validate_architecture(arch);
    if !violations.is_empty() {
        return Err(HfgError::Invalid(violations));
    }
    let tensors = build_incidence_tensors(arch)?;
    let (l, b, e) = (arch.n_operands(), arch.n_buffers(), arch.n_capabilities());
    Ok(IncidenceMatrices {
        m_minus: matricize(&tensors.negative, l, b, e)?,
        m_plus: matricize(&tensors.positive, l, b, e)?,
    })
}
