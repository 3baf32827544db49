//! Row bookkeeping for assembled programs: every constraint row records which
//! constraint family, time step and entity produced it.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::qp::{QpError, QuadraticProgram};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    EsnPlaceBalance,
    EsnTransitionBalance,
    EsnDuration,
    OperandPlaceBalance,
    OperandTransitionBalance,
    OperandDuration,
    SyncPlus,
    SyncMinus,
    BoundaryPlus,
    BoundaryMinus,
    OperandBoundaryPlus,
    OperandBoundaryMinus,
    InitialCondition,
    FinalCondition,
    FiringNonnegativity,
    StepCapacity,
    Conservation,
    Measurement,
    TerminalFiring,
    FlowNonnegativity,
    Capacity,
}

impl Constraint {
    pub fn label(self) -> &'static str {
        match self {
            Constraint::EsnPlaceBalance => "esn_place_balance",
            Constraint::EsnTransitionBalance => "esn_transition_balance",
            Constraint::EsnDuration => "esn_duration",
            Constraint::OperandPlaceBalance => "operand_place_balance",
            Constraint::OperandTransitionBalance => "operand_transition_balance",
            Constraint::OperandDuration => "operand_duration",
            Constraint::SyncPlus => "sync_plus",
            Constraint::SyncMinus => "sync_minus",
            Constraint::BoundaryPlus => "boundary_plus",
            Constraint::BoundaryMinus => "boundary_minus",
            Constraint::OperandBoundaryPlus => "operand_boundary_plus",
            Constraint::OperandBoundaryMinus => "operand_boundary_minus",
            Constraint::InitialCondition => "initial_condition",
            Constraint::FinalCondition => "final_condition",
            Constraint::FiringNonnegativity => "firing_nonnegativity",
            Constraint::StepCapacity => "step_capacity",
            Constraint::Conservation => "conservation",
            Constraint::Measurement => "measurement",
            Constraint::TerminalFiring => "terminal_firing",
            Constraint::FlowNonnegativity => "flow_nonnegativity",
            Constraint::Capacity => "capacity",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowTag {
    pub constraint: Constraint,
    /// Time step, when the row belongs to one.
    pub k: Option<usize>,
    pub entity: String,
}

/// Collects equality and inequality rows with their tags.
#[derive(Debug, Clone)]
pub struct ProgramBuilder {
    n_vars: usize,
    eq: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    eq_tags: Vec<RowTag>,
    ineq: Vec<(usize, usize, f64)>,
    e: Vec<f64>,
    ineq_tags: Vec<RowTag>,
}

impl ProgramBuilder {
    pub fn new(n_vars: usize) -> Self {
        ProgramBuilder {
            n_vars,
            eq: Vec::new(),
            b: Vec::new(),
            eq_tags: Vec::new(),
            ineq: Vec::new(),
            e: Vec::new(),
            ineq_tags: Vec::new(),
        }
    }

    /// Adds `Σ coeff·x = rhs`. Repeated columns are summed.
    pub fn equality<I>(
        &mut self,
        terms: I,
        rhs: f64,
        constraint: Constraint,
        k: Option<usize>,
        entity: &str,
    ) where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let row = self.b.len();
        self.eq.extend(
            terms
                .into_iter()
                .filter(|t| t.1 != 0.0)
                .map(|(c, v)| (row, c, v)),
        );
        self.b.push(rhs);
        self.eq_tags.push(RowTag {
            constraint,
            k,
            entity: entity.to_string(),
        });
    }

    /// Adds `Σ coeff·x ≤ rhs`.
    pub fn inequality<I>(
        &mut self,
        terms: I,
        rhs: f64,
        constraint: Constraint,
        k: Option<usize>,
        entity: &str,
    ) where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let row = self.e.len();
        self.ineq.extend(
            terms
                .into_iter()
                .filter(|t| t.1 != 0.0)
                .map(|(c, v)| (row, c, v)),
        );
        self.e.push(rhs);
        self.ineq_tags.push(RowTag {
            constraint,
            k,
            entity: entity.to_string(),
        });
    }

    pub fn n_eq(&self) -> usize {
        self.b.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.e.len()
    }

    pub fn finish(self, f_quad: Vec<f64>, f_lin: Vec<f64>) -> Result<TaggedProgram, QpError> {
        let a = SparseMatrix::from_triplets_summed(self.b.len(), self.n_vars, self.eq)?;
        let d = SparseMatrix::from_triplets_summed(self.e.len(), self.n_vars, self.ineq)?;
        Ok(TaggedProgram {
            qp: QuadraticProgram::new(f_quad, f_lin, a, self.b, d, self.e)?,
            eq_tags: self.eq_tags,
            ineq_tags: self.ineq_tags,
        })
    }
}

/// A program plus one tag per equality row and per inequality row.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedProgram {
    pub qp: QuadraticProgram,
    pub eq_tags: Vec<RowTag>,
    pub ineq_tags: Vec<RowTag>,
}

impl TaggedProgram {
    /// Rows of one constraint family, as indices into the equality block.
    pub fn eq_rows_of(&self, constraint: Constraint) -> Vec<usize> {
        rows_of(&self.eq_tags, constraint)
    }

    pub fn ineq_rows_of(&self, constraint: Constraint) -> Vec<usize> {
        rows_of(&self.ineq_tags, constraint)
    }

    /// CSV with columns `row,equation,k,entity`. Equality rows come first;
    /// inequality rows follow and are numbered from zero within their block.
    pub fn write_provenance_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "equation", "k", "entity"])?;
        for tags in [&self.eq_tags, &self.ineq_tags] {
            for (row, tag) in tags.iter().enumerate() {
                let k = tag.k.map(|k| k.to_string()).unwrap_or_default();
                w.write_record([
                    row.to_string().as_str(),
                    tag.constraint.label(),
                    &k,
                    &tag.entity,
                ])?;
            }
        }
        w.flush()
    }
}

fn rows_of(tags: &[RowTag], constraint: Constraint) -> Vec<usize> {
    tags.iter()
        .enumerate()
        .filter(|(_, t)| t.constraint == constraint)
        .map(|(i, _)| i)
        .collect()
}
