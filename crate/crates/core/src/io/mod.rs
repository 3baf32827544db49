//! Instance files, bundled fixtures and result exports.

mod export;
pub mod fixtures;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::{
    choropleth_rows, format_number, interstate_rows, sankey, write_results, ChoroplethRow,
    ExportError, InterstateRow, ResultBundle, Sankey, SankeyLink, SankeyStep,
};

use crate::hfg::{
    validate_architecture, Buffer, Capability, Operand, SystemArchitecture, Violation,
};
use crate::wlse::{CapacitySet, MeasurementSeries, WlseError, WlseProblem};

fn default_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityEntry {
    pub capability: String,
    pub value: f64,
}

/// On-disk description of an estimation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub operands: Vec<Operand>,
    pub buffers: Vec<Buffer>,
    pub capabilities: Vec<Capability>,
    #[serde(default)]
    pub measurements: Vec<MeasurementSeries>,
    /// Per-step bounds in addition to those declared on capabilities.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub capacities: Vec<CapacityEntry>,
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl InstanceFile {
    pub fn architecture(&self) -> SystemArchitecture {
        SystemArchitecture {
            operands: self.operands.clone(),
            buffers: self.buffers.clone(),
            capabilities: self.capabilities.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }

    /// Validates and builds the estimation problem.
    pub fn problem(&self) -> Result<WlseProblem, LoadError> {
        let arch = self.architecture();
        let violations = validate_architecture(&arch);
        if !violations.is_empty() {
            return Err(LoadError::Invalid(violations));
        }
        let mut bounds: Vec<(usize, f64)> = arch
            .capabilities
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.capacity.map(|v| (i, v)))
            .collect();
        for c in &self.capacities {
            let i = arch.capability_index(&c.capability).ok_or_else(|| {
                LoadError::Invalid(vec![Violation {
                    entity: c.capability.clone(),
                    rule: "capacity names an unknown capability".into(),
                }])
            })?;
            bounds.push((i, c.value));
        }
        let problem = WlseProblem {
            capacities: CapacitySet::new(bounds)?,
            architecture: arch,
            measurements: self.measurements.clone(),
            horizon: self.horizon,
            dt: self.dt,
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("invalid instance: {0}")]
    Estimation(#[from] WlseError),
}

impl LoadError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LoadError::Io { .. } => 1,
            LoadError::Invalid(_) | LoadError::Estimation(_) => 3,
            LoadError::Parse { .. } => 5,
            LoadError::Schema { .. } => 6,
        }
    }
}

impl From<serde_json::Error> for LoadError {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        let (line, column) = (e.line(), e.column());
        // serde_json appends " at line L column C"; the position is reported separately
        let message = e.to_string();
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        match e.classify() {
            Category::Data => LoadError::Schema {
                line,
                column,
                message,
            },
            Category::Io => LoadError::Io {
                path: String::new(),
                source: std::io::Error::other(message),
            },
            Category::Syntax | Category::Eof => LoadError::Parse {
                line,
                column,
                message,
            },
        }
    }
}

pub fn parse_instance(text: &str) -> Result<InstanceFile, LoadError> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_instance(path: &Path) -> Result<InstanceFile, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text)
}

/// Reads, parses and validates an instance.
pub fn load_instance(path: &Path) -> Result<(InstanceFile, WlseProblem), LoadError> {
    let file = read_instance(path)?;
    let problem = file.problem()?;
    Ok((file, problem))
}
