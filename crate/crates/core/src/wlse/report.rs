use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EstimationResult, MeasurementSeries, WlseError};
use crate::hfg::SystemArchitecture;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Process,
    Region,
    #[default]
    Both,
}

impl std::str::FromStr for Grouping {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "process" => Ok(Grouping::Process),
            "region" => Ok(Grouping::Region),
            "both" => Ok(Grouping::Both),
            _ => Err(format!(
                "unknown grouping `{s}` (expected process, region or both)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGroupRow {
    pub group: String,
    /// Sum of the measured values in the group.
    pub imposed: f64,
    pub absolute_error: f64,
    pub weighted_error: f64,
}

/// Process names and regions touched by a series' footprint.
fn group_of(
    series: &MeasurementSeries,
    arch: &SystemArchitecture,
    grouping: Grouping,
) -> Result<String, WlseError> {
    let mut processes = BTreeSet::new();
    let mut regions = BTreeSet::new();
    for id in &series.capabilities {
        let c = arch
            .capabilities
            .iter()
            .find(|c| &c.id == id)
            .ok_or_else(|| WlseError::Measurement {
                id: series.id.clone(),
                message: format!("unknown capability `{id}`"),
            })?;
        processes.insert(c.process.name.clone());
        let b = arch
            .buffer_index(&c.origin)
            .ok_or_else(|| WlseError::Measurement {
                id: series.id.clone(),
                message: format!("unknown buffer `{}`", c.origin),
            })?;
        regions.insert(arch.buffers[b].location.clone());
    }
    let join = |s: BTreeSet<String>| s.into_iter().collect::<Vec<_>>().join("+");
    Ok(match grouping {
        Grouping::Process => join(processes),
        Grouping::Region => join(regions),
        Grouping::Both => format!("{} | {}", join(processes), join(regions)),
    })
}

/// Errors summed per group, largest absolute error first.
pub fn error_report(
    result: &EstimationResult,
    measurements: &[MeasurementSeries],
    arch: &SystemArchitecture,
    grouping: Grouping,
) -> Result<Vec<ErrorGroupRow>, WlseError> {
    let by_id: BTreeMap<&str, &MeasurementSeries> =
        measurements.iter().map(|m| (m.id.as_str(), m)).collect();
    let mut groups: BTreeMap<String, ErrorGroupRow> = BTreeMap::new();
    for e in &result.errors {
        let s = by_id
            .get(e.series.as_str())
            .ok_or_else(|| WlseError::Measurement {
                id: e.series.clone(),
                message: "not among the measurements".into(),
            })?;
        let g = group_of(s, arch, grouping)?;
        let row = groups.entry(g.clone()).or_insert(ErrorGroupRow {
            group: g,
            imposed: 0.0,
            absolute_error: 0.0,
            weighted_error: 0.0,
        });
        row.imposed += e.imposed;
        row.absolute_error += e.error.abs();
        row.weighted_error += e.weighted;
    }
    let mut rows: Vec<ErrorGroupRow> = groups.into_values().collect();
    rows.sort_by(|a, b| {
        b.absolute_error
            .total_cmp(&a.absolute_error)
            .then_with(|| a.group.cmp(&b.group))
    });
    Ok(rows)
}
