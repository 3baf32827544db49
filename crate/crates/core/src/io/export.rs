use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hfg::{incidence_matrices, HfgError, ProcessKind, SystemArchitecture};
use crate::wlse::EstimationResult;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{what}: exported {found} but the capability flows sum to {expected}")]
    Aggregate {
        what: String,
        expected: f64,
        found: f64,
    },
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("result has {found} capabilities, architecture has {expected}")]
    Mismatch { expected: usize, found: usize },
    #[error(transparent)]
    Architecture(#[from] HfgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Shortest decimal that parses back to the same value; `-0` prints as `0`.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: String,
    pub target: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyStep {
    pub step: usize,
    pub nodes: Vec<String>,
    pub links: Vec<SankeyLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sankey {
    pub steps: Vec<SankeyStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChoroplethRow {
    pub region: String,
    pub operand: String,
    pub step: usize,
    /// Operand withdrawn from the system in the region.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterstateRow {
    pub origin: String,
    pub destination: String,
    pub operand: String,
    pub step: usize,
    pub value: f64,
}

fn process_node(name: &str) -> String {
    format!("process:{name}")
}

fn operand_node(id: &str) -> String {
    format!("operand:{id}")
}

fn check(what: String, expected: f64, found: f64) -> Result<(), ExportError> {
    if (expected - found).abs() <= 1e-9 * expected.abs().max(found.abs()).max(1e-300)
        || expected == found
    {
        Ok(())
    } else {
        Err(ExportError::Aggregate {
            what,
            expected,
            found,
        })
    }
}

fn check_shape(result: &EstimationResult, arch: &SystemArchitecture) -> Result<(), ExportError> {
    if result.flows.len() != arch.n_capabilities() {
        return Err(ExportError::Mismatch {
            expected: arch.n_capabilities(),
            found: result.flows.len(),
        });
    }
    Ok(())
}

/// Process-type nodes linked through operand nodes: `process → operand` for
/// production, `operand → process` for consumption.
pub fn sankey(result: &EstimationResult, arch: &SystemArchitecture) -> Result<Sankey, ExportError> {
    check_shape(result, arch)?;
    // (source, target) → capabilities and coefficients
    let mut links: BTreeMap<(String, String), Vec<(usize, f64)>> = BTreeMap::new();
    for (j, c) in arch.capabilities.iter().enumerate() {
        let p = process_node(&c.process.name);
        for f in &c.process.outputs {
            links
                .entry((p.clone(), operand_node(&f.operand)))
                .or_default()
                .push((j, f.coefficient));
        }
        for f in &c.process.inputs {
            links
                .entry((operand_node(&f.operand), p.clone()))
                .or_default()
                .push((j, f.coefficient));
        }
    }
    let nodes: Vec<String> = links
        .keys()
        .flat_map(|(s, t)| [s.clone(), t.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let m = incidence_matrices(arch)?;
    let n_b = arch.n_buffers();
    let mut steps = Vec::new();
    for k in 0..result.horizon() {
        let u: Vec<f64> = result.flows.iter().map(|f| f[k]).collect();
        let mut out = Vec::new();
        for ((source, target), terms) in &links {
            let value: f64 = terms.iter().map(|&(j, w)| w * u[j]).sum();
            out.push(SankeyLink {
                source: source.clone(),
                target: target.clone(),
                value,
            });
        }
        // independent pass through the incidence matrices
        for (o, op) in arch.operands.iter().enumerate() {
            let rows = o * n_b..(o + 1) * n_b;
            let produced: f64 = m
                .m_plus
                .iter()
                .filter(|(r, _, _)| rows.contains(r))
                .map(|(_, c, v)| v * u[c])
                .sum();
            let consumed: f64 = m
                .m_minus
                .iter()
                .filter(|(r, _, _)| rows.contains(r))
                .map(|(_, c, v)| v * u[c])
                .sum();
            let node = operand_node(&op.id);
            let into: f64 = out
                .iter()
                .filter(|l| l.target == node)
                .map(|l| l.value)
                .sum();
            let from: f64 = out
                .iter()
                .filter(|l| l.source == node)
                .map(|l| l.value)
                .sum();
            check(
                format!("sankey production of {} at step {}", op.id, k + 1),
                produced,
                into,
            )?;
            check(
                format!("sankey consumption of {} at step {}", op.id, k + 1),
                consumed,
                from,
            )?;
        }
        steps.push(SankeyStep {
            step: k + 1,
            nodes: nodes.clone(),
            links: out,
        });
    }
    Ok(Sankey { steps })
}

fn location_of(arch: &SystemArchitecture, buffer: &str) -> String {
    arch.buffer_index(buffer)
        .map(|b| arch.buffers[b].location.clone())
        .unwrap_or_default()
}

fn regions(arch: &SystemArchitecture) -> BTreeSet<String> {
    arch.buffers.iter().map(|b| b.location.clone()).collect()
}

fn selected_regions(
    arch: &SystemArchitecture,
    only: Option<&[String]>,
) -> Result<BTreeSet<String>, ExportError> {
    let all = regions(arch);
    match only {
        None => Ok(all),
        Some(list) => {
            if let Some(r) = list.iter().find(|r| !all.contains(*r)) {
                return Err(ExportError::UnknownRegion(r.clone()));
            }
            Ok(list.iter().cloned().collect())
        }
    }
}

/// Withdrawals per region, operand and step.
pub fn choropleth_rows(
    result: &EstimationResult,
    arch: &SystemArchitecture,
    only: Option<&[String]>,
) -> Result<Vec<ChoroplethRow>, ExportError> {
    check_shape(result, arch)?;
    let regions = selected_regions(arch, only)?;
    let m = incidence_matrices(arch)?;
    let n_b = arch.n_buffers();
    let mut rows = Vec::new();
    for region in &regions {
        for (o, op) in arch.operands.iter().enumerate() {
            let members: Vec<(usize, f64)> = arch
                .capabilities
                .iter()
                .enumerate()
                .filter(|(_, c)| {
                    c.process.kind == ProcessKind::Withdrawal
                        && &location_of(arch, &c.origin) == region
                })
                .flat_map(|(j, c)| {
                    c.process
                        .inputs
                        .iter()
                        .filter(|f| f.operand == op.id)
                        .map(move |f| (j, f.coefficient))
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            for k in 0..result.horizon() {
                let value: f64 = members.iter().map(|&(j, w)| w * result.flows[j][k]).sum();
                let expected: f64 = m
                    .m_minus
                    .iter()
                    .filter(|&(r, c, _)| r / n_b == o && members.iter().any(|&(j, _)| j == c))
                    .map(|(_, c, v)| v * result.flows[c][k])
                    .sum();
                check(
                    format!("withdrawal of {} in {region} at step {}", op.id, k + 1),
                    expected,
                    value,
                )?;
                rows.push(ChoroplethRow {
                    region: region.clone(),
                    operand: op.id.clone(),
                    step: k + 1,
                    value,
                });
            }
        }
    }
    Ok(rows)
}

/// Transport between buffers in different regions, summed per region pair.
pub fn interstate_rows(
    result: &EstimationResult,
    arch: &SystemArchitecture,
    only: Option<&[String]>,
) -> Result<Vec<InterstateRow>, ExportError> {
    check_shape(result, arch)?;
    let regions = selected_regions(arch, only)?;
    let mut groups: BTreeMap<(String, String, String), Vec<usize>> = BTreeMap::new();
    for (j, c) in arch.capabilities.iter().enumerate() {
        if c.process.kind != ProcessKind::Transport {
            continue;
        }
        let (o, d) = (
            location_of(arch, &c.origin),
            location_of(arch, &c.destination),
        );
        if o == d || !(regions.contains(&o) || regions.contains(&d)) {
            continue;
        }
        let operand = c.process.inputs[0].operand.clone();
        groups.entry((o, d, operand)).or_default().push(j);
    }
    let mut rows = Vec::new();
    for ((origin, destination, operand), members) in groups {
        for k in 0..result.horizon() {
            let value: f64 = members.iter().map(|&j| result.flows[j][k]).sum();
            rows.push(InterstateRow {
                origin: origin.clone(),
                destination: destination.clone(),
                operand: operand.clone(),
                step: k + 1,
                value,
            });
        }
    }
    // every interstate flow is accounted for exactly once
    for k in 0..result.horizon() {
        let direct: f64 = arch
            .capabilities
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.process.kind == ProcessKind::Transport
                    && location_of(arch, &c.origin) != location_of(arch, &c.destination)
                    && (regions.contains(&location_of(arch, &c.origin))
                        || regions.contains(&location_of(arch, &c.destination)))
            })
            .map(|(j, _)| result.flows[j][k])
            .sum();
        let exported: f64 = rows
            .iter()
            .filter(|r| r.step == k + 1)
            .map(|r| r.value)
            .sum();
        check(
            format!("interstate total at step {}", k + 1),
            direct,
            exported,
        )?;
    }
    Ok(rows)
}

/// Everything written by [`write_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResultBundle {
    pub sankey: Sankey,
    pub choropleth: Vec<ChoroplethRow>,
    pub interstate: Vec<InterstateRow>,
}

impl ResultBundle {
    pub fn build(
        result: &EstimationResult,
        arch: &SystemArchitecture,
        regions: Option<&[String]>,
    ) -> Result<Self, ExportError> {
        Ok(ResultBundle {
            sankey: sankey(result, arch)?,
            choropleth: choropleth_rows(result, arch, regions)?,
            interstate: interstate_rows(result, arch, regions)?,
        })
    }
}

fn write_csv<P: AsRef<Path>>(
    path: P,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `flows.csv`, `errors.csv`, `sankey.json`, `choropleth.csv`,
/// `interstate.csv` and `result.json` into `dir`.
pub fn write_results(
    dir: &Path,
    result: &EstimationResult,
    arch: &SystemArchitecture,
    regions: Option<&[String]>,
) -> Result<ResultBundle, ExportError> {
    let bundle = ResultBundle::build(result, arch, regions)?;
    fs::create_dir_all(dir)?;
    let n = format_number;
    write_csv(
        dir.join("flows.csv"),
        &["capability", "step", "value"],
        result
            .capabilities
            .iter()
            .zip(&result.flows)
            .flat_map(|(c, f)| {
                f.iter()
                    .enumerate()
                    .map(move |(k, v)| vec![c.clone(), (k + 1).to_string(), n(*v)])
            }),
    )?;
    write_csv(
        dir.join("errors.csv"),
        &[
            "series",
            "bucket",
            "imposed",
            "estimated",
            "error",
            "weight",
            "weighted",
        ],
        result.errors.iter().map(|e| {
            vec![
                e.series.clone(),
                (e.bucket + 1).to_string(),
                n(e.imposed),
                n(e.estimated),
                n(e.error),
                n(e.weight),
                n(e.weighted),
            ]
        }),
    )?;
    write_csv(
        dir.join("choropleth.csv"),
        &["region", "operand", "step", "value"],
        bundle.choropleth.iter().map(|r| {
            vec![
                r.region.clone(),
                r.operand.clone(),
                r.step.to_string(),
                n(r.value),
            ]
        }),
    )?;
    write_csv(
        dir.join("interstate.csv"),
        &["origin", "destination", "operand", "step", "value"],
        bundle.interstate.iter().map(|r| {
            vec![
                r.origin.clone(),
                r.destination.clone(),
                r.operand.clone(),
                r.step.to_string(),
                n(r.value),
            ]
        }),
    )?;
    let mut sankey = serde_json::to_string_pretty(&bundle.sankey).expect("sankey serializes");
    sankey.push('\n');
    fs::write(dir.join("sankey.json"), sankey)?;
    let mut json = serde_json::to_string_pretty(result).expect("result serializes");
    json.push('\n');
    fs::write(dir.join("result.json"), json)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::fixtures::make_mini_ames;
    use crate::qp::{Residuals, Status};

    fn zero_result(arch: &SystemArchitecture, horizon: usize) -> EstimationResult {
        EstimationResult {
            capabilities: arch.capability_ids(),
            flows: vec![vec![0.0; horizon]; arch.n_capabilities()],
            errors: Vec::new(),
            objective: 0.0,
            alpha: 0.0,
            iterations: 0,
            status: Status::Optimal,
            residuals: Residuals::default(),
            conservation_residual: 0.0,
            measurement_residual: 0.0,
            capacity_binding: Vec::new(),
        }
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 914_929_200.0, -2.5, 3.102] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(6.0), "6");
    }

    #[test]
    fn zero_flows_export() {
        let arch = make_mini_ames(2).unwrap().architecture();
        let b = ResultBundle::build(&zero_result(&arch, 2), &arch, None).unwrap();
        assert_eq!(b.sankey.steps.len(), 2);
        assert!(b.sankey.steps[0].links.iter().all(|l| l.value == 0.0));
        assert!(b.interstate.iter().all(|r| r.value == 0.0));
        assert_eq!(b.interstate.len(), 6 * 2);
        assert!(matches!(
            ResultBundle::build(
                &zero_result(&arch, 1),
                &arch,
                Some(&["atlantis".to_string()])
            ),
            Err(ExportError::UnknownRegion(_))
        ));
    }
}
