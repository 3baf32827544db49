//! Small synthetic instances: the mini energy-system fixture, single-chain
//! conversion checks, redundant data, capacity shortfall and a few
//! flow-program instances.

use std::f64::consts::PI;

use thiserror::Error;

use super::InstanceFile;
use crate::hfg::{Buffer, BufferKind, Capability, Operand, ProcessSpec, SystemArchitecture};
use crate::hfnmcf::{Block, BoundaryRows, HfnmcfInstance};
use crate::net::{OperandNet, PetriNet, SyncMatrices};
use crate::sparse::SparseMatrix;
use crate::wlse::{CapacitySet, MeasurementSeries, WlseProblem};

/// GJ of input per GJ of output.
pub const COAL_GENERATION: f64 = 3.102;
pub const GAS_GENERATION: f64 = 2.253;
pub const OIL_GENERATION: f64 = 3.289;
pub const NUCLEAR_GENERATION: f64 = 3.056;
pub const REFINING: f64 = 1.285;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("region count must be 1 or 2, got {0}")]
pub struct RegionCount(pub usize);

fn operand(id: &str, name: &str) -> Operand {
    Operand {
        id: id.into(),
        name: name.into(),
        unit: "GJ".into(),
    }
}

fn buffer(id: &str, name: &str, location: &str, kind: BufferKind) -> Buffer {
    Buffer {
        id: id.into(),
        name: name.into(),
        location: location.into(),
        kind,
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Seasonal monthly profile around `mean`.
fn seasonal(mean: f64, swing: f64, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|k| round1(mean * (1.0 + swing * (2.0 * PI * k as f64 / 12.0).cos())))
        .collect()
}

const REGIONS: [(&str, f64); 2] = [("north", 1.0), ("south", 0.6)];

/// Coal, natural gas, oil and electricity chains per region with the
/// conversion weights above, monthly over one year. Two regions add one
/// interstate transport capability per operand from `north` to `south`.
pub fn make_mini_ames(region_count: usize) -> Result<InstanceFile, RegionCount> {
    if !(1..=2).contains(&region_count) {
        return Err(RegionCount(region_count));
    }
    let horizon = 12;
    let operands = vec![
        operand("coal", "coal"),
        operand("gas", "natural gas"),
        operand("crude", "crude oil"),
        operand("oil", "processed oil"),
        operand("uranium", "nuclear fuel"),
        operand("elec", "electricity"),
    ];
    let mut buffers = Vec::new();
    let mut caps = Vec::new();
    let mut measurements = Vec::new();
    for &(r, scale) in &REGIONS[..region_count] {
        let id = |s: &str| format!("{s}_{r}");
        for (b, name, kind) in [
            ("mine", "coal mine", BufferKind::Terminal),
            ("gasfield", "gas field", BufferKind::Terminal),
            ("oilfield", "oil field", BufferKind::Terminal),
            ("refinery", "refinery", BufferKind::Plant),
            ("coalplant", "coal power plant", BufferKind::Plant),
            ("gasplant", "gas power plant", BufferKind::Plant),
            ("oilplant", "oil power plant", BufferKind::Plant),
            ("nukeplant", "nuclear power plant", BufferKind::Plant),
            ("city", "load center", BufferKind::Substation),
        ] {
            buffers.push(buffer(&id(b), &format!("{name} ({r})"), r, kind));
        }
        let at = |c: &str, p: ProcessSpec, b: &str| Capability::at(&id(c), p, &id(b));
        let between = |c: &str, p: ProcessSpec, o: &str, d: &str| {
            Capability::between(&id(c), p, &id(o), &id(d))
        };
        caps.extend([
            at(
                "mine_coal",
                ProcessSpec::injection("coal mining", "coal"),
                "mine",
            ),
            at(
                "extract_gas",
                ProcessSpec::injection("gas extraction", "gas"),
                "gasfield",
            ),
            at(
                "extract_crude",
                ProcessSpec::injection("crude extraction", "crude"),
                "oilfield",
            ),
            at(
                "supply_uranium",
                ProcessSpec::injection("nuclear fuel supply", "uranium"),
                "nukeplant",
            ),
            between(
                "rail_coal_plant",
                ProcessSpec::transport("coal transport", "coal"),
                "mine",
                "coalplant",
            ),
            between(
                "rail_coal_city",
                ProcessSpec::transport("coal transport", "coal"),
                "mine",
                "city",
            ),
            between(
                "pipe_gas_plant",
                ProcessSpec::transport("gas transport", "gas"),
                "gasfield",
                "gasplant",
            ),
            between(
                "pipe_gas_city",
                ProcessSpec::transport("gas transport", "gas"),
                "gasfield",
                "city",
            ),
            between(
                "pipe_crude",
                ProcessSpec::transport("crude transport", "crude"),
                "oilfield",
                "refinery",
            ),
            between(
                "truck_oil_plant",
                ProcessSpec::transport("oil transport", "oil"),
                "refinery",
                "oilplant",
            ),
            between(
                "truck_oil_city",
                ProcessSpec::transport("oil transport", "oil"),
                "refinery",
                "city",
            ),
            at(
                "refine",
                ProcessSpec::transformation("refining", "crude", REFINING, "oil"),
                "refinery",
            ),
            at(
                "gen_coal",
                ProcessSpec::transformation("coal generation", "coal", COAL_GENERATION, "elec"),
                "coalplant",
            ),
            at(
                "gen_gas",
                ProcessSpec::transformation("gas generation", "gas", GAS_GENERATION, "elec"),
                "gasplant",
            ),
            at(
                "gen_oil",
                ProcessSpec::transformation("oil generation", "oil", OIL_GENERATION, "elec"),
                "oilplant",
            )
            .with_capacity(round1(5.0 * scale)),
            at(
                "gen_nuclear",
                ProcessSpec::transformation(
                    "nuclear generation",
                    "uranium",
                    NUCLEAR_GENERATION,
                    "elec",
                ),
                "nukeplant",
            )
            .with_capacity(round1(30.0 * scale)),
            between(
                "wire_coal",
                ProcessSpec::transport("electric transmission", "elec"),
                "coalplant",
                "city",
            ),
            between(
                "wire_gas",
                ProcessSpec::transport("electric transmission", "elec"),
                "gasplant",
                "city",
            ),
            between(
                "wire_oil",
                ProcessSpec::transport("electric transmission", "elec"),
                "oilplant",
                "city",
            ),
            between(
                "wire_nuclear",
                ProcessSpec::transport("electric transmission", "elec"),
                "nukeplant",
                "city",
            ),
            at(
                "use_elec",
                ProcessSpec::withdrawal("electricity demand", "elec"),
                "city",
            ),
            at(
                "use_gas",
                ProcessSpec::withdrawal("gas demand", "gas"),
                "city",
            ),
            at(
                "use_oil",
                ProcessSpec::withdrawal("oil demand", "oil"),
                "city",
            ),
            at(
                "use_coal",
                ProcessSpec::withdrawal("coal demand", "coal"),
                "city",
            ),
        ]);
        let cap = |c: &str| id(c);
        measurements.extend([
            series_per_step(
                &id("elec_demand"),
                &cap("use_elec"),
                seasonal(100.0 * scale, 0.2, horizon),
            ),
            series_per_step(
                &id("gas_demand"),
                &cap("use_gas"),
                seasonal(60.0 * scale, 0.3, horizon),
            ),
            series_total(
                &id("coal_demand"),
                &cap("use_coal"),
                round1(120.0 * scale),
                horizon,
            ),
            series_total(
                &id("oil_demand"),
                &cap("use_oil"),
                round1(240.0 * scale),
                horizon,
            ),
            series_per_step(
                &id("crude_supply"),
                &cap("extract_crude"),
                vec![round1(40.0 * scale); horizon],
            ),
        ]);
    }
    if region_count == 2 {
        for (c, p, o, d) in [
            ("coal", "coal transport", "city", "city"),
            ("gas", "gas transport", "city", "city"),
            ("crude", "crude transport", "oilfield", "refinery"),
            ("oil", "oil transport", "city", "city"),
            (
                "uranium",
                "nuclear fuel transport",
                "nukeplant",
                "nukeplant",
            ),
            ("elec", "electric transmission", "city", "city"),
        ] {
            caps.push(Capability::between(
                &format!("interstate_{c}"),
                ProcessSpec::transport(p, c),
                &format!("{o}_north"),
                &format!("{d}_south"),
            ));
        }
    }
    Ok(InstanceFile {
        operands,
        buffers,
        capabilities: caps,
        measurements,
        capacities: Vec::new(),
        horizon,
        dt: 1.0,
    })
}

fn series_per_step(id: &str, cap: &str, values: Vec<f64>) -> MeasurementSeries {
    MeasurementSeries::per_step(id, &[cap], values)
}

fn series_total(id: &str, cap: &str, value: f64, horizon: usize) -> MeasurementSeries {
    MeasurementSeries::total(id, &[cap], value, horizon)
}

fn problem(
    arch: SystemArchitecture,
    measurements: Vec<MeasurementSeries>,
    horizon: usize,
) -> WlseProblem {
    WlseProblem {
        capacities: CapacitySet::from_architecture(&arch).expect("fixture capacities are valid"),
        architecture: arch,
        measurements,
        horizon,
        dt: 1.0,
    }
}

/// One conversion step fed by an injection and drained by a measured withdrawal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConversionChain {
    Coal,
    Gas,
    Oil,
    Nuclear,
    Refining,
}

impl ConversionChain {
    pub const ALL: [ConversionChain; 5] = [
        ConversionChain::Coal,
        ConversionChain::Gas,
        ConversionChain::Oil,
        ConversionChain::Nuclear,
        ConversionChain::Refining,
    ];

    pub fn weight(self) -> f64 {
        match self {
            ConversionChain::Coal => COAL_GENERATION,
            ConversionChain::Gas => GAS_GENERATION,
            ConversionChain::Oil => OIL_GENERATION,
            ConversionChain::Nuclear => NUCLEAR_GENERATION,
            ConversionChain::Refining => REFINING,
        }
    }

    /// `(input operand, output operand, process name)`.
    fn parts(self) -> (&'static str, &'static str, &'static str) {
        match self {
            ConversionChain::Coal => ("coal", "elec", "coal generation"),
            ConversionChain::Gas => ("gas", "elec", "gas generation"),
            ConversionChain::Oil => ("oil", "elec", "oil generation"),
            ConversionChain::Nuclear => ("uranium", "elec", "nuclear generation"),
            ConversionChain::Refining => ("crude", "oil", "refining"),
        }
    }

    /// Capability id of the input injection.
    pub fn input_capability(self) -> &'static str {
        "supply"
    }

    /// A 1 GJ withdrawal of the output, measured over one step.
    pub fn problem(self) -> WlseProblem {
        let (input, output, name) = self.parts();
        let arch = SystemArchitecture {
            operands: vec![operand(input, input), operand(output, output)],
            buffers: vec![buffer("plant", "plant", "r1", BufferKind::Plant)],
            capabilities: vec![
                Capability::at("supply", ProcessSpec::injection("supply", input), "plant"),
                Capability::at(
                    "convert",
                    ProcessSpec::transformation(name, input, self.weight(), output),
                    "plant",
                ),
                Capability::at("demand", ProcessSpec::withdrawal("demand", output), "plant"),
            ],
        };
        problem(
            arch,
            vec![series_per_step("demand", "demand", vec![1.0])],
            1,
        )
    }
}

pub const NY_GENERATION_A: f64 = 915_084_000.0;
pub const NY_GENERATION_B: f64 = 914_774_400.0;

/// Two equal-weight reports of total electric generation in one state.
pub fn ny_redundant() -> WlseProblem {
    let arch = SystemArchitecture {
        operands: vec![
            operand("gas", "natural gas"),
            operand("uranium", "nuclear fuel"),
            operand("elec", "electricity"),
        ],
        buffers: vec![
            buffer("gasplant_ny", "gas plant", "NY", BufferKind::Plant),
            buffer("nukeplant_ny", "nuclear plant", "NY", BufferKind::Plant),
            buffer("grid_ny", "grid", "NY", BufferKind::Substation),
        ],
        capabilities: vec![
            Capability::at(
                "supply_gas",
                ProcessSpec::injection("gas supply", "gas"),
                "gasplant_ny",
            ),
            Capability::at(
                "supply_uranium",
                ProcessSpec::injection("nuclear fuel supply", "uranium"),
                "nukeplant_ny",
            ),
            Capability::at(
                "gen_gas",
                ProcessSpec::transformation(
                    "generate electric power",
                    "gas",
                    GAS_GENERATION,
                    "elec",
                ),
                "gasplant_ny",
            ),
            Capability::at(
                "gen_nuclear",
                ProcessSpec::transformation(
                    "generate electric power",
                    "uranium",
                    NUCLEAR_GENERATION,
                    "elec",
                ),
                "nukeplant_ny",
            ),
            Capability::between(
                "wire_gas",
                ProcessSpec::transport("electric transmission", "elec"),
                "gasplant_ny",
                "grid_ny",
            ),
            Capability::between(
                "wire_nuclear",
                ProcessSpec::transport("electric transmission", "elec"),
                "nukeplant_ny",
                "grid_ny",
            ),
            Capability::at(
                "use_elec",
                ProcessSpec::withdrawal("electricity demand", "elec"),
                "grid_ny",
            ),
        ],
    };
    let w = 1.0 / (NY_GENERATION_A * NY_GENERATION_A);
    let gens = ["gen_gas", "gen_nuclear"];
    problem(
        arch,
        vec![
            MeasurementSeries::per_step("ny_generation_a", &gens, vec![NY_GENERATION_A])
                .with_weight(w),
            MeasurementSeries::per_step("ny_generation_b", &gens, vec![NY_GENERATION_B])
                .with_weight(w),
        ],
        1,
    )
}

/// Electricity demand of 10 against a generator limited to 6, next to a
/// gas chain whose 5 GJ demand can be met in full.
pub fn capacity_shortfall() -> WlseProblem {
    let arch = SystemArchitecture {
        operands: vec![
            operand("elec", "electricity"),
            operand("gas", "natural gas"),
        ],
        buffers: vec![buffer("city", "load center", "r1", BufferKind::Substation)],
        capabilities: vec![
            Capability::at("gen", ProcessSpec::injection("generation", "elec"), "city")
                .with_capacity(6.0),
            Capability::at(
                "use_elec",
                ProcessSpec::withdrawal("electricity demand", "elec"),
                "city",
            ),
            Capability::at(
                "supply_gas",
                ProcessSpec::injection("gas supply", "gas"),
                "city",
            ),
            Capability::at(
                "use_gas",
                ProcessSpec::withdrawal("gas demand", "gas"),
                "city",
            ),
        ],
    };
    problem(
        arch,
        vec![
            series_per_step("elec_demand", "use_elec", vec![10.0]).with_weight(1.0),
            series_per_step("gas_demand", "use_gas", vec![5.0]).with_weight(1.0),
        ],
        1,
    )
}

/// A single demand total spread over `horizon` steps.
pub fn annual_demand(total: f64, horizon: usize) -> WlseProblem {
    let arch = SystemArchitecture {
        operands: vec![operand("coal", "coal")],
        buffers: vec![buffer("city", "load center", "r1", BufferKind::Substation)],
        capabilities: vec![
            Capability::at(
                "supply",
                ProcessSpec::injection("coal mining", "coal"),
                "city",
            ),
            Capability::at(
                "use",
                ProcessSpec::withdrawal("coal demand", "coal"),
                "city",
            ),
        ],
    };
    problem(
        arch,
        vec![series_total("annual", "use", total, horizon)],
        horizon,
    )
}

fn grid(buses: &[&str], location: &str) -> Vec<Buffer> {
    buses
        .iter()
        .map(|b| buffer(b, b, location, BufferKind::Substation))
        .collect()
}

/// Three buses, two generators, three lines and two loads over one step,
/// with loads forced to 2 and 1 and nothing stored at the buses.
pub fn electric_micro() -> HfnmcfInstance {
    let arch = SystemArchitecture {
        operands: vec![operand("elec", "electricity")],
        buffers: grid(&["b1", "b2", "b3"], "grid"),
        capabilities: vec![
            Capability::at("gen1", ProcessSpec::injection("generation", "elec"), "b1"),
            Capability::at("gen2", ProcessSpec::injection("generation", "elec"), "b2"),
            Capability::between("line12", ProcessSpec::transport("line", "elec"), "b1", "b2"),
            Capability::between("line23", ProcessSpec::transport("line", "elec"), "b2", "b3"),
            Capability::between("line13", ProcessSpec::transport("line", "elec"), "b1", "b3"),
            Capability::at("load2", ProcessSpec::withdrawal("load", "elec"), "b2"),
            Capability::at("load3", ProcessSpec::withdrawal("load", "elec"), "b3"),
        ],
    };
    let mut inst = HfnmcfInstance::from_architecture(&arch, 1.0, 1).expect("fixture is valid");
    let d =
        SparseMatrix::from_triplets(2, 7, [(0, 5, 1.0), (1, 6, 1.0)]).expect("fixture is valid");
    let mut rows = BoundaryRows::constant(d, vec![1.0, 2.0], 1);
    rows.labels = vec!["load2".into(), "load3".into()];
    inst.boundary.u_minus = Some(rows);
    inst.final_conditions.q_b = Some(vec![0.0; 3]);
    inst.set_block_cost(Block::UMinus, 1.0, 0.0);
    inst.set_block_cost(Block::UPlus, 1.0, 0.0);
    inst
}

fn line_chain(duration: usize) -> SystemArchitecture {
    SystemArchitecture {
        operands: vec![operand("coal", "coal")],
        buffers: grid(&["a", "b"], "r1"),
        capabilities: vec![
            Capability::at("inject", ProcessSpec::injection("supply", "coal"), "a"),
            Capability::between("ship", ProcessSpec::transport("shipping", "coal"), "a", "b")
                .with_duration(duration),
            Capability::at("draw", ProcessSpec::withdrawal("demand", "coal"), "b"),
        ],
    }
}

/// Shipping takes one step; one unit is drawn at steps 2, 3 and 4.
pub fn lagged_transport() -> HfnmcfInstance {
    let k = 4;
    let mut inst =
        HfnmcfInstance::from_architecture(&line_chain(1), 1.0, k).expect("fixture is valid");
    let d = SparseMatrix::from_triplets(1, 3, [(0, 2, 1.0)]).expect("fixture is valid");
    inst.boundary.u_minus = Some(BoundaryRows {
        matrix: d,
        values: vec![vec![0.0], vec![1.0], vec![1.0], vec![1.0]],
        labels: vec!["draw".into()],
    });
    inst.final_conditions.q_b = Some(vec![0.0; 2]);
    inst.set_block_cost(Block::UMinus, 1.0, 0.0);
    inst.set_block_cost(Block::UPlus, 1.0, 0.0);
    inst
}

/// The instantaneous chain with an operand net counting shipped lots:
/// three lots wait at the source and each shipment moves one.
pub fn tracked_shipments() -> HfnmcfInstance {
    let k = 2;
    let mut inst =
        HfnmcfInstance::from_architecture(&line_chain(0), 1.0, k).expect("fixture is valid");
    let lots = PetriNet::new(
        SparseMatrix::from_triplets(2, 1, [(1, 0, 1.0)]).expect("fixture is valid"),
        SparseMatrix::from_triplets(2, 1, [(0, 0, 1.0)]).expect("fixture is valid"),
        vec![0],
        vec![3.0, 0.0],
        vec![0.0],
    )
    .and_then(|n| {
        n.with_labels(
            vec!["waiting".into(), "delivered".into()],
            vec!["move".into()],
        )
    })
    .expect("fixture is valid");
    let lambda = SparseMatrix::from_triplets(1, 3, [(0, 1, 1.0)]).expect("fixture is valid");
    let sync = SyncMatrices::new(lambda.clone(), lambda).expect("fixture is valid");
    inst = inst.with_operand_nets(
        vec![OperandNet {
            operand: "coal".into(),
            net: lots,
        }],
        sync,
    );
    let d = SparseMatrix::from_triplets(1, 3, [(0, 2, 1.0)]).expect("fixture is valid");
    inst.boundary.u_minus = Some(BoundaryRows::constant(d, vec![1.0], k));
    inst.final_conditions.q_b = Some(vec![0.0; 2]);
    for b in [Block::UMinus, Block::UPlus, Block::ULMinus, Block::ULPlus] {
        inst.set_block_cost(b, 1.0, 0.0);
    }
    inst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfg::validate_architecture;

    #[test]
    fn mini_ames_shapes() {
        let one = make_mini_ames(1).unwrap();
        assert!(validate_architecture(&one.architecture()).is_empty());
        assert!(!one
            .capabilities
            .iter()
            .any(|c| c.id.starts_with("interstate")));
        let two = make_mini_ames(2).unwrap();
        assert!(validate_architecture(&two.architecture()).is_empty());
        let interstate: Vec<_> = two
            .capabilities
            .iter()
            .filter(|c| c.id.starts_with("interstate"))
            .collect();
        assert_eq!(interstate.len(), two.operands.len());
        assert_eq!(make_mini_ames(3), Err(RegionCount(3)));
    }

    #[test]
    fn deterministic_ids() {
        assert_eq!(
            make_mini_ames(2).unwrap().to_json(),
            make_mini_ames(2).unwrap().to_json()
        );
    }
}
