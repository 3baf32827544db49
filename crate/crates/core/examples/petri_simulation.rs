//! Steps a two-buffer shipping net by hand and shows what happens when a
//! schedule draws more than has arrived.

use hfgse::hfg::{Buffer, BufferKind, Capability, Operand, ProcessSpec, SystemArchitecture};
use hfgse::net::{simulate, EngineeringSystemNet, FiringSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let buffer = |id: &str| Buffer {
        id: id.into(),
        name: id.into(),
        location: "r1".into(),
        kind: BufferKind::Terminal,
    };
    let arch = SystemArchitecture {
        operands: vec![Operand {
            id: "coal".into(),
            name: "coal".into(),
            unit: "GJ".into(),
        }],
        buffers: vec![buffer("mine"), buffer("yard")],
        capabilities: vec![
            Capability::at("dig", ProcessSpec::injection("mining", "coal"), "mine"),
            Capability::between(
                "rail",
                ProcessSpec::transport("rail", "coal"),
                "mine",
                "yard",
            )
            .with_duration(2),
            Capability::at("burn", ProcessSpec::withdrawal("use", "coal"), "yard"),
        ],
    };
    let esn = EngineeringSystemNet::from_architecture(&arch, 1.0)?;

    // dig 5 and ship 4 at step 1; the shipment lands at step 3
    let u_minus = vec![
        vec![5.0, 4.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 3.0],
        vec![0.0, 0.0, 2.0],
    ];
    let u_plus = vec![
        vec![5.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![0.0, 4.0, 3.0],
        vec![0.0, 0.0, 2.0],
    ];
    let t = simulate(&esn, &FiringSchedule::new(u_minus, u_plus)?)?;
    println!("{:>5} {:>8} {:>8} {:>8}", "step", "mine", "yard", "in rail");
    for (k, (q, e)) in t.places.iter().zip(&t.transitions).enumerate() {
        println!("{:>5} {:>8} {:>8} {:>8}", k + 1, q[0], q[1], e[1]);
    }
    for v in &t.violations {
        println!("violation: {}", serde_json::to_string(v)?);
    }
    Ok(())
}
