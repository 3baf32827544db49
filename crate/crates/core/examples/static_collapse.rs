//! Checks that a one-step, storage-free flow program has the structure of a
//! static estimator, then breaks each assumption in turn.

use hfgse::hfnmcf::{check_static_collapse, collapse_violations};
use hfgse::io::fixtures::{electric_micro, lagged_transport, tracked_shipments};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let micro = electric_micro();
    let report = check_static_collapse(&micro)?;
    println!("electric micro: {report:?}");
    println!("all assertions hold: {}", report.all_pass());

    let mut stored = electric_micro();
    stored.final_conditions.q_b = None;
    for (name, inst) in [
        ("lagged transport", lagged_transport()),
        ("tracked shipments", tracked_shipments()),
        ("free terminal storage", stored),
    ] {
        println!("{name}:");
        for a in collapse_violations(&inst) {
            println!("  {}", a.describe());
        }
    }
    Ok(())
}
