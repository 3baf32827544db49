//! Incidence matrices of the single-region mini-AMES architecture.

use hfgse::hfg::{incidence_matrices, validate_architecture};
use hfgse::io::fixtures::make_mini_ames;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let arch = make_mini_ames(1)?.architecture();
    assert!(validate_architecture(&arch).is_empty());
    let m = incidence_matrices(&arch)?;
    let labels = arch.place_labels();
    println!(
        "{} places x {} capabilities, {} entries in M+, {} in M-",
        labels.len(),
        arch.n_capabilities(),
        m.m_plus.nnz(),
        m.m_minus.nnz()
    );
    let net = m.net();
    for id in ["refine_north", "gen_coal_north", "rail_coal_plant_north"] {
        let j = arch.capability_index(id).expect("fixture capability");
        let column: Vec<String> = net
            .column(j)
            .map(|(r, v)| format!("{:+} {}", v, labels[r]))
            .collect();
        println!("{id:>22}: {}", column.join(", "));
    }
    Ok(())
}
