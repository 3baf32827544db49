//! Minimum-cost flow over time with a one-step shipping delay, then a
//! replay of the optimal firings through the Petri dynamics.

use hfgse::hfnmcf::{assemble_hfnmcf, extract_trajectories};
use hfgse::io::fixtures::lagged_transport;
use hfgse::qp::{solve_qp, SolverOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = lagged_transport();
    let assembled = assemble_hfnmcf(&inst)?;
    let qp = &assembled.program.qp;
    println!(
        "{} variables, {} equality rows, {} inequality rows",
        qp.n_vars(),
        qp.b_eq.len(),
        qp.e_ineq.len()
    );
    let sol = solve_qp(qp, &SolverOptions::default())?;
    println!("status {} objective {}", sol.status, sol.objective);
    let t = extract_trajectories(&inst, &sol)?;
    let labels = &inst.esn.net.transition_labels;
    for (k, u) in t.esn.u_minus.iter().enumerate() {
        let fired: Vec<String> = labels
            .iter()
            .zip(u)
            .filter(|(_, v)| v.abs() > 1e-9)
            .map(|(l, v)| format!("{l}={v:.3}"))
            .collect();
        println!("step {}: {}", k + 1, fired.join(" "));
    }
    println!("replay residual {:.2e}", t.replay_residual);
    Ok(())
}
