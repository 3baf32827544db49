//! Estimates monthly flows on the two-region mini-AMES fixture and prints the
//! generation mix and the largest data errors.

use hfgse::io::fixtures::make_mini_ames;
use hfgse::wlse::{error_report, estimate, AlphaRule, Grouping, WlseOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = make_mini_ames(2)?;
    let problem = file.problem()?;
    let options = WlseOptions {
        alpha: AlphaRule::ErrorScaled,
        ..Default::default()
    };
    let result = estimate(&problem, &options)?;
    println!(
        "status {} in {} iterations, alpha {:.3e}, conservation {:.1e}",
        result.status, result.iterations, result.alpha, result.conservation_residual
    );
    for region in ["north", "south"] {
        print!("{region:>6} generation, month 1:");
        for fuel in ["coal", "gas", "oil", "nuclear"] {
            let v = result
                .flow(&format!("gen_{fuel}_{region}"), 1)
                .unwrap_or(0.0);
            print!(" {fuel} {v:.2}");
        }
        println!();
    }
    for b in result.capacity_binding.iter().take(3) {
        println!(
            "binding: {} at step {} (bound {})",
            b.capability, b.step, b.bound
        );
    }
    let rows = error_report(
        &result,
        &file.measurements,
        &problem.architecture,
        Grouping::Both,
    )?;
    for r in rows.iter().take(5) {
        println!(
            "{:<32} {:>10.3} of {:>8.1}",
            r.group, r.absolute_error, r.imposed
        );
    }
    Ok(())
}
