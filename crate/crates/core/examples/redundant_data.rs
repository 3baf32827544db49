//! Two equal-weight reports of the same state-wide generation total are
//! reconciled at their midpoint.

use hfgse::io::fixtures::{ny_redundant, NY_GENERATION_A, NY_GENERATION_B};
use hfgse::wlse::{estimate, AlphaRule, WlseOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = ny_redundant();
    let options = WlseOptions {
        alpha: AlphaRule::Fixed(0.0),
        ..Default::default()
    };
    let result = estimate(&problem, &options)?;
    let total =
        result.flow("gen_gas", 1).unwrap_or(0.0) + result.flow("gen_nuclear", 1).unwrap_or(0.0);
    println!("reports   {NY_GENERATION_A} and {NY_GENERATION_B}");
    println!("estimate  {total:.1}");
    let abs: f64 = result.errors.iter().map(|e| e.error.abs()).sum();
    for e in &result.errors {
        println!("  {:<10} error {:+.1}", e.series, e.error);
    }
    println!("total absolute error {abs:.1}");
    Ok(())
}
