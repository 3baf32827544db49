//! A three-variable program with one equality and two bounds, solved with
//! the active-set method.

use hfgse::qp::{solve_qp, QuadraticProgram, SolverOptions};
use hfgse::sparse::SparseMatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // minimize x0² + x1² + 2 x2² − 4 x0  subject to  x0 + x1 + x2 = 1,  x0 ≤ 0.5,  −x1 ≤ 0
    let qp = QuadraticProgram::new(
        vec![1.0, 1.0, 2.0],
        vec![-4.0, 0.0, 0.0],
        SparseMatrix::from_triplets(1, 3, [(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)])?,
        vec![1.0],
        SparseMatrix::from_triplets(2, 3, [(0, 0, 1.0), (1, 1, -1.0)])?,
        vec![0.5, 0.0],
    )?;
    let sol = solve_qp(&qp, &SolverOptions::default())?;
    println!("status     {}", sol.status);
    println!("x          {:?}", sol.x);
    println!("objective  {}", sol.objective);
    println!("duals      eq {:?} ineq {:?}", sol.duals_eq, sol.duals_ineq);
    println!("iterations {}", sol.iterations);
    println!("residuals  {:?}", sol.residuals);
    Ok(())
}
