//! Solves a small convex QP exactly and inspects its active set and
//! multipliers, then dispatches the two-producer system without uncertainty.
//!
//! `cargo run --release --example qp_kernel`

use ccmkt::qp::{solve_qp, QpProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // min (x - 1)^2 + (y - 2)^2  s.t.  x + y <= 2,  x >= 0,  y >= 0
    let qp = QpProblem::builder(2)
        .hessian_diag(&[2.0, 2.0])
        .linear(&[-2.0, -4.0])
        .ineq(&[1.0, 1.0], 2.0)
        .ineq(&[-1.0, 0.0], 0.0)
        .ineq(&[0.0, -1.0], 0.0)
        .build()?;
    let sol = solve_qp(&qp, 0.0)?;
    println!("projection onto the simplex");
    println!("  x = {:?}", sol.x());
    println!("  active rows = {:?}", sol.active_set());
    println!("  multipliers = {:?}", sol.duals_ineq());
    println!("  objective = {:.6}", sol.objective);

    // Economic dispatch: min sum c2 p^2 + c1 p  s.t.  p1 + p2 = 50, bounds.
    let qp = QpProblem::builder(2)
        .hessian_diag(&[2.0 * 1.0, 2.0 * 3.0])
        .linear(&[10.0, 3.0])
        .eq(&[1.0, 1.0], 50.0)
        .ineq(&[1.0, 0.0], 32.0)
        .ineq(&[-1.0, 0.0], -10.0)
        .ineq(&[0.0, 1.0], 44.0)
        .ineq(&[0.0, -1.0], -10.0)
        .build()?;
    let sol = solve_qp(&qp, 0.0)?;
    println!("deterministic dispatch");
    println!("  p = {:?}", sol.x());
    // Multiplier convention: Qx + q + A_ineq' mu + A_eq' nu = 0, so the
    // marginal price of energy is -nu.
    println!("  energy price = {:.3} $/MWh", -sol.duals_eq()[0]);
    println!("  capacity limit of producer 1 binding: {}", sol.is_active(0));
    Ok(())
}
