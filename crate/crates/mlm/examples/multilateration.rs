//! Output recovery in isolation: build the localization linear system from
//! exact anchor distances, recover the hidden point, and inspect the
//! conditioning diagnostics and the squared-residual cost.
//!
//! Run with: cargo run --example multilateration

use mlm::{build_lls, lls_diagnostics, multilateration_cost};
use nalgebra::DMatrix;

fn main() -> mlm::Result<()> {
    // Three anchors in the plane and a hidden point at (0.3, 0.4).
    let anchors = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let hidden = [0.3, 0.4];
    let delta: Vec<f64> = (0..3)
        .map(|i| {
            let dx: f64 = hidden[0] - anchors[(i, 0)];
            let dy: f64 = hidden[1] - anchors[(i, 1)];
            (dx * dx + dy * dy).sqrt()
        })
        .collect();
    println!("anchor distances: {delta:.6?}");

    // Anchor 0 serves as the benchmark anchor node; the other anchors
    // yield one linear equation each.
    let system = build_lls(&anchors, &delta, &[0.0; 3], 0)?;
    let solution = system.solve()?;
    println!(
        "recovered point: ({:.12}, {:.12})  degenerate: {}",
        solution.output[0], solution.output[1], solution.degenerate
    );

    let diag = lls_diagnostics(&system, None)?;
    println!(
        "conditioning psi = {:.6} (1 = perfectly conditioned)",
        diag.psi
    );

    // The recovered point sits at the global minimum of the cost.
    let at_solution = multilateration_cost(solution.output.as_slice(), &anchors, &delta)?;
    let nearby = multilateration_cost(&[0.31, 0.40], &anchors, &delta)?;
    println!("cost at solution: {at_solution:.3e}, cost 0.01 away: {nearby:.3e}");
    Ok(())
}
