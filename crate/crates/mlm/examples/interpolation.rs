//! Full-reference interpolation: with every training row as a reference
//! and distinct inputs, the model reproduces its training outputs exactly.
//!
//! Run with: cargo run --example interpolation

use mlm::{Dataset, MlmModel, ReferenceSet};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mlm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 40;
    let inputs = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
    let outputs = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
    let data = Dataset::new(inputs, outputs)?;

    let model = MlmModel::fit(&data, ReferenceSet::full(&data))?;
    println!("fitted on {n} rows with K = N = {}", model.k());
    println!(
        "distance-regression residual: {:.3e}",
        model.fit_residual_norm()
    );

    let mut worst: f64 = 0.0;
    for i in 0..n {
        let x: Vec<f64> = data.inputs().row(i).iter().copied().collect();
        let y = model.predict_scaled(&x)?;
        for j in 0..data.l() {
            worst = worst.max((y[j] - data.outputs()[(i, j)]).abs());
        }
    }
    println!("max |prediction - training output| over all rows: {worst:.3e}");

    // Models serialize to self-describing JSON and load back losslessly.
    let json = model.to_json()?;
    let restored = MlmModel::from_json(&json)?;
    assert_eq!(model.b(), restored.b());
    println!(
        "JSON round trip: {} bytes, coefficients identical",
        json.len()
    );
    Ok(())
}
