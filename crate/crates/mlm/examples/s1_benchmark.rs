//! A desk-scale run of the nested cross-validation protocol on the sine
//! synthetic: 3 outer folds for testing, 10 inner folds for choosing the
//! reference count, RMSE on [0, 1]-scaled targets.
//!
//! Run with: cargo run --release --example s1_benchmark

use mlm::evaluation::{gen_s1_synthetic, run_protocol, ProtocolConfig, S1Source};
use mlm::refselect::SelectionMethod;

fn main() -> mlm::Result<()> {
    let data = gen_s1_synthetic(400, 7, &S1Source::Uniform)?;
    let methods = vec![
        SelectionMethod::Random,
        SelectionMethod::KMeansPP,
        SelectionMethod::Upgma,
        SelectionMethod::Maximin,
    ];
    let grid = vec![5.0, 10.0, 20.0, 40.0, 100.0];
    let cfg = ProtocolConfig::new(methods.clone(), grid.clone(), 42);

    eprintln!("running {} cells...", 3 * 10 * methods.len() * grid.len());
    let report = run_protocol("s1", &data, &cfg)?;

    println!("mean test RMSE by method and K_rel (n = {}):", report.n);
    print!("{:<14}", "method");
    for krel in &grid {
        print!("{krel:>10}");
    }
    println!();
    for &method in &methods {
        print!("{:<14}", method.to_string());
        for &krel in &grid {
            let rmse = report
                .summary(method, krel)
                .and_then(|s| s.mean_test_rmse)
                .unwrap_or(f64::NAN);
            print!("{rmse:>10.4}");
        }
        println!();
    }

    println!();
    println!("chosen K_rel per outer split (smallest mean validation RMSE):");
    for &method in &methods {
        let chosen: Vec<String> = report
            .chosen
            .iter()
            .filter(|c| c.method == method)
            .map(|c| format!("{}", c.krel))
            .collect();
        println!("  {:<14} [{}]", method.to_string(), chosen.join(", "));
    }
    println!();
    println!(
        "hygiene: {}/{} checks passed, {:.1} s total",
        report.hygiene_checks - report.hygiene_violations,
        report.hygiene_checks,
        report.seconds
    );
    Ok(())
}
