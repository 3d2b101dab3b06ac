//! Compares backpropagated gradients with central differences on random
//! small configurations.

use stage::model::gradcheck::{gradcheck_suite, GRADCHECK_TOLERANCE};

fn main() -> stage::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let report = gradcheck_suite(seed, 20)?;
    for c in &report.cases {
        println!("{:>6} params  {:.2e}  {}", c.n_params, c.max_rel_error, c.description);
    }
    println!("max {:.2e} against tolerance {GRADCHECK_TOLERANCE:e}: {}", report.max_rel_error, if report.passed { "PASS" } else { "FAIL" });
    Ok(())
}
