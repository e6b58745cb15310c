//! Verify every loss gradient against central finite differences on a
//! fixed batch, then demonstrate the checker on a hand-written function.
//!
//! ```bash
//! cargo run -p vtalign --example gradient_check
//! ```

use std::collections::BTreeMap;

use vtalign::cli::{run_gradcheck, GRADCHECK_TOLERANCE};
use vtalign::diffmath::{finite_diff_check, DiffError, GradTape, Tensor};

fn main() {
    println!("loss gradients vs central finite differences:");
    for row in run_gradcheck(false).expect("fixed batch is regular") {
        println!(
            "  {:<10} max relative error {:>12.3e}  {}",
            row.component,
            row.max_rel_error,
            if row.pass { "PASS" } else { "FAIL" }
        );
    }
    println!("  tolerance {GRADCHECK_TOLERANCE}");

    // The same harness applies to any scalar function of named tensors.
    let mut params = BTreeMap::new();
    params.insert("x".to_string(), Tensor::new(vec![1, 3], vec![0.4, -1.1, 2.0]));
    let f = |p: &BTreeMap<String, Tensor>| -> Result<f64, DiffError> {
        let mut tape = GradTape::new();
        let x = tape.param("x", p["x"].clone())?;
        let sq = tape.row_dot(x, x)?;
        let loss = tape.mean_all(sq);
        Ok(tape.value(loss).item())
    };
    let mut tape = GradTape::new();
    let x = tape.param("x", params["x"].clone()).unwrap();
    let sq = tape.row_dot(x, x).unwrap();
    let loss = tape.mean_all(sq);
    let grads = tape.backward(loss).unwrap();
    let report = finite_diff_check(&f, &params, &grads, 1e-6).unwrap();
    println!("\nsquared-norm toy check: max relative error {:.3e}", report.max_rel_error);
}
