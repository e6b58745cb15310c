//! Minimal dense-tensor math with reverse-mode gradients and a
//! finite-difference verifier.
//!
//! All arithmetic is 64-bit. Operations are pure value functions in
//! [`tensor`]; [`tape::GradTape`] records them for the backward sweep;
//! [`gradcheck`] verifies analytic gradients against central differences.

pub mod gradcheck;
pub mod tape;
pub mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_grad, GradCheckReport};
pub use tape::{GradTape, NodeId};
pub use tensor::{
    cosine_matrix, l2_normalize_rows, logsumexp, matmul, matmul_nt, relu, DiffError, Tensor,
    NORM_EPS,
};

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    /// Property: cosine values of normalized rows stay within [-1, 1] up to
    /// roundoff, and logsumexp is bracketed by max and max + ln(n).
    #[test]
    fn cosine_bounds_and_lse_bracket() {
        let mut rng = crate::rng::Rng::new(99);
        for _ in 0..50 {
            let m = 1 + rng.next_below(5);
            let n = 1 + rng.next_below(5);
            let d = 2 + rng.next_below(6);
            let u = Tensor::new(
                vec![m, d],
                (0..m * d).map(|_| rng.next_gaussian()).collect(),
            );
            let v = Tensor::new(
                vec![n, d],
                (0..n * d).map(|_| rng.next_gaussian()).collect(),
            );
            let (un, _) = l2_normalize_rows(&u, NORM_EPS).unwrap();
            let (vn, _) = l2_normalize_rows(&v, NORM_EPS).unwrap();
            let c = cosine_matrix(&un, &vn).unwrap();
            for &x in c.data() {
                assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&x), "cosine {x}");
            }

            let row: Vec<f64> = (0..n).map(|_| rng.next_gaussian() * 10.0).collect();
            let lse = logsumexp(&row).unwrap();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lse >= max - 1e-12);
            assert!(lse <= max + (n as f64).ln() + 1e-12);
        }
    }

    /// Analytic gradients of every registered op match central differences at
    /// random points bounded away from non-smooth sets.
    #[test]
    fn composite_pipeline_gradient_matches_finite_differences() {
        let mut rng = crate::rng::Rng::new(7);
        let w = Tensor::new(vec![4, 3], (0..12).map(|_| rng.next_gaussian()).collect());
        let x = Tensor::new(vec![5, 4], (0..20).map(|_| rng.next_gaussian()).collect());
        let b = Tensor::new(vec![3], (0..3).map(|_| rng.next_gaussian()).collect());

        let mut params = BTreeMap::new();
        params.insert("w".to_string(), w);
        params.insert("x".to_string(), x);
        params.insert("b".to_string(), b);

        let run = |p: &BTreeMap<String, Tensor>| -> Result<(f64, BTreeMap<String, Tensor>), DiffError> {
            let mut tape = GradTape::new();
            let w = tape.param("w", p["w"].clone())?;
            let x = tape.param("x", p["x"].clone())?;
            let b = tape.param("b", p["b"].clone())?;
            let h = tape.matmul(x, w)?;
            let hb = tape.add_row_bias(h, b)?;
            let r = tape.relu(hb);
            let nrm = tape.l2_normalize_rows(r)?;
            let pooled = tape.mean_pool_groups(nrm, vec![vec![0, 1], vec![2, 3, 4]])?;
            let pn = tape.l2_normalize_rows(pooled)?;
            let sims = tape.matmul_nt(nrm, pn)?;
            let scaled = tape.scale(sims, 1.0 / 0.07);
            let lse = tape.logsumexp_rows(scaled)?;
            let picked = tape.gather_rows(nrm, vec![0, 2, 4, 1, 3])?;
            let pos = tape.row_dot(picked, nrm)?;
            let diff = tape.sub(lse, pos)?;
            let loss = tape.mean_all(diff);
            let grads = tape.backward(loss)?;
            Ok((tape.value(loss).item(), grads))
        };

        let (_, analytic) = run(&params).unwrap();
        let f = |p: &BTreeMap<String, Tensor>| run(p).map(|(v, _)| v);
        let report = finite_diff_check(&f, &params, &analytic, 1e-5).unwrap();
        assert!(
            report.max_rel_error < 1e-5,
            "max rel error {}",
            report.max_rel_error
        );
    }
}
