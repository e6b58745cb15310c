//! Central finite-difference verification of analytic gradients.

use std::collections::BTreeMap;

use super::tensor::{DiffError, Tensor};

/// Result of a finite-difference sweep over one parameter set.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error over all coordinates of all parameters.
    pub max_rel_error: f64,
    /// Worst relative error per parameter name.
    pub per_param: BTreeMap<String, f64>,
}

/// Numerical gradient of `f` at `params` by central differences with step `h`.
pub fn finite_diff_grad<F>(
    f: &F,
    params: &BTreeMap<String, Tensor>,
    h: f64,
) -> Result<BTreeMap<String, Tensor>, DiffError>
where
    F: Fn(&BTreeMap<String, Tensor>) -> Result<f64, DiffError>,
{
    assert!(h > 0.0 && h <= 1e-2, "finite_diff_grad: h must be in (0, 1e-2]");
    let mut work = params.clone();
    let mut out = BTreeMap::new();
    for (name, tensor) in params {
        let mut grad = vec![0.0; tensor.numel()];
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let fp = f(&work)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let fm = f(&work)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(DiffError::NonFinite("finite_diff_grad"));
            }
            grad[i] = (fp - fm) / (2.0 * h);
        }
        out.insert(name.clone(), Tensor::new(tensor.shape().to_vec(), grad));
    }
    Ok(out)
}

/// Compare an analytic gradient map against central finite differences of
/// `f`. The relative error denominator is
/// `max(|analytic|, |numeric|, 1e-12)` per coordinate.
pub fn finite_diff_check<F>(
    f: &F,
    params: &BTreeMap<String, Tensor>,
    analytic: &BTreeMap<String, Tensor>,
    h: f64,
) -> Result<GradCheckReport, DiffError>
where
    F: Fn(&BTreeMap<String, Tensor>) -> Result<f64, DiffError>,
{
    let numeric = finite_diff_grad(f, params, h)?;
    let mut per_param = BTreeMap::new();
    let mut max_rel = 0.0f64;
    for (name, num) in &numeric {
        let ana = analytic
            .get(name)
            .unwrap_or_else(|| panic!("finite_diff_check: missing analytic gradient for {name}"));
        let mut worst = 0.0f64;
        for (&a, &n) in ana.data().iter().zip(num.data().iter()) {
            let denom = a.abs().max(n.abs()).max(1e-12);
            worst = worst.max((a - n).abs() / denom);
        }
        max_rel = max_rel.max(worst);
        per_param.insert(name.clone(), worst);
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        per_param,
    })
}
