//! Dense row-major f64 tensor and the value-level math used everywhere.
//!
//! These functions compute forward values only; gradient recording lives in
//! [`crate::diffmath::tape`], which calls back into this module so replay and
//! original execution share one code path.

use std::fmt;

/// Normalization guard: rows with l2 norm below this are flagged degenerate.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum DiffError {
    /// Inner/row dimensions do not agree for the attempted operation.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Operation needs a nonempty input.
    EmptyInput(&'static str),
    /// A non-finite value entered or left an operation.
    NonFinite(&'static str),
    /// Backward was requested from a node that is not a scalar.
    NotScalar { shape: Vec<usize> },
    /// Backward was requested on an empty tape.
    EmptyTape,
}

impl fmt::Display for DiffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            DiffError::EmptyInput(op) => write!(f, "{op}: empty input"),
            DiffError::NonFinite(op) => write!(f, "{op}: non-finite value"),
            DiffError::NotScalar { shape } => {
                write!(f, "backward: loss node has shape {shape:?}, expected a scalar")
            }
            DiffError::EmptyTape => write!(f, "backward: tape is empty"),
        }
    }
}

impl std::error::Error for DiffError {}

/// Dense row-major array of f64 with shape metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build from parts. Panics if the element count does not match the
    /// shape; this is a programming error, not a runtime condition.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        assert!(shape.iter().all(|&d| d >= 1), "shape entries must be >= 1");
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; numel])
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1], vec![v])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "from_rows: need at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when viewed as a matrix ([m, n]) or vector ([m]).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns when viewed as a matrix; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn expect_matrix(t: &Tensor, op: &'static str) -> Result<(usize, usize), DiffError> {
    if t.is_matrix() {
        Ok((t.shape[0], t.shape[1]))
    } else {
        Err(DiffError::ShapeMismatch {
            op,
            lhs: t.shape.clone(),
            rhs: vec![],
        })
    }
}

/// Standard matrix product `a[m x k] * b[k x n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    let (m, k) = expect_matrix(a, "matmul")?;
    let (k2, n) = expect_matrix(b, "matmul")?;
    if k != k2 {
        return Err(DiffError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::new(vec![m, n], out))
}

/// `a[m x k] * b^T` where `b` is `[n x k]`; the similarity-matrix workhorse.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    let (m, k) = expect_matrix(a, "matmul_nt")?;
    let (n, k2) = expect_matrix(b, "matmul_nt")?;
    if k != k2 {
        return Err(DiffError::ShapeMismatch {
            op: "matmul_nt",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow.iter()) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    Ok(Tensor::new(vec![m, n], out))
}

/// Elementwise `max(x, 0)`; the subgradient at 0 is taken as 0 in backward.
pub fn relu(x: &Tensor) -> Tensor {
    Tensor::new(
        x.shape.clone(),
        x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
    )
}

/// Row l2 normalization with degenerate-row flagging.
///
/// Each row is divided by `max(||row||, eps)`, so exactly-zero rows map to
/// zero rows. Returns the normalized tensor and a flag per row that is true
/// when `||row|| < eps`.
pub fn l2_normalize_rows(x: &Tensor, eps: f64) -> Result<(Tensor, Vec<bool>), DiffError> {
    assert!(eps > 0.0, "l2_normalize_rows: eps must be positive");
    let (m, n) = expect_matrix(x, "l2_normalize_rows")?;
    let mut out = x.data.clone();
    let mut flags = vec![false; m];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < eps {
            flags[i] = true;
        }
        let denom = norm.max(eps);
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    Ok((Tensor::new(vec![m, n], out), flags))
}

/// Pairwise dot products of pre-normalized rows: entry `(i, j)` is
/// `u_i . v_j`. With unit-norm inputs this is the cosine matrix.
pub fn cosine_matrix(u: &Tensor, v: &Tensor) -> Result<Tensor, DiffError> {
    let (_, d) = expect_matrix(u, "cosine_matrix")?;
    let (_, d2) = expect_matrix(v, "cosine_matrix")?;
    if d != d2 {
        return Err(DiffError::ShapeMismatch {
            op: "cosine_matrix",
            lhs: u.shape.clone(),
            rhs: v.shape.clone(),
        });
    }
    matmul_nt(u, v)
}

/// log(sum(exp(x))) with max subtraction. Exact for a single element.
pub fn logsumexp(x: &[f64]) -> Result<f64, DiffError> {
    if x.is_empty() {
        return Err(DiffError::EmptyInput("logsumexp"));
    }
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if x.len() == 1 {
        return Ok(x[0]);
    }
    let sum: f64 = x.iter().map(|&v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let m = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let p = matmul(&i2, &m).unwrap();
        assert_eq!(p, m);
    }

    #[test]
    fn matmul_selector_row() {
        let sel = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let col = Tensor::from_rows(&[vec![2.0], vec![5.0]]);
        let p = matmul(&sel, &col).unwrap();
        assert_eq!(p.shape(), &[1, 1]);
        assert_eq!(p.item(), 2.0);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = crate::rng::Rng::new(17);
        let a = Tensor::new(vec![3, 4], (0..12).map(|_| rng.next_gaussian()).collect());
        let b = Tensor::new(vec![4, 2], (0..8).map(|_| rng.next_gaussian()).collect());
        let p = matmul(&a, &b).unwrap();
        // Independent naive oracle.
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += a.data()[i * 4 + k] * b.data()[k * 2 + j];
                }
                assert!((p.data()[i * 2 + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 2]);
        let err = matmul(&a, &b).unwrap_err();
        match err {
            DiffError::ShapeMismatch { lhs, rhs, .. } => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 2]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn relu_elementwise() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::new(vec![2, 2], vec![-1.0, -0.5, -3.0, -0.1]);
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_three_four_five() {
        let x = Tensor::from_rows(&[vec![3.0, 4.0]]);
        let (y, flags) = l2_normalize_rows(&x, NORM_EPS).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-12);
        assert!((y.data()[1] - 0.8).abs() < 1e-12);
        assert!(!flags[0]);
    }

    #[test]
    fn normalize_unit_row_unchanged() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0, 0.0]]);
        let (y, _) = l2_normalize_rows(&x, NORM_EPS).unwrap();
        for (a, b) in y.data().iter().zip(x.data().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_zero_row_stays_zero_and_flags() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let (y, flags) = l2_normalize_rows(&x, NORM_EPS).unwrap();
        assert_eq!(&y.data()[0..2], &[0.0, 0.0]);
        assert!(flags[0]);
        assert!(!flags[1]);
    }

    #[test]
    fn cosine_identical_orthogonal_antipodal() {
        let u = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let v = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let c = cosine_matrix(&u, &v).unwrap();
        assert!((c.data()[0] - 1.0).abs() < 1e-12);
        assert!(c.data()[1].abs() < 1e-12);
        assert!((c.data()[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_single_element_exact() {
        assert_eq!(logsumexp(&[3.25]).unwrap(), 3.25);
    }

    #[test]
    fn logsumexp_two_zeros_is_ln2() {
        assert!((logsumexp(&[0.0, 0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_large_values_no_overflow() {
        let v = logsumexp(&[1000.0, 1000.0]).unwrap();
        assert!((v - (1000.0 + std::f64::consts::LN_2)).abs() < 1e-9);
        assert!(v.is_finite());
    }

    #[test]
    fn logsumexp_empty_errors() {
        assert!(matches!(logsumexp(&[]), Err(DiffError::EmptyInput(_))));
    }
}
