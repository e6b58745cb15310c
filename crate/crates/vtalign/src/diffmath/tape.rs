//! Reverse-mode gradient tape over [`Tensor`] values.
//!
//! Define-by-run: each helper computes the forward value immediately (through
//! the functions in [`super::tensor`], so replay shares the code path) and
//! records the operation. [`GradTape::backward`] sweeps the records in
//! reverse execution order, accumulating adjoints into every node and
//! returning them per named parameter. Adjoint accumulation order is fixed,
//! which makes backward bit-deterministic.
//!
//! A tape is single-owner: record and backward must not interleave across
//! threads. Distinct tapes are independent.

use std::collections::BTreeMap;

use super::tensor::{
    self, cosine_matrix, l2_normalize_rows, matmul, matmul_nt, relu, DiffError, Tensor, NORM_EPS,
};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Column mask for [`GradTape::logsumexp_rows_masked`]: `true` marks an entry
/// excluded from the row's reduction.
pub type ColumnMask = Vec<bool>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    MatmulNT { a: NodeId, b: NodeId },
    AddRowBias { x: NodeId, bias: NodeId },
    Relu { x: NodeId },
    L2NormRows { x: NodeId },
    MeanPoolGroups { x: NodeId, groups: Vec<Vec<usize>> },
    GatherRows { x: NodeId, idx: Vec<usize> },
    AppendConstCols { x: NodeId, cols: Tensor },
    ConcatRows { a: NodeId, b: NodeId },
    RowDot { a: NodeId, b: NodeId },
    LogSumExpRows { x: NodeId, mask: Option<Vec<ColumnMask>> },
    Scale { x: NodeId, c: f64 },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    MeanAll { x: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Degenerate-row flags produced by `L2NormRows`.
    zero_flags: Option<Vec<bool>>,
}

/// Ordered record of executed operations with reverse-sweep gradients.
#[derive(Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    params: Vec<(String, NodeId)>,
}

impl GradTape {
    pub fn new() -> Self {
        GradTape::default()
    }

    fn push(&mut self, value: Tensor, op: Op, zero_flags: Option<Vec<bool>>) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            zero_flags,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Register a named parameter leaf. Names must be unique per tape.
    pub fn param(&mut self, name: &str, value: Tensor) -> Result<NodeId, DiffError> {
        if !value.all_finite() {
            return Err(DiffError::NonFinite("param"));
        }
        assert!(
            self.params.iter().all(|(n, _)| n != name),
            "duplicate parameter name {name:?}"
        );
        let id = self.push(value, Op::Leaf, None);
        self.params.push((name.to_string(), id));
        Ok(id)
    }

    /// Register a constant leaf (no gradient is reported for it).
    pub fn constant(&mut self, value: Tensor) -> Result<NodeId, DiffError> {
        if !value.all_finite() {
            return Err(DiffError::NonFinite("constant"));
        }
        Ok(self.push(value, Op::Leaf, None))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Node of a registered parameter, by name.
    pub fn find_param(&self, name: &str) -> Option<NodeId> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, id)| id)
    }

    /// Degenerate-row flags for a normalization node, if any.
    pub fn zero_flags(&self, id: NodeId) -> Option<&[bool]> {
        self.nodes[id.0].zero_flags.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    // ── Recorded operations ─────────────────────────────────────────────

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Matmul { a, b }, None))
    }

    /// `a * b^T`; with unit-norm rows this is the cosine matrix.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let v = matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatmulNT { a, b }, None))
    }

    /// Cosine matrix of pre-normalized rows (dimension-checked alias).
    pub fn cosine_matrix(&mut self, u: NodeId, v: NodeId) -> Result<NodeId, DiffError> {
        let val = cosine_matrix(self.value(u), self.value(v))?;
        Ok(self.push(val, Op::MatmulNT { a: u, b: v }, None))
    }

    /// Add a bias row vector to every row of `x`.
    pub fn add_row_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, DiffError> {
        let xv = self.value(x);
        let bv = self.value(bias);
        if !xv.is_matrix() || bv.numel() != xv.cols() {
            return Err(DiffError::ShapeMismatch {
                op: "add_row_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut out = xv.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += bv.data()[j];
            }
        }
        Ok(self.push(Tensor::new(vec![m, n], out), Op::AddRowBias { x, bias }, None))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = relu(self.value(x));
        self.push(v, Op::Relu { x }, None)
    }

    /// Row l2 normalization with zero-row guard; flags retrievable via
    /// [`GradTape::zero_flags`]. Gradient flows through the full quotient
    /// rule for non-degenerate rows; flagged rows are constants for
    /// differentiation.
    pub fn l2_normalize_rows(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        let (v, flags) = l2_normalize_rows(self.value(x), NORM_EPS)?;
        Ok(self.push(v, Op::L2NormRows { x }, Some(flags)))
    }

    /// Mean-pool selected row groups: output row `g` is the arithmetic mean
    /// of `x`'s rows listed in `groups[g]`. Groups must be nonempty.
    pub fn mean_pool_groups(
        &mut self,
        x: NodeId,
        groups: Vec<Vec<usize>>,
    ) -> Result<NodeId, DiffError> {
        let xv = self.value(x);
        if groups.is_empty() {
            return Err(DiffError::EmptyInput("mean_pool_groups"));
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut out = vec![0.0; groups.len() * n];
        for (g, group) in groups.iter().enumerate() {
            assert!(!group.is_empty(), "mean_pool_groups: empty group {g}");
            let inv = 1.0 / group.len() as f64;
            for &r in group {
                assert!(r < m, "mean_pool_groups: row {r} out of range {m}");
                for j in 0..n {
                    out[g * n + j] += xv.data()[r * n + j];
                }
            }
            for j in 0..n {
                out[g * n + j] *= inv;
            }
        }
        let rows = groups.len();
        Ok(self.push(
            Tensor::new(vec![rows, n], out),
            Op::MeanPoolGroups { x, groups },
            None,
        ))
    }

    /// Select rows by index (duplicates allowed; backward scatter-adds).
    pub fn gather_rows(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId, DiffError> {
        let xv = self.value(x);
        if idx.is_empty() {
            return Err(DiffError::EmptyInput("gather_rows"));
        }
        let (m, n) = (xv.rows(), xv.cols());
        let mut out = Vec::with_capacity(idx.len() * n);
        for &r in &idx {
            assert!(r < m, "gather_rows: row {r} out of range {m}");
            out.extend_from_slice(&xv.data()[r * n..(r + 1) * n]);
        }
        let rows = idx.len();
        Ok(self.push(
            Tensor::new(vec![rows, n], out),
            Op::GatherRows { x, idx },
            None,
        ))
    }

    /// Append constant columns to the right of `x`. The columns receive no
    /// gradient; this carries the sign/magnitude scalars into the warp input.
    pub fn append_const_cols(&mut self, x: NodeId, cols: Tensor) -> Result<NodeId, DiffError> {
        let xv = self.value(x);
        if !cols.is_matrix() || cols.rows() != xv.rows() {
            return Err(DiffError::ShapeMismatch {
                op: "append_const_cols",
                lhs: xv.shape().to_vec(),
                rhs: cols.shape().to_vec(),
            });
        }
        if !cols.all_finite() {
            return Err(DiffError::NonFinite("append_const_cols"));
        }
        let (m, n, c) = (xv.rows(), xv.cols(), cols.cols());
        let mut out = Vec::with_capacity(m * (n + c));
        for i in 0..m {
            out.extend_from_slice(&xv.data()[i * n..(i + 1) * n]);
            out.extend_from_slice(&cols.data()[i * c..(i + 1) * c]);
        }
        Ok(self.push(
            Tensor::new(vec![m, n + c], out),
            Op::AppendConstCols { x, cols },
            None,
        ))
    }

    /// Stack `b` below `a` (column counts must match).
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.cols() != bv.cols() {
            return Err(DiffError::ShapeMismatch {
                op: "concat_rows",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let mut out = av.data().to_vec();
        out.extend_from_slice(bv.data());
        let rows = av.rows() + bv.rows();
        let cols = av.cols();
        Ok(self.push(
            Tensor::new(vec![rows, cols], out),
            Op::ConcatRows { a, b },
            None,
        ))
    }

    /// Per-row dot product of two equal-shape matrices, producing a vector.
    pub fn row_dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.shape() != bv.shape() || !av.is_matrix() {
            return Err(DiffError::ShapeMismatch {
                op: "row_dot",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let (m, n) = (av.rows(), av.cols());
        let mut out = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..n {
                acc += av.data()[i * n + j] * bv.data()[i * n + j];
            }
            out[i] = acc;
        }
        Ok(self.push(Tensor::new(vec![m], out), Op::RowDot { a, b }, None))
    }

    /// Per-row log-sum-exp of a matrix, producing a vector.
    pub fn logsumexp_rows(&mut self, x: NodeId) -> Result<NodeId, DiffError> {
        self.logsumexp_rows_masked(x, None)
    }

    /// Per-row log-sum-exp with an optional exclusion mask (`true` = skip the
    /// entry). Errors if any row has every entry excluded.
    pub fn logsumexp_rows_masked(
        &mut self,
        x: NodeId,
        mask: Option<Vec<ColumnMask>>,
    ) -> Result<NodeId, DiffError> {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        if let Some(mask) = &mask {
            assert_eq!(mask.len(), m, "logsumexp mask row count");
            for row in mask {
                assert_eq!(row.len(), n, "logsumexp mask column count");
            }
        }
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &xv.data()[i * n..(i + 1) * n];
            let v = match &mask {
                None => tensor::logsumexp(row)?,
                Some(mask) => {
                    let kept: Vec<f64> = row
                        .iter()
                        .zip(mask[i].iter())
                        .filter(|(_, &skip)| !skip)
                        .map(|(&v, _)| v)
                        .collect();
                    tensor::logsumexp(&kept)?
                }
            };
            out[i] = v;
        }
        Ok(self.push(
            Tensor::new(vec![m], out),
            Op::LogSumExpRows { x, mask },
            None,
        ))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let xv = self.value(x);
        let v = Tensor::new(
            xv.shape().to_vec(),
            xv.data().iter().map(|&t| t * c).collect(),
        );
        self.push(v, Op::Scale { x, c }, None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(DiffError::ShapeMismatch {
                op: "add",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let v = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect(),
        );
        Ok(self.push(v, Op::Add { a, b }, None))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(DiffError::ShapeMismatch {
                op: "sub",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let v = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect(),
        );
        Ok(self.push(v, Op::Sub { a, b }, None))
    }

    /// Mean over all elements, producing a scalar node.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mean = xv.data().iter().sum::<f64>() / xv.numel() as f64;
        self.push(Tensor::scalar(mean), Op::MeanAll { x }, None)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss node. Returns the adjoint tensor for
    /// every named parameter; parameters the loss does not depend on get
    /// zero adjoints.
    pub fn backward(&self, loss: NodeId) -> Result<BTreeMap<String, Tensor>, DiffError> {
        if self.nodes.is_empty() {
            return Err(DiffError::EmptyTape);
        }
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(DiffError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            self.apply_backward(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }

        let mut out = BTreeMap::new();
        for (name, id) in &self.params {
            let shape = self.nodes[id.0].value.shape().to_vec();
            let g = match &grads[id.0] {
                Some(g) => Tensor::new(shape, g.clone()),
                None => Tensor::zeros(shape),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, add: &[f64]) {
        match &mut grads[id.0] {
            Some(g) => {
                for (gi, ai) in g.iter_mut().zip(add.iter()) {
                    *gi += ai;
                }
            }
            None => grads[id.0] = Some(add.to_vec()),
        }
    }

    fn apply_backward(&self, node: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                // dA = dOut * B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += gout[i * n + j] * bv.data()[p * n + j];
                        }
                        da[i * k + p] = acc;
                    }
                }
                Self::accumulate(grads, *a, &da);
                // dB = A^T * dOut
                let mut db = vec![0.0; k * n];
                for p in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += av.data()[i * k + p] * gout[i * n + j];
                        }
                        db[p * n + j] = acc;
                    }
                }
                Self::accumulate(grads, *b, &db);
            }
            Op::MatmulNT { a, b } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k) = (av.rows(), av.cols());
                let n = bv.rows();
                // out = A * B^T, dA = dOut * B
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let g = gout[i * n + j];
                        if g == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += g * bv.data()[j * k + p];
                        }
                    }
                }
                Self::accumulate(grads, *a, &da);
                // dB = dOut^T * A
                let mut db = vec![0.0; n * k];
                for i in 0..m {
                    for j in 0..n {
                        let g = gout[i * n + j];
                        if g == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            db[j * k + p] += g * av.data()[i * k + p];
                        }
                    }
                }
                Self::accumulate(grads, *b, &db);
            }
            Op::AddRowBias { x, bias } => {
                Self::accumulate(grads, *x, gout);
                let n = self.nodes[bias.0].value.numel();
                let m = gout.len() / n;
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += gout[i * n + j];
                    }
                }
                Self::accumulate(grads, *bias, &db);
            }
            Op::Relu { x } => {
                let xv = &self.nodes[x.0].value;
                let dx: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(gout.iter())
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                Self::accumulate(grads, *x, &dx);
            }
            Op::L2NormRows { x } => {
                let xv = &self.nodes[x.0].value;
                let yv = &self.nodes[node].value;
                let (m, n) = (xv.rows(), xv.cols());
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let xr = &xv.data()[i * n..(i + 1) * n];
                    let yr = &yv.data()[i * n..(i + 1) * n];
                    let gr = &gout[i * n..(i + 1) * n];
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dr = &mut dx[i * n..(i + 1) * n];
                    if norm < NORM_EPS {
                        // Degenerate (flagged) rows are constants for
                        // differentiation: the eps branch's literal slope is
                        // 1/eps, a cliff that would dominate every gradient
                        // whenever a ReLU row dies to exactly zero.
                        continue;
                    }
                    let ydotg: f64 = yr.iter().zip(gr.iter()).map(|(y, g)| y * g).sum();
                    for j in 0..n {
                        dr[j] = (gr[j] - yr[j] * ydotg) / norm;
                    }
                }
                Self::accumulate(grads, *x, &dx);
            }
            Op::MeanPoolGroups { x, groups } => {
                let xv = &self.nodes[x.0].value;
                let n = xv.cols();
                let mut dx = vec![0.0; xv.numel()];
                for (g, group) in groups.iter().enumerate() {
                    let inv = 1.0 / group.len() as f64;
                    for &r in group {
                        for j in 0..n {
                            dx[r * n + j] += gout[g * n + j] * inv;
                        }
                    }
                }
                Self::accumulate(grads, *x, &dx);
            }
            Op::GatherRows { x, idx } => {
                let xv = &self.nodes[x.0].value;
                let n = xv.cols();
                let mut dx = vec![0.0; xv.numel()];
                for (i, &r) in idx.iter().enumerate() {
                    for j in 0..n {
                        dx[r * n + j] += gout[i * n + j];
                    }
                }
                Self::accumulate(grads, *x, &dx);
            }
            Op::AppendConstCols { x, cols } => {
                let xv = &self.nodes[x.0].value;
                let (m, n) = (xv.rows(), xv.cols());
                let total = n + cols.cols();
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    dx[i * n..(i + 1) * n].copy_from_slice(&gout[i * total..i * total + n]);
                }
                Self::accumulate(grads, *x, &dx);
            }
            Op::ConcatRows { a, b } => {
                let av = &self.nodes[a.0].value;
                Self::accumulate(grads, *a, &gout[..av.numel()]);
                Self::accumulate(grads, *b, &gout[av.numel()..]);
            }
            Op::RowDot { a, b } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, n) = (av.rows(), av.cols());
                let mut da = vec![0.0; m * n];
                let mut db = vec![0.0; m * n];
                for i in 0..m {
                    let g = gout[i];
                    for j in 0..n {
                        da[i * n + j] = g * bv.data()[i * n + j];
                        db[i * n + j] = g * av.data()[i * n + j];
                    }
                }
                Self::accumulate(grads, *a, &da);
                Self::accumulate(grads, *b, &db);
            }
            Op::LogSumExpRows { x, mask } => {
                let xv = &self.nodes[x.0].value;
                let lse = &self.nodes[node].value;
                let (m, n) = (xv.rows(), xv.cols());
                let mut dx = vec![0.0; m * n];
                for i in 0..m {
                    let g = gout[i];
                    if g == 0.0 {
                        continue;
                    }
                    let l = lse.data()[i];
                    for j in 0..n {
                        if let Some(mask) = mask {
                            if mask[i][j] {
                                continue;
                            }
                        }
                        dx[i * n + j] = g * (xv.data()[i * n + j] - l).exp();
                    }
                }
                Self::accumulate(grads, *x, &dx);
            }
            Op::Scale { x, c } => {
                let dx: Vec<f64> = gout.iter().map(|&g| g * c).collect();
                Self::accumulate(grads, *x, &dx);
            }
            Op::Add { a, b } => {
                Self::accumulate(grads, *a, gout);
                Self::accumulate(grads, *b, gout);
            }
            Op::Sub { a, b } => {
                Self::accumulate(grads, *a, gout);
                let neg: Vec<f64> = gout.iter().map(|&g| -g).collect();
                Self::accumulate(grads, *b, &neg);
            }
            Op::MeanAll { x } => {
                let xv = &self.nodes[x.0].value;
                let g = gout[0] / xv.numel() as f64;
                let dx = vec![g; xv.numel()];
                Self::accumulate(grads, *x, &dx);
            }
        }
    }

    /// Recompute every non-leaf node from the recorded leaves and verify the
    /// results are bit-identical to what the original execution produced.
    pub fn replay_check(&self) -> Result<bool, DiffError> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Matmul { a, b } => matmul(&values[a.0], &values[b.0])?,
                Op::MatmulNT { a, b } => matmul_nt(&values[a.0], &values[b.0])?,
                Op::AddRowBias { x, bias } => {
                    let xv = &values[x.0];
                    let bv = &values[bias.0];
                    let (m, n) = (xv.rows(), xv.cols());
                    let mut out = xv.data().to_vec();
                    for i in 0..m {
                        for j in 0..n {
                            out[i * n + j] += bv.data()[j];
                        }
                    }
                    Tensor::new(vec![m, n], out)
                }
                Op::Relu { x } => relu(&values[x.0]),
                Op::L2NormRows { x } => l2_normalize_rows(&values[x.0], NORM_EPS)?.0,
                Op::MeanPoolGroups { x, groups } => {
                    let xv = &values[x.0];
                    let n = xv.cols();
                    let mut out = vec![0.0; groups.len() * n];
                    for (g, group) in groups.iter().enumerate() {
                        let inv = 1.0 / group.len() as f64;
                        for &r in group {
                            for j in 0..n {
                                out[g * n + j] += xv.data()[r * n + j];
                            }
                        }
                        for j in 0..n {
                            out[g * n + j] *= inv;
                        }
                    }
                    Tensor::new(vec![groups.len(), n], out)
                }
                Op::GatherRows { x, idx } => {
                    let xv = &values[x.0];
                    let n = xv.cols();
                    let mut out = Vec::with_capacity(idx.len() * n);
                    for &r in idx {
                        out.extend_from_slice(&xv.data()[r * n..(r + 1) * n]);
                    }
                    Tensor::new(vec![idx.len(), n], out)
                }
                Op::AppendConstCols { x, cols } => {
                    let xv = &values[x.0];
                    let (m, n, c) = (xv.rows(), xv.cols(), cols.cols());
                    let mut out = Vec::with_capacity(m * (n + c));
                    for i in 0..m {
                        out.extend_from_slice(&xv.data()[i * n..(i + 1) * n]);
                        out.extend_from_slice(&cols.data()[i * c..(i + 1) * c]);
                    }
                    Tensor::new(vec![m, n + c], out)
                }
                Op::ConcatRows { a, b } => {
                    let mut out = values[a.0].data().to_vec();
                    out.extend_from_slice(values[b.0].data());
                    Tensor::new(
                        vec![values[a.0].rows() + values[b.0].rows(), values[a.0].cols()],
                        out,
                    )
                }
                Op::RowDot { a, b } => {
                    let av = &values[a.0];
                    let bv = &values[b.0];
                    let (m, n) = (av.rows(), av.cols());
                    let mut out = vec![0.0; m];
                    for i in 0..m {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += av.data()[i * n + j] * bv.data()[i * n + j];
                        }
                        out[i] = acc;
                    }
                    Tensor::new(vec![m], out)
                }
                Op::LogSumExpRows { x, mask } => {
                    let xv = &values[x.0];
                    let (m, n) = (xv.rows(), xv.cols());
                    let mut out = vec![0.0; m];
                    for i in 0..m {
                        let row = &xv.data()[i * n..(i + 1) * n];
                        out[i] = match mask {
                            None => tensor::logsumexp(row)?,
                            Some(mask) => {
                                let kept: Vec<f64> = row
                                    .iter()
                                    .zip(mask[i].iter())
                                    .filter(|(_, &skip)| !skip)
                                    .map(|(&v, _)| v)
                                    .collect();
                                tensor::logsumexp(&kept)?
                            }
                        };
                    }
                    Tensor::new(vec![m], out)
                }
                Op::Scale { x, c } => Tensor::new(
                    values[x.0].shape().to_vec(),
                    values[x.0].data().iter().map(|&v| v * c).collect(),
                ),
                Op::Add { a, b } => Tensor::new(
                    values[a.0].shape().to_vec(),
                    values[a.0]
                        .data()
                        .iter()
                        .zip(values[b.0].data())
                        .map(|(x, y)| x + y)
                        .collect(),
                ),
                Op::Sub { a, b } => Tensor::new(
                    values[a.0].shape().to_vec(),
                    values[a.0]
                        .data()
                        .iter()
                        .zip(values[b.0].data())
                        .map(|(x, y)| x - y)
                        .collect(),
                ),
                Op::MeanAll { x } => Tensor::scalar(
                    values[x.0].data().iter().sum::<f64>() / values[x.0].numel() as f64,
                ),
            };
            values.push(v);
        }
        Ok(values
            .iter()
            .zip(self.nodes.iter())
            .all(|(recomputed, node)| {
                recomputed.shape() == node.value.shape()
                    && recomputed
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .all(|(a, b)| a.to_bits() == b.to_bits())
            }))
    }
}
