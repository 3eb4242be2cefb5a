//! Reverse-mode autodiff on an append-only graph.
//!
//! Nodes are appended in evaluation order, so the insertion order is a valid
//! topological order and [`Graph::backward`] is a single reverse sweep. All
//! reductions use fixed summation orders, making gradients bitwise
//! reproducible across runs, thread counts, and feature flags.
//!
//! Shape rules are enforced with assertions: a shape mismatch is a bug in
//! the calling code, not a recoverable condition.

use super::tensor::{axpy, dot, Dims, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    /// `(r x c) . (c)` -> `(r)`
    MatVec(NodeId, NodeId),
    /// `(r x c)^T . (r)` -> `(c)`
    MatTVec(NodeId, NodeId),
    /// matrix `(r x c)` plus vector `(r)` added to every column
    AddColBroadcast(NodeId, NodeId),
    /// vectors of length `d` stacked as columns of a `(d x k)` matrix
    HStack(Vec<NodeId>),
    Concat(Vec<NodeId>),
    Slice {
        src: NodeId,
        start: usize,
    },
    Row {
        src: NodeId,
        index: usize,
    },
    Softmax(NodeId),
    Sum(NodeId),
    CrossEntropyLogits {
        logits: NodeId,
        target: usize,
    },
    /// `KL(target || probs)` where `target` is a constant distribution.
    KlDivToConst {
        probs: NodeId,
        target: Vec<f64>,
    },
}

/// Reverse-mode autodiff graph over [`Tensor`] values.
pub struct Graph {
    values: Vec<Tensor>,
    grads: Vec<Vec<f64>>,
    ops: Vec<Op>,
    requires: Vec<bool>,
    tanh_grad_scale: f64,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph {
    /// Empty graph.
    pub fn new() -> Graph {
        Graph {
            values: Vec::new(),
            grads: Vec::new(),
            ops: Vec::new(),
            requires: Vec::new(),
            tanh_grad_scale: 1.0,
        }
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the graph has no nodes.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Self-test hook for the gradient checker: scales every tanh backward
    /// contribution by `k`. At the default `1.0` gradients are exact; any
    /// other value is a deliberately planted bug that a working checker must
    /// flag. Not for use outside checker validation.
    pub fn set_tanh_grad_scale(&mut self, k: f64) {
        self.tanh_grad_scale = k;
    }

    /// Value of node `id`.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    /// Accumulated gradient of node `id` (same layout as its value).
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }

    /// Whether gradients flow into node `id`.
    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.requires[id.0]
    }

    fn push(&mut self, value: Tensor, op: Op, requires: bool) -> NodeId {
        let id = NodeId(self.values.len());
        self.grads.push(vec![0.0; value.len()]);
        self.values.push(value);
        self.ops.push(op);
        self.requires.push(requires);
        id
    }

    /// Inserts an input node. Gradients accumulate into it only when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Inserts a constant input (no gradient).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(va.dims(), vb.dims(), "add shape mismatch");
        let data: Vec<f64> = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = match va.dims() {
            Dims::Vector(_) => Tensor::vector(data),
            Dims::Matrix { rows, cols } => Tensor::matrix(rows, cols, data),
        };
        let req = self.requires[a.0] || self.requires[b.0];
        self.push(out, Op::Add(a, b), req)
    }

    /// Elementwise product of two same-shape nodes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(va.dims(), vb.dims(), "mul shape mismatch");
        let data: Vec<f64> = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = match va.dims() {
            Dims::Vector(_) => Tensor::vector(data),
            Dims::Matrix { rows, cols } => Tensor::matrix(rows, cols, data),
        };
        let req = self.requires[a.0] || self.requires[b.0];
        self.push(out, Op::Mul(a, b), req)
    }

    /// Multiplies every element by the constant `k`.
    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let va = &self.values[a.0];
        let data: Vec<f64> = va.data().iter().map(|x| k * x).collect();
        let out = match va.dims() {
            Dims::Vector(_) => Tensor::vector(data),
            Dims::Matrix { rows, cols } => Tensor::matrix(rows, cols, data),
        };
        let req = self.requires[a.0];
        self.push(out, Op::Scale(a, k), req)
    }

    fn elementwise(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let va = &self.values[a.0];
        let data: Vec<f64> = va.data().iter().map(|&x| f(x)).collect();
        let out = match va.dims() {
            Dims::Vector(_) => Tensor::vector(data),
            Dims::Matrix { rows, cols } => Tensor::matrix(rows, cols, data),
        };
        let req = self.requires[a.0];
        self.push(out, op, req)
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, f64::tanh, Op::Tanh(a))
    }

    /// Elementwise logistic sigmoid.
    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    /// Elementwise rectifier. The subgradient at zero is taken as zero.
    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.elementwise(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    /// Matrix-vector product `(r x c) . (c) -> (r)`.
    pub fn matvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (vm, vv) = (&self.values[m.0], &self.values[v.0]);
        let (rows, cols) = match vm.dims() {
            Dims::Matrix { rows, cols } => (rows, cols),
            d => panic!("matvec left operand must be a matrix, got {d}"),
        };
        assert_eq!(
            vv.dims(),
            Dims::Vector(cols),
            "matvec shape mismatch: {} . {}",
            vm.dims(),
            vv.dims()
        );
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            out[r] = dot(vm.row(r), vv.data());
        }
        let req = self.requires[m.0] || self.requires[v.0];
        self.push(Tensor::vector(out), Op::MatVec(m, v), req)
    }

    /// Transposed matrix-vector product `(r x c)^T . (r) -> (c)`.
    pub fn mattvec(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (vm, vv) = (&self.values[m.0], &self.values[v.0]);
        let (rows, cols) = match vm.dims() {
            Dims::Matrix { rows, cols } => (rows, cols),
            d => panic!("mattvec left operand must be a matrix, got {d}"),
        };
        assert_eq!(
            vv.dims(),
            Dims::Vector(rows),
            "mattvec shape mismatch: {}^T . {}",
            vm.dims(),
            vv.dims()
        );
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            axpy(&mut out, vv.data()[r], vm.row(r));
        }
        let req = self.requires[m.0] || self.requires[v.0];
        self.push(Tensor::vector(out), Op::MatTVec(m, v), req)
    }

    /// Adds vector `v` (length = rows) to every column of matrix `m`.
    pub fn add_col_broadcast(&mut self, m: NodeId, v: NodeId) -> NodeId {
        let (vm, vv) = (&self.values[m.0], &self.values[v.0]);
        let (rows, cols) = match vm.dims() {
            Dims::Matrix { rows, cols } => (rows, cols),
            d => panic!("add_col_broadcast left operand must be a matrix, got {d}"),
        };
        assert_eq!(
            vv.dims(),
            Dims::Vector(rows),
            "add_col_broadcast shape mismatch"
        );
        let mut data = vm.data().to_vec();
        for i in 0..rows {
            let add = vv.data()[i];
            for x in &mut data[i * cols..(i + 1) * cols] {
                *x += add;
            }
        }
        let req = self.requires[m.0] || self.requires[v.0];
        self.push(
            Tensor::matrix(rows, cols, data),
            Op::AddColBroadcast(m, v),
            req,
        )
    }

    /// Stacks equal-length vectors as the columns of a `(d x k)` matrix.
    pub fn hstack(&mut self, columns: &[NodeId]) -> NodeId {
        assert!(!columns.is_empty(), "hstack of zero columns");
        let d = match self.values[columns[0].0].dims() {
            Dims::Vector(n) => n,
            dims => panic!("hstack operand must be a vector, got {dims}"),
        };
        let k = columns.len();
        let mut data = vec![0.0; d * k];
        let mut req = false;
        for (j, &c) in columns.iter().enumerate() {
            let vc = &self.values[c.0];
            assert_eq!(vc.dims(), Dims::Vector(d), "hstack length mismatch");
            for i in 0..d {
                data[i * k + j] = vc.data()[i];
            }
            req |= self.requires[c.0];
        }
        self.push(
            Tensor::matrix(d, k, data),
            Op::HStack(columns.to_vec()),
            req,
        )
    }

    /// Concatenates vectors into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of zero parts");
        let mut data = Vec::new();
        let mut req = false;
        for &p in parts {
            let vp = &self.values[p.0];
            assert!(
                matches!(vp.dims(), Dims::Vector(_)),
                "concat operand must be a vector, got {}",
                vp.dims()
            );
            data.extend_from_slice(vp.data());
            req |= self.requires[p.0];
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), req)
    }

    /// Contiguous slice `[start, start+len)` of a vector.
    pub fn slice(&mut self, src: NodeId, start: usize, len: usize) -> NodeId {
        let vs = &self.values[src.0];
        let n = match vs.dims() {
            Dims::Vector(n) => n,
            dims => panic!("slice operand must be a vector, got {dims}"),
        };
        assert!(start + len <= n, "slice [{start}, {start}+{len}) out of 0..{n}");
        let data = vs.data()[start..start + len].to_vec();
        let req = self.requires[src.0];
        self.push(Tensor::vector(data), Op::Slice { src, start }, req)
    }

    /// Row `index` of a matrix, as a vector.
    pub fn row(&mut self, src: NodeId, index: usize) -> NodeId {
        let vs = &self.values[src.0];
        let rows = match vs.dims() {
            Dims::Matrix { rows, .. } => rows,
            dims => panic!("row operand must be a matrix, got {dims}"),
        };
        assert!(index < rows, "row {index} out of 0..{rows}");
        let data = vs.row(index).to_vec();
        let req = self.requires[src.0];
        self.push(Tensor::vector(data), Op::Row { src, index }, req)
    }

    /// Numerically stable softmax over a vector.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let va = &self.values[a.0];
        assert!(
            matches!(va.dims(), Dims::Vector(_)),
            "softmax operand must be a vector, got {}",
            va.dims()
        );
        let xs = va.data();
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
        let s: f64 = ex.iter().sum();
        let out: Vec<f64> = ex.iter().map(|&e| e / s).collect();
        let req = self.requires[a.0];
        self.push(Tensor::vector(out), Op::Softmax(a), req)
    }

    /// Sum of all elements, as a length-1 vector.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.values[a.0].data().iter().sum();
        let req = self.requires[a.0];
        self.push(Tensor::vector(vec![s]), Op::Sum(a), req)
    }

    /// Sum of scalar nodes, as one scalar node.
    pub fn sum_scalars(&mut self, parts: &[NodeId]) -> NodeId {
        for &p in parts {
            assert_eq!(
                self.values[p.0].len(),
                1,
                "sum_scalars operand must be scalar"
            );
        }
        let cat = self.concat(parts);
        self.sum(cat)
    }

    /// Cross-entropy of a categorical target against raw logits, computed in
    /// log space: `logsumexp(logits) - logits[target]`.
    pub fn cross_entropy_logits(&mut self, logits: NodeId, target: usize) -> NodeId {
        let vl = &self.values[logits.0];
        let n = match vl.dims() {
            Dims::Vector(n) => n,
            dims => panic!("cross_entropy_logits operand must be a vector, got {dims}"),
        };
        assert!(target < n, "target {target} out of 0..{n}");
        let xs = vl.data();
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
        let loss = m + s.ln() - xs[target];
        let req = self.requires[logits.0];
        self.push(
            Tensor::vector(vec![loss]),
            Op::CrossEntropyLogits { logits, target },
            req,
        )
    }

    /// `KL(target || probs)` where `target` is a constant distribution and
    /// `probs` is a strictly positive distribution node (e.g. a softmax
    /// output). Terms with `target[i] == 0` contribute zero.
    pub fn kl_div_to_const(&mut self, probs: NodeId, target: &[f64]) -> NodeId {
        let vp = &self.values[probs.0];
        assert_eq!(
            vp.dims(),
            Dims::Vector(target.len()),
            "kl_div_to_const shape mismatch"
        );
        let mut kl = 0.0;
        for (i, &t) in target.iter().enumerate() {
            if t > 0.0 {
                kl += t * (t.ln() - vp.data()[i].ln());
            }
        }
        let req = self.requires[probs.0];
        self.push(
            Tensor::vector(vec![kl]),
            Op::KlDivToConst {
                probs,
                target: target.to_vec(),
            },
            req,
        )
    }

    /// Runs the reverse sweep from scalar node `root`, accumulating
    /// gradients into every node with `requires_grad`.
    ///
    /// May be called repeatedly (gradients keep accumulating), though the
    /// usual pattern is one backward per graph.
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(
            self.values[root.0].len(),
            1,
            "backward root must be scalar"
        );
        self.grads[root.0][0] += 1.0;
        for i in (0..=root.0).rev() {
            if !self.requires[i] {
                continue;
            }
            let g = std::mem::take(&mut self.grads[i]);
            let op = self.ops[i].clone();
            self.propagate(&op, i, &g);
            self.grads[i] = g;
        }
    }

    fn propagate(&mut self, op: &Op, node: usize, g: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.requires[a.0] {
                    axpy(&mut self.grads[a.0], 1.0, g);
                }
                if self.requires[b.0] {
                    axpy(&mut self.grads[b.0], 1.0, g);
                }
            }
            Op::Mul(a, b) => {
                if self.requires[a.0] {
                    let vb = std::mem::take(&mut self.grads[a.0]);
                    let mut da = vb;
                    for (k, dk) in da.iter_mut().enumerate() {
                        *dk += g[k] * self.values[b.0].data()[k];
                    }
                    self.grads[a.0] = da;
                }
                if self.requires[b.0] {
                    let mut db = std::mem::take(&mut self.grads[b.0]);
                    for (k, dk) in db.iter_mut().enumerate() {
                        *dk += g[k] * self.values[a.0].data()[k];
                    }
                    self.grads[b.0] = db;
                }
            }
            Op::Scale(a, k) => {
                if self.requires[a.0] {
                    axpy(&mut self.grads[a.0], k, g);
                }
            }
            Op::Tanh(a) => {
                if self.requires[a.0] {
                    let scale = self.tanh_grad_scale;
                    let mut da = std::mem::take(&mut self.grads[a.0]);
                    for (k, dk) in da.iter_mut().enumerate() {
                        let y = self.values[node].data()[k];
                        *dk += scale * g[k] * (1.0 - y * y);
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::Sigmoid(a) => {
                if self.requires[a.0] {
                    let mut da = std::mem::take(&mut self.grads[a.0]);
                    for (k, dk) in da.iter_mut().enumerate() {
                        let y = self.values[node].data()[k];
                        *dk += g[k] * y * (1.0 - y);
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::Relu(a) => {
                if self.requires[a.0] {
                    let mut da = std::mem::take(&mut self.grads[a.0]);
                    for (k, dk) in da.iter_mut().enumerate() {
                        if self.values[a.0].data()[k] > 0.0 {
                            *dk += g[k];
                        }
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::MatVec(m, v) => {
                let (rows, cols) = match self.values[m.0].dims() {
                    Dims::Matrix { rows, cols } => (rows, cols),
                    _ => unreachable!(),
                };
                if self.requires[m.0] {
                    let mut dm = std::mem::take(&mut self.grads[m.0]);
                    for r in 0..rows {
                        axpy(
                            &mut dm[r * cols..(r + 1) * cols],
                            g[r],
                            self.values[v.0].data(),
                        );
                    }
                    self.grads[m.0] = dm;
                }
                if self.requires[v.0] {
                    let mut dv = std::mem::take(&mut self.grads[v.0]);
                    for r in 0..rows {
                        axpy(&mut dv, g[r], self.values[m.0].row(r));
                    }
                    self.grads[v.0] = dv;
                }
            }
            Op::MatTVec(m, v) => {
                let rows = self.values[m.0].rows();
                let cols = self.values[m.0].cols();
                if self.requires[m.0] {
                    let mut dm = std::mem::take(&mut self.grads[m.0]);
                    for r in 0..rows {
                        let vr = self.values[v.0].data()[r];
                        axpy(&mut dm[r * cols..(r + 1) * cols], vr, g);
                    }
                    self.grads[m.0] = dm;
                }
                if self.requires[v.0] {
                    let mut dv = std::mem::take(&mut self.grads[v.0]);
                    for r in 0..rows {
                        dv[r] += dot(self.values[m.0].row(r), g);
                    }
                    self.grads[v.0] = dv;
                }
            }
            Op::AddColBroadcast(m, v) => {
                if self.requires[m.0] {
                    axpy(&mut self.grads[m.0], 1.0, g);
                }
                if self.requires[v.0] {
                    let rows = self.values[m.0].rows();
                    let cols = self.values[m.0].cols();
                    let mut dv = std::mem::take(&mut self.grads[v.0]);
                    for i in 0..rows {
                        let mut s = 0.0;
                        for j in 0..cols {
                            s += g[i * cols + j];
                        }
                        dv[i] += s;
                    }
                    self.grads[v.0] = dv;
                }
            }
            Op::HStack(ref columns) => {
                let k = columns.len();
                let d = self.values[columns[0].0].len();
                for (j, &c) in columns.iter().enumerate() {
                    if self.requires[c.0] {
                        let mut dc = std::mem::take(&mut self.grads[c.0]);
                        for i in 0..d {
                            dc[i] += g[i * k + j];
                        }
                        self.grads[c.0] = dc;
                    }
                }
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.values[p.0].len();
                    if self.requires[p.0] {
                        axpy(&mut self.grads[p.0], 1.0, &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::Slice { src, start } => {
                if self.requires[src.0] {
                    let len = g.len();
                    axpy(&mut self.grads[src.0][start..start + len], 1.0, g);
                }
            }
            Op::Row { src, index } => {
                if self.requires[src.0] {
                    let cols = self.values[src.0].cols();
                    axpy(
                        &mut self.grads[src.0][index * cols..(index + 1) * cols],
                        1.0,
                        g,
                    );
                }
            }
            Op::Softmax(a) => {
                if self.requires[a.0] {
                    let y = self.values[node].data();
                    let gy = dot(g, y);
                    let mut da = std::mem::take(&mut self.grads[a.0]);
                    for (k, dk) in da.iter_mut().enumerate() {
                        *dk += y[k] * (g[k] - gy);
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::Sum(a) => {
                if self.requires[a.0] {
                    let mut da = std::mem::take(&mut self.grads[a.0]);
                    for dk in da.iter_mut() {
                        *dk += g[0];
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::CrossEntropyLogits { logits, target } => {
                if self.requires[logits.0] {
                    let xs = self.values[logits.0].data();
                    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let ex: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
                    let s: f64 = ex.iter().sum();
                    let mut dl = std::mem::take(&mut self.grads[logits.0]);
                    for (k, dk) in dl.iter_mut().enumerate() {
                        let p = ex[k] / s;
                        let ind = if k == target { 1.0 } else { 0.0 };
                        *dk += g[0] * (p - ind);
                    }
                    self.grads[logits.0] = dl;
                }
            }
            Op::KlDivToConst { probs, ref target } => {
                if self.requires[probs.0] {
                    let mut dp = std::mem::take(&mut self.grads[probs.0]);
                    for (k, &t) in target.iter().enumerate() {
                        if t > 0.0 {
                            dp[k] -= g[0] * t / self.values[probs.0].data()[k];
                        }
                    }
                    self.grads[probs.0] = dp;
                }
            }
        }
    }
}
