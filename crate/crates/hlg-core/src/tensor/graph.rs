//! The recorded computation graph and its backward rules.

use super::{Real, Tensor, TensorError};

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

impl Var {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

enum Op<T> {
    /// Input or parameter; no parents.
    Leaf,
    MatMul(Var, Var),
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a * x + b` with constant coefficients; only the slope matters for
    /// the backward rule.
    Affine { x: Var, a: T },
    Concat(Vec<Var>),
    StackRows(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows { x: Var, start: usize },
    Transpose(Var),
    Reshape(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxAll(Var),
    SoftmaxRows(Var),
    Square(Var),
    Mean(Var),
    Sum(Var),
    SumSq(Var),
    /// Row-wise guarded cosine similarity; caches the row norms of both
    /// operands for the backward pass.
    PairwiseCosine {
        a: Var,
        b: Var,
        norms_a: Vec<T>,
        norms_b: Vec<T>,
    },
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    grad: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run computation graph. Rebuilt for every forward pass; nodes
/// are appended in execution order, so reverse iteration is a valid
/// topological order for backpropagation.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Denominator guard for cosine similarity with near-zero vectors.
const COSINE_EPS: f64 = 1e-12;

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        self.nodes.push(Node {
            shape,
            value,
            grad,
            op,
            requires_grad,
        });
        Var((self.nodes.len() - 1) as u32)
    }

    /// Non-differentiable input (data, targets, fixed masks).
    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    /// Differentiable leaf; its gradient is available after [`Self::backward`].
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true)
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        let len = shape.iter().product();
        self.push(shape, vec![T::zero(); len], Op::Leaf, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.idx()].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.idx()].value
    }

    pub fn value_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape consistent")
    }

    /// Value of a single-element node.
    pub fn scalar_value(&self, v: Var) -> T {
        debug_assert_eq!(self.nodes[v.idx()].value.len(), 1);
        self.nodes[v.idx()].value[0]
    }

    pub fn grad(&self, v: Var) -> &[T] {
        &self.nodes[v.idx()].grad
    }

    pub fn grad_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(self.shape(v).to_vec(), self.grad(v).to_vec()).expect("node shape consistent")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.fill(T::zero());
        }
    }

    fn mismatch(&self, op: &'static str, lhs: Var, rhs: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            lhs: self.shape(lhs).to_vec(),
            rhs: self.shape(rhs).to_vec(),
        }
    }

    fn rows_cols(&self, v: Var) -> Option<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Some((*r, *c)),
            _ => None,
        }
    }

    // ---- forward operations ----

    /// `a (m x k) * b (k x n) -> (m x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, ka) = self
            .rows_cols(a)
            .ok_or_else(|| self.mismatch("matmul", a, b))?;
        let (kb, n) = self
            .rows_cols(b)
            .ok_or_else(|| self.mismatch("matmul", a, b))?;
        if ka != kb {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![T::zero(); m * n];
        {
            let av = self.value(a);
            let bv = self.value(b);
            for i in 0..m {
                for k in 0..ka {
                    let aik = av[i * ka + k];
                    let brow = &bv[k * n..(k + 1) * n];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (o, &bkj) in orow.iter_mut().zip(brow) {
                        *o = *o + aik * bkj;
                    }
                }
            }
        }
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), false))
    }

    /// `w (m x k) * x (k) -> (m)`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, TensorError> {
        let (m, k) = self
            .rows_cols(w)
            .ok_or_else(|| self.mismatch("matvec", w, x))?;
        if self.shape(x) != [k] {
            return Err(self.mismatch("matvec", w, x));
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let out: Vec<T> = (0..m)
            .map(|i| {
                wv[i * k..(i + 1) * k]
                    .iter()
                    .zip(xv)
                    .map(|(&wij, &xj)| wij * xj)
                    .sum()
            })
            .collect();
        Ok(self.push(vec![m], out, Op::MatVec(w, x), false))
    }

    fn elementwise_pair(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var, TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, a, b));
        }
        let out: Vec<T> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, op, false))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise_pair("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise_pair("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise_pair("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `a * x + b` with scalar constants.
    pub fn affine(&mut self, x: Var, a: T, b: T) -> Var {
        let out: Vec<T> = self.value(x).iter().map(|&v| a * v + b).collect();
        self.push(self.shape(x).to_vec(), out, Op::Affine { x, a }, false)
    }

    fn elementwise(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out: Vec<T> = self.value(x).iter().map(|&v| f(v)).collect();
        self.push(self.shape(x).to_vec(), out, op, false)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.elementwise(x, |v| T::one() / (T::one() + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.elementwise(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.elementwise(x, |v| v * v, Op::Square(x))
    }

    fn softmax_slice(input: &[T], out: &mut [T]) {
        let max = input.iter().cloned().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for (o, &v) in out.iter_mut().zip(input) {
            let e = (v - max).exp();
            *o = e;
            total = total + e;
        }
        for o in out.iter_mut() {
            *o = *o / total;
        }
    }

    /// Softmax over every entry jointly, whatever the shape.
    pub fn softmax_all(&mut self, x: Var) -> Var {
        let input = self.value(x);
        let mut out = vec![T::zero(); input.len()];
        Self::softmax_slice(input, &mut out);
        self.push(self.shape(x).to_vec(), out, Op::SoftmaxAll(x), false)
    }

    /// Row-wise softmax of a rank-2 tensor.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self
            .rows_cols(x)
            .ok_or_else(|| self.mismatch("softmax_rows", x, x))?;
        let input = self.value(x);
        let mut out = vec![T::zero(); input.len()];
        for i in 0..r {
            Self::softmax_slice(&input[i * c..(i + 1) * c], &mut out[i * c..(i + 1) * c]);
        }
        Ok(self.push(vec![r, c], out, Op::SoftmaxRows(x), false))
    }

    /// Concatenate rank-1 tensors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(self.mismatch("concat", p, p));
            }
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![out.len()], out, Op::Concat(parts.to_vec()), false))
    }

    /// Stack rank-1 tensors of equal length as the rows of a matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        assert!(!parts.is_empty(), "stack_rows needs at least one row");
        let cols = self.value(parts[0]).len();
        let mut out = Vec::with_capacity(parts.len() * cols);
        for &p in parts {
            if self.shape(p) != [cols] {
                return Err(self.mismatch("stack_rows", parts[0], p));
            }
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(
            vec![parts.len(), cols],
            out,
            Op::StackRows(parts.to_vec()),
            false,
        ))
    }

    /// Vertically concatenate rank-2 tensors with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        assert!(!parts.is_empty(), "concat_rows needs at least one block");
        let (_, cols) = self
            .rows_cols(parts[0])
            .ok_or_else(|| self.mismatch("concat_rows", parts[0], parts[0]))?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            match self.rows_cols(p) {
                Some((r, c)) if c == cols => rows += r,
                _ => return Err(self.mismatch("concat_rows", parts[0], p)),
            }
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(
            vec![rows, cols],
            out,
            Op::ConcatRows(parts.to_vec()),
            false,
        ))
    }

    /// Rows `start..start + rows` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, rows: usize) -> Result<Var, TensorError> {
        let (r, c) = self
            .rows_cols(x)
            .ok_or_else(|| self.mismatch("slice_rows", x, x))?;
        if start + rows > r {
            return Err(TensorError::ShapeMismatch {
                op: "slice_rows",
                lhs: vec![r, c],
                rhs: vec![start, rows],
            });
        }
        let out = self.value(x)[start * c..(start + rows) * c].to_vec();
        Ok(self.push(vec![rows, c], out, Op::SliceRows { x, start }, false))
    }

    /// Row `i` of a rank-2 tensor, as a rank-1 vector.
    pub fn row(&mut self, x: Var, i: usize) -> Result<Var, TensorError> {
        let sliced = self.slice_rows(x, i, 1)?;
        let cols = self.shape(sliced)[1];
        self.reshape(sliced, vec![cols])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self
            .rows_cols(x)
            .ok_or_else(|| self.mismatch("transpose", x, x))?;
        let v = self.value(x);
        let mut out = vec![T::zero(); v.len()];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = v[i * c + j];
            }
        }
        Ok(self.push(vec![c, r], out, Op::Transpose(x), false))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        let out = self.value(x).to_vec();
        Ok(self.push(shape, out, Op::Reshape(x), false))
    }

    /// Flatten to a rank-1 vector.
    pub fn flatten(&mut self, x: Var) -> Var {
        let len = self.value(x).len();
        self.reshape(x, vec![len]).expect("flatten preserves length")
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = T::from_f64(v.len() as f64);
        let m = v.iter().cloned().sum::<T>() / n;
        self.push(vec![1], vec![m], Op::Mean(x), false)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().cloned().sum::<T>();
        self.push(vec![1], vec![s], Op::Sum(x), false)
    }

    /// Sum of squared entries.
    pub fn sum_sq(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().map(|&v| v * v).sum::<T>();
        self.push(vec![1], vec![s], Op::SumSq(x), false)
    }

    /// Cosine similarity between every row of `a` and every row of `b`:
    /// output `(i, j)` is `dot(a_i, b_j) / max(|a_i| * |b_j|, 1e-12)`. The
    /// guard keeps padding rows (all zeros) at exactly zero similarity with
    /// finite gradients.
    pub fn pairwise_cosine(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ra, ca) = self
            .rows_cols(a)
            .ok_or_else(|| self.mismatch("pairwise_cosine", a, b))?;
        let (rb, cb) = self
            .rows_cols(b)
            .ok_or_else(|| self.mismatch("pairwise_cosine", a, b))?;
        if ca != cb {
            return Err(self.mismatch("pairwise_cosine", a, b));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let norm = |rowv: &[T]| rowv.iter().map(|&x| x * x).sum::<T>().sqrt();
        let norms_a: Vec<T> = (0..ra).map(|i| norm(&av[i * ca..(i + 1) * ca])).collect();
        let norms_b: Vec<T> = (0..rb).map(|j| norm(&bv[j * cb..(j + 1) * cb])).collect();
        let eps = T::from_f64(COSINE_EPS);
        let mut out = vec![T::zero(); ra * rb];
        for i in 0..ra {
            let arow = &av[i * ca..(i + 1) * ca];
            for j in 0..rb {
                let brow = &bv[j * cb..(j + 1) * cb];
                let dot: T = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                out[i * rb + j] = dot / (norms_a[i] * norms_b[j]).max(eps);
            }
        }
        Ok(self.push(
            vec![ra, rb],
            out,
            Op::PairwiseCosine {
                a,
                b,
                norms_a,
                norms_b,
            },
            false,
        ))
    }

    // ---- backward ----

    /// Accumulate `d loss / d node` into every node's gradient buffer.
    /// Each call propagates through fresh adjoints, so calling it again
    /// without [`Self::zero_grads`] adds another full gradient on top.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.nodes[loss.idx()].value.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut adjoints: Vec<Vec<T>> = self
            .nodes
            .iter()
            .map(|n| vec![T::zero(); n.value.len()])
            .collect();
        adjoints[loss.idx()][0] = T::one();
        for i in (0..=loss.idx()).rev() {
            // The adjoint of node i is complete once every later node has
            // been processed; fold it into the persistent buffer, then
            // push it to the parents. Constants skip the fold, they are
            // not differentiated against.
            let gy = std::mem::take(&mut adjoints[i]);
            if gy.iter().all(|&g| g == T::zero()) {
                continue;
            }
            let node = &self.nodes[i];
            if node.requires_grad || !matches!(node.op, Op::Leaf) {
                accumulate(&mut self.nodes[i].grad, &gy, T::one());
            }
            backprop_node(&self.nodes, i, &gy, &mut adjoints);
        }
        Ok(())
    }
}

/// Propagate one node's adjoint into its parents' adjoints. Parents always
/// precede the node on the tape.
fn backprop_node<T: Real>(nodes: &[Node<T>], i: usize, gy: &[T], adj: &mut [Vec<T>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, n) = (node.shape[0], node.shape[1]);
            let k = nodes[a.idx()].shape[1];
            // ga += gy * b^T
            let bval = &nodes[b.idx()].value;
            let ga = &mut adj[a.idx()];
            for i in 0..m {
                for kk in 0..k {
                    let mut acc = T::zero();
                    let brow = &bval[kk * n..(kk + 1) * n];
                    for (gyij, &bkj) in gy[i * n..(i + 1) * n].iter().zip(brow) {
                        acc = acc + *gyij * bkj;
                    }
                    ga[i * k + kk] = ga[i * k + kk] + acc;
                }
            }
            // gb += a^T * gy
            let aval = &nodes[a.idx()].value;
            let gb = &mut adj[b.idx()];
            for i in 0..m {
                for kk in 0..k {
                    let aik = aval[i * k + kk];
                    let gyrow = &gy[i * n..(i + 1) * n];
                    let gbrow = &mut gb[kk * n..(kk + 1) * n];
                    for (gbj, &gyij) in gbrow.iter_mut().zip(gyrow) {
                        *gbj = *gbj + aik * gyij;
                    }
                }
            }
        }
        Op::MatVec(w, x) => {
            let m = node.shape[0];
            let k = nodes[x.idx()].shape[0];
            let xval = &nodes[x.idx()].value;
            let gw = &mut adj[w.idx()];
            for i in 0..m {
                let gyi = gy[i];
                if gyi == T::zero() {
                    continue;
                }
                let grow = &mut gw[i * k..(i + 1) * k];
                for (g, &xj) in grow.iter_mut().zip(xval) {
                    *g = *g + gyi * xj;
                }
            }
            let wval = &nodes[w.idx()].value;
            let gx = &mut adj[x.idx()];
            for i in 0..m {
                let gyi = gy[i];
                if gyi == T::zero() {
                    continue;
                }
                let wrow = &wval[i * k..(i + 1) * k];
                for (g, &wij) in gx.iter_mut().zip(wrow) {
                    *g = *g + wij * gyi;
                }
            }
        }
        Op::Add(a, b) => {
            accumulate(&mut adj[a.idx()], gy, T::one());
            accumulate(&mut adj[b.idx()], gy, T::one());
        }
        Op::Sub(a, b) => {
            accumulate(&mut adj[a.idx()], gy, T::one());
            accumulate(&mut adj[b.idx()], gy, -T::one());
        }
        Op::Mul(a, b) => {
            let (ai, bi) = (a.idx(), b.idx());
            for i in 0..gy.len() {
                let (av, bv) = (nodes[ai].value[i], nodes[bi].value[i]);
                adj[ai][i] = adj[ai][i] + gy[i] * bv;
                adj[bi][i] = adj[bi][i] + gy[i] * av;
            }
        }
        Op::Affine { x, a } => {
            accumulate(&mut adj[x.idx()], gy, *a);
        }
        Op::Concat(parts) | Op::StackRows(parts) | Op::ConcatRows(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = adj[p.idx()].len();
                accumulate(&mut adj[p.idx()], &gy[offset..offset + len], T::one());
                offset += len;
            }
        }
        Op::SliceRows { x, start } => {
            let c = nodes[x.idx()].shape[1];
            let offset = start * c;
            accumulate(&mut adj[x.idx()][offset..offset + gy.len()], gy, T::one());
        }
        Op::Transpose(x) => {
            let (c, r) = (node.shape[0], node.shape[1]);
            // node is (c x r); parent is (r x c)
            let gx = &mut adj[x.idx()];
            for i in 0..c {
                for j in 0..r {
                    gx[j * c + i] = gx[j * c + i] + gy[i * r + j];
                }
            }
        }
        Op::Reshape(x) => {
            accumulate(&mut adj[x.idx()], gy, T::one());
        }
        Op::Sigmoid(x) => {
            let gx = &mut adj[x.idx()];
            for i in 0..gy.len() {
                let y = node.value[i];
                gx[i] = gx[i] + gy[i] * y * (T::one() - y);
            }
        }
        Op::Tanh(x) => {
            let gx = &mut adj[x.idx()];
            for i in 0..gy.len() {
                let y = node.value[i];
                gx[i] = gx[i] + gy[i] * (T::one() - y * y);
            }
        }
        Op::SoftmaxAll(x) => {
            softmax_backward(&node.value, gy, &mut adj[x.idx()]);
        }
        Op::SoftmaxRows(x) => {
            let c = node.shape[1];
            let gx = &mut adj[x.idx()];
            for (row, (yv, gyv)) in node.value.chunks(c).zip(gy.chunks(c)).enumerate() {
                softmax_backward(yv, gyv, &mut gx[row * c..(row + 1) * c]);
            }
        }
        Op::Square(x) => {
            let two = T::from_f64(2.0);
            let gx = &mut adj[x.idx()];
            for i in 0..gy.len() {
                gx[i] = gx[i] + gy[i] * two * nodes[x.idx()].value[i];
            }
        }
        Op::Mean(x) => {
            let n = T::from_f64(nodes[x.idx()].value.len() as f64);
            let scale = gy[0] / n;
            for g in adj[x.idx()].iter_mut() {
                *g = *g + scale;
            }
        }
        Op::Sum(x) => {
            for g in adj[x.idx()].iter_mut() {
                *g = *g + gy[0];
            }
        }
        Op::SumSq(x) => {
            let two = T::from_f64(2.0);
            let gx = &mut adj[x.idx()];
            for (g, &xv) in gx.iter_mut().zip(&nodes[x.idx()].value) {
                *g = *g + gy[0] * two * xv;
            }
        }
        Op::PairwiseCosine {
            a,
            b,
            norms_a,
            norms_b,
        } => {
            let (ai, bi) = (a.idx(), b.idx());
            let cols = nodes[ai].shape[1];
            let rb = node.shape[1];
            let eps = T::from_f64(COSINE_EPS);
            for i in 0..node.shape[0] {
                for j in 0..rb {
                    let g = gy[i * rb + j];
                    if g == T::zero() {
                        continue;
                    }
                    let y = node.value[i * rb + j];
                    let denom = (norms_a[i] * norms_b[j]).max(eps);
                    let clamped = norms_a[i] * norms_b[j] < eps;
                    for k in 0..cols {
                        let av = nodes[ai].value[i * cols + k];
                        let bv = nodes[bi].value[j * cols + k];
                        // d cos / d a_k = b_k / denom - cos * a_k / |a|^2,
                        // with the norm term dropped when the guard clamps
                        // (the denominator is then a constant).
                        let da = if clamped {
                            bv / denom
                        } else {
                            bv / denom - y * av / (norms_a[i] * norms_a[i])
                        };
                        let db = if clamped {
                            av / denom
                        } else {
                            av / denom - y * bv / (norms_b[j] * norms_b[j])
                        };
                        adj[ai][i * cols + k] = adj[ai][i * cols + k] + g * da;
                        adj[bi][j * cols + k] = adj[bi][j * cols + k] + g * db;
                    }
                }
            }
        }
    }
}

fn accumulate<T: Real>(dst: &mut [T], src: &[T], scale: T) {
    if scale == T::zero() {
        return;
    }
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + scale * s;
    }
}

fn softmax_backward<T: Real>(y: &[T], gy: &[T], gx: &mut [T]) {
    let dot: T = y.iter().zip(gy).map(|(&yi, &gi)| yi * gi).sum();
    for i in 0..y.len() {
        gx[i] = gx[i] + y[i] * (gy[i] - dot);
    }
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}
