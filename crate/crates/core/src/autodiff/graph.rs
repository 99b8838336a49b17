use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `a · b`, or `a · bᵀ` when `trans_b`.
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Add(Var, Var),
    /// Rank-2 `x` plus a bias vector broadcast over rows.
    AddBias {
        x: Var,
        bias: Var,
    },
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Exp(Var),
    LogSoftmax(Var),
    LogAddExp(Var, Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

/// Append-only computation graph for reverse-mode differentiation.
///
/// Nodes only ever reference earlier nodes, so insertion order is a
/// topological order and the graph is acyclic by construction.
/// Gradients accumulate across calls to [`Graph::backward`] until
/// [`Graph::zero_grad`] is called.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.fill(0.0);
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node { value, grad, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    fn require_rank2(&self, op: &'static str, x: Var) -> Result<(usize, usize)> {
        match *self.shape(x) {
            [r, c] => Ok((r, c)),
            _ => Err(Error::ShapeMismatch {
                op,
                left: self.shape(x).to_vec(),
                right: vec![],
            }),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`; the natural product for weights stored as `out × in`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let op = if trans_b { "matmul_nt" } else { "matmul" };
        let (&[m, k], &[br, bc]) = (self.shape(a), self.shape(b)) else {
            return Err(self.mismatch(op, a, b));
        };
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(self.mismatch(op, a, b));
        }
        let mut out = vec![0.0; m * n];
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let b_strides = if trans_b { (1, bc) } else { (bc, 1) };
        gemm(m, k, n, av, (k, 1), bv, b_strides, &mut out, 0.0);
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(value, Op::MatMul { a, b, trans_b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(data, Op::Add(a, b)))
    }

    /// Adds a length-`c` vector to every row of an `r × c` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.require_rank2("add_bias", x)?;
        if self.shape(bias) != [c] {
            return Err(self.mismatch("add_bias", x, bias));
        }
        let xv = self.value(x).data();
        let bv = self.value(bias).data();
        let mut out = Vec::with_capacity(r * c);
        for row in xv.chunks_exact(c) {
            out.extend(row.iter().zip(bv).map(|(a, b)| a + b));
        }
        let value = Tensor::matrix(r, c, out)?;
        Ok(self.push(value, Op::AddBias { x, bias }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(data, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(value, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.push(value, Op::AddScalar(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::ln);
        self.push(value, Op::Log(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        self.push(value, Op::Exp(x))
    }

    /// Row-wise log-softmax of a rank-2 tensor, shifted by the row maximum.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.require_rank2("log_softmax", x)?;
        let mut out = Vec::with_capacity(r * c);
        for row in self.value(x).data().chunks_exact(c) {
            let lse = log_sum_exp(row);
            out.extend(row.iter().map(|v| v - lse));
        }
        let value = Tensor::matrix(r, c, out)?;
        Ok(self.push(value, Op::LogSoftmax(x)))
    }

    /// Elementwise `ln(eᵃ + eᵇ)`.
    pub fn log_add_exp(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("log_add_exp", a, b));
        }
        let data = zip_map(self.value(a), self.value(b), log_add_exp);
        Ok(self.push(data, Op::LogAddExp(a, b)))
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.require_rank2("slice_cols", x)?;
        if start >= end || end > c {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: vec![r, c],
                right: vec![start, end],
            });
        }
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for row in self.value(x).data().chunks_exact(c) {
            out.extend_from_slice(&row[start..end]);
        }
        let value = Tensor::matrix(r, w, out)?;
        Ok(self.push(value, Op::SliceCols { x, start }))
    }

    /// Picks entry `index[i]` from row `i`, producing a vector.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let (r, c) = self.require_rank2("gather_rows", x)?;
        if index.len() != r || index.iter().any(|&j| j >= c) {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                left: vec![r, c],
                right: vec![index.len()],
            });
        }
        let xv = self.value(x).data();
        let out = index.iter().enumerate().map(|(i, &j)| xv[i * c + j]).collect();
        let value = Tensor::vector(out);
        Ok(self.push(
            value,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Accumulates `d(root)/d(node)` into every node reachable from `root`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::NonScalarRoot(self.shape(root).to_vec()));
        }
        // Upstream gradients for this pass only; accumulated into `grad` at the end.
        let mut upstream: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        upstream[root.0] = Some(Tensor::full(self.shape(root), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = upstream[i].take() else { continue };
            for (p, contrib) in self.local_grads(i, &g) {
                match &mut upstream[p.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            self.nodes[i].grad.add_assign(&g);
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => vec![],
            &Op::MatMul { a, b, trans_b } => {
                let av = self.value(a);
                let bv = self.value(b);
                let (m, k) = (av.rows(), av.cols());
                let n = y.cols();
                let gd = g.data();
                // dA = G · Bᵀ  (or G · B when B was transposed)
                let mut da = vec![0.0; m * k];
                let b_t_strides = if trans_b { (k, 1) } else { (1, n) };
                gemm(m, n, k, gd, (n, 1), bv.data(), b_t_strides, &mut da, 0.0);
                // dB = Aᵀ · G, or Gᵀ · A for the transposed layout
                let (db, db_shape) = if trans_b {
                    let mut db = vec![0.0; n * k];
                    gemm(n, m, k, gd, (1, n), av.data(), (k, 1), &mut db, 0.0);
                    (db, vec![n, k])
                } else {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), (1, k), gd, (n, 1), &mut db, 0.0);
                    (db, vec![k, n])
                };
                vec![
                    (a, Tensor::new(vec![m, k], da).expect("matmul grad shape")),
                    (b, Tensor::new(db_shape, db).expect("matmul grad shape")),
                ]
            }
            &Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            &Op::AddBias { x, bias } => {
                let c = y.cols();
                let mut db = vec![0.0; c];
                for row in g.data().chunks_exact(c) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(x, g.clone()), (bias, Tensor::vector(db))]
            }
            &Op::Mul(a, b) => {
                let da = zip_map(g, self.value(b), |g, b| g * b);
                let db = zip_map(g, self.value(a), |g, a| g * a);
                vec![(a, da), (b, db)]
            }
            &Op::Scale(x, c) => vec![(x, g.map(|v| v * c))],
            &Op::AddScalar(x) => vec![(x, g.clone())],
            &Op::Tanh(x) => vec![(x, zip_map(g, y, |g, t| g * (1.0 - t * t)))],
            &Op::Relu(x) => vec![(x, zip_map(g, self.value(x), |g, v| if v > 0.0 { g } else { 0.0 }))],
            &Op::Log(x) => vec![(x, zip_map(g, self.value(x), |g, v| g / v))],
            &Op::Exp(x) => vec![(x, zip_map(g, y, |g, e| g * e))],
            &Op::LogSoftmax(x) => {
                let c = y.cols();
                let mut dx = Vec::with_capacity(y.len());
                for (grow, yrow) in g.data().chunks_exact(c).zip(y.data().chunks_exact(c)) {
                    let gs: f64 = grow.iter().sum();
                    dx.extend(grow.iter().zip(yrow).map(|(g, l)| g - l.exp() * gs));
                }
                vec![(x, Tensor::new(y.shape().to_vec(), dx).expect("log_softmax grad shape"))]
            }
            &Op::LogAddExp(a, b) => {
                let da = zip3_map(g, self.value(a), y, |g, a, y| g * (a - y).exp());
                let db = zip3_map(g, self.value(b), y, |g, b, y| g * (b - y).exp());
                vec![(a, da), (b, db)]
            }
            &Op::SliceCols { x, start } => {
                let xv = self.value(x);
                let (c, w) = (xv.cols(), y.cols());
                let mut dx = Tensor::zeros(xv.shape());
                for (drow, grow) in dx.data_mut().chunks_exact_mut(c).zip(g.data().chunks_exact(w)) {
                    drow[start..start + w].copy_from_slice(grow);
                }
                vec![(x, dx)]
            }
            Op::GatherRows { x, index } => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = Tensor::zeros(xv.shape());
                let d = dx.data_mut();
                for (i, (&j, gv)) in index.iter().zip(g.data()).enumerate() {
                    d[i * c + j] += gv;
                }
                vec![(*x, dx)]
            }
            &Op::Sum(x) => vec![(x, Tensor::full(self.shape(x), g.item()))],
            &Op::Mean(x) => {
                let n = self.value(x).len() as f64;
                vec![(x, Tensor::full(self.shape(x), g.item() / n))]
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("elementwise shapes already checked")
}

fn zip3_map(a: &Tensor, b: &Tensor, c: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("elementwise shapes already checked")
}

/// `ln Σ exp(xᵢ)` with max-shift.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let max = a.max(b);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + ((a - max).exp() + (b - max).exp()).ln()
}

/// `c ← A·B + beta·c` over row-major buffers with explicit (row, col) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: the strides describe in-bounds views of `a` (m×k), `b` (k×n)
    // and `c` (m×n); every caller derives them from the checked shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
