//! Eager reverse-mode differentiation tape.
//!
//! Every operation evaluates immediately and appends a node to the tape, so
//! node indices are already a topological order. [`Graph::backward`] walks
//! the tape in reverse and accumulates gradients additively into every
//! parent that requires them.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::{axis_split, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fused operation whose forward value is computed by the caller and whose
/// vector-Jacobian product is supplied here.
pub trait Function {
    fn name(&self) -> &'static str;

    /// Gradient contribution for each input given the upstream gradient of
    /// the output. `None` means the input receives nothing.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>>;
}

enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        trans_b: bool,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Softmax(usize),
    Sum(usize),
    Mean(usize),
    SumAxis {
        a: usize,
        axis: usize,
    },
    MeanAxis {
        a: usize,
        axis: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Slice {
        a: usize,
        axis: usize,
        start: usize,
    },
    Reshape(usize),
    Custom {
        inputs: Vec<usize>,
        f: Box<dyn Function>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Softmax(_) => "softmax",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumAxis { .. } => "sum_axis",
            Op::MeanAxis { .. } => "mean_axis",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Custom { f, .. } => f.name(),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    bindings: Vec<(Var, ParamId)>,
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

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.nodes[*a].requires_grad || self.nodes[*b].requires_grad
            }
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Softmax(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumAxis { a, .. }
            | Op::MeanAxis { a, .. }
            | Op::Slice { a, .. }
            | Op::Reshape(a) => self.nodes[*a].requires_grad,
            Op::Concat { parts, .. } => parts.iter().any(|&p| self.nodes[p].requires_grad),
            Op::Custom { inputs, .. } => inputs.iter().any(|&p| self.nodes[p].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Leaf holding `value`; gradients are tracked when `requires_grad`.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let v = self.push(Op::Leaf, value);
        self.nodes[v.0].requires_grad = requires_grad;
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.input(value, false)
    }

    /// Binds a trainable parameter as a leaf. Its gradient is returned to the
    /// store by [`Graph::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.input(store.value(id).clone(), true);
        self.bindings.push((v, id));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward root with respect to `v`, if any
    /// reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op.name()
    }

    // ---- linear algebra ------------------------------------------------

    /// `a @ b` (or `a @ bᵀ` with `trans_b`). `a` is `[m, k]` or `[batch, m, k]`;
    /// `b` is either a shared rank-2 matrix or a rank-3 stack with the same
    /// batch size.
    pub fn matmul_ext(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if !(2..=3).contains(&sa.len()) || !(2..=3).contains(&sb.len()) {
            return Err(Error::shape("matmul", format!("{sa:?} @ {sb:?}")));
        }
        let k = sa[sa.len() - 1];
        let m = sa[sa.len() - 2];
        let (bk, n) = {
            let r = sb[sb.len() - 2];
            let c = sb[sb.len() - 1];
            if trans_b {
                (c, r)
            } else {
                (r, c)
            }
        };
        if bk != k {
            return Err(Error::shape(
                "matmul",
                format!("{sa:?} @ {sb:?} (trans_b={trans_b})"),
            ));
        }
        let mut out_shape = sa[..sa.len() - 1].to_vec();
        out_shape.push(n);
        let mut out = vec![0.0; out_shape.iter().product()];
        let av = self.value(a).data();
        let bv = self.value(b).data();
        if sb.len() == 2 {
            let rows: usize = sa[..sa.len() - 1].iter().product();
            gemm(rows, k, n, av, false, bv, trans_b, &mut out, 0.0);
        } else {
            let batch = if sa.len() == 3 { sa[0] } else { 1 };
            if sa.len() != 3 || sb[0] != batch {
                return Err(Error::shape("matmul", format!("batch {sa:?} @ {sb:?}")));
            }
            for i in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    false,
                    &bv[i * k * n..(i + 1) * k * n],
                    trans_b,
                    &mut out[i * m * n..(i + 1) * m * n],
                    0.0,
                );
            }
        }
        let t = Tensor::new(out_shape, out)?;
        Ok(self.push(
            Op::MatMul {
                a: a.0,
                b: b.0,
                trans_b,
            },
            t,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_ext(a, b, false)
    }

    // ---- elementwise -----------------------------------------------------

    fn check_broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape(op, format!("{sa:?} with {sb:?}")));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let av = self.value(a);
        let bv = self.value(b).data();
        let m = bv.len();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bv[i % m]))
            .collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    /// `a + b`; `b` may be a trailing-suffix broadcast of `a` (e.g. a bias).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_broadcast("add", a, b)?;
        let t = self.binary(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a.0, b.0), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_broadcast("sub", a, b)?;
        let t = self.binary(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a.0, b.0), t))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_broadcast("mul", a, b)?;
        let t = self.binary(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a.0, b.0), t))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|&x| f(x)).collect(),
        )
        .expect("same shape")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.unary(a, |x| c * x);
        self.push(Op::Scale(a.0, c), t)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.unary(a, sigmoid);
        self.push(Op::Sigmoid(a.0), t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::tanh);
        self.push(Op::Tanh(a.0), t)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::exp);
        self.push(Op::Exp(a.0), t)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::ln);
        self.push(Op::Log(a.0), t)
    }

    /// Softmax over the last axis, stabilized by subtracting the row maximum.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let w = av.last_dim();
        let mut data = av.data().to_vec();
        if w > 0 {
            for row in data.chunks_mut(w) {
                softmax_in_place(row);
            }
        }
        let t = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        self.push(Op::Softmax(a.0), t)
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a.0), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a).data();
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(Op::Mean(a.0), Tensor::scalar(s))
    }

    fn reduce_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<(Tensor, usize)> {
        let shape = self.shape(a);
        if axis >= shape.len() {
            return Err(Error::shape(op, format!("axis {axis} of {shape:?}")));
        }
        let (outer, len, inner) = axis_split(shape, axis);
        let v = self.value(a).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &v[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut new_shape = shape.to_vec();
        new_shape.remove(axis);
        if new_shape.is_empty() {
            new_shape.push(1);
        }
        Ok((Tensor::new(new_shape, out)?, len))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (t, _) = self.reduce_axis("sum_axis", a, axis)?;
        Ok(self.push(Op::SumAxis { a: a.0, axis }, t))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (mut t, len) = self.reduce_axis("mean_axis", a, axis)?;
        let inv = 1.0 / len as f64;
        t.data_mut().iter_mut().for_each(|x| *x *= inv);
        Ok(self.push(Op::MeanAxis { a: a.0, axis }, t))
    }

    // ---- structural ------------------------------------------------------

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} of {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !ok {
                return Err(Error::shape("concat", format!("{base:?} with {s:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let len = v.shape()[axis];
                out.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Tensor::new(shape, out)?;
        Ok(self.push(
            Op::Concat {
                parts: parts.iter().map(|p| p.0).collect(),
                axis,
            },
            t,
        ))
    }

    /// `len` entries of `axis` starting at `start`; the axis is kept.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "slice",
                format!("[{start}..{}] on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, full, inner) = axis_split(&shape, axis);
        let v = self.value(a).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&v[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let t = Tensor::new(new_shape, out)?;
        Ok(self.push(
            Op::Slice {
                a: a.0,
                axis,
                start,
            },
            t,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(Op::Reshape(a.0), t))
    }

    /// Inverted dropout: zero each entry with probability `rate` and scale the
    /// survivors by `1 / (1 - rate)`. `rate >= 1` zeroes everything.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(a);
        }
        let shape = self.shape(a).to_vec();
        let n = self.value(a).len();
        let mask = if rate >= 1.0 {
            vec![0.0; n]
        } else {
            let keep = 1.0 / (1.0 - rate);
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        };
        let m = self.constant(Tensor::new(shape, mask)?);
        self.mul(a, m)
    }

    /// Appends a fused operation whose value the caller already computed.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, f: Box<dyn Function>) -> Var {
        self.push(
            Op::Custom {
                inputs: inputs.iter().map(|v| v.0).collect(),
                f,
            },
            output,
        )
    }

    // ---- evaluation ------------------------------------------------------

    /// Returns the value at `root` after verifying every node it could depend
    /// on is finite.
    pub fn forward_eval(&self, root: Var) -> Result<Tensor> {
        for (i, node) in self.nodes[..=root.0].iter().enumerate() {
            if !node.value.is_finite() {
                return Err(Error::NonFinite {
                    op: node.op.name(),
                    node: i,
                });
            }
        }
        Ok(self.value(root).clone())
    }

    /// Reverse sweep from a scalar `root`. Gradients from earlier sweeps are
    /// discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::NonScalarRoot(self.shape(root).to_vec()));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        for i in 0..=root.0 {
            if let Some(g) = &self.grads[i] {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite {
                        op: self.nodes[i].op.name(),
                        node: i,
                    });
                }
            }
        }
        Ok(())
    }

    /// Adds the gradients of every bound parameter into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (v, id) in &self.bindings {
            if let Some(g) = &self.grads[v.0] {
                for (d, s) in store.grad_mut(*id).iter_mut().zip(g) {
                    *d += s;
                }
            }
        }
    }

    fn acc(&mut self, p: usize, f: impl FnOnce(&mut [f64], &[Node])) {
        if !self.nodes[p].requires_grad {
            return;
        }
        let n = self.nodes[p].value.len();
        let mut buf = self.grads[p].take().unwrap_or_else(|| vec![0.0; n]);
        f(&mut buf, &self.nodes);
        self.grads[p] = Some(buf);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // The op is borrowed from `self.nodes` while grads are written
        // elsewhere, so temporarily move it out.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            &Op::MatMul { a, b, trans_b } => self.back_matmul(i, a, b, trans_b, g),
            &Op::Add(a, b) => {
                self.acc(a, |ga, _| axpy(ga, g, 1.0));
                self.acc(b, |gb, _| fold_broadcast(gb, g, 1.0));
            }
            &Op::Sub(a, b) => {
                self.acc(a, |ga, _| axpy(ga, g, 1.0));
                self.acc(b, |gb, _| fold_broadcast(gb, g, -1.0));
            }
            &Op::Mul(a, b) => {
                self.acc(a, |ga, nodes| {
                    let bv = nodes[b].value.data();
                    let m = bv.len();
                    for (k, (d, gi)) in ga.iter_mut().zip(g).enumerate() {
                        *d += gi * bv[k % m];
                    }
                });
                self.acc(b, |gb, nodes| {
                    let av = nodes[a].value.data();
                    let m = gb.len();
                    for (k, (x, gi)) in av.iter().zip(g).enumerate() {
                        gb[k % m] += gi * x;
                    }
                });
            }
            &Op::Scale(a, c) => self.acc(a, |ga, _| axpy(ga, g, c)),
            &Op::Sigmoid(a) => self.acc(a, |ga, nodes| {
                let y = nodes[i].value.data();
                for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (1.0 - yi);
                }
            }),
            &Op::Tanh(a) => self.acc(a, |ga, nodes| {
                let y = nodes[i].value.data();
                for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *d += gi * (1.0 - yi * yi);
                }
            }),
            &Op::Exp(a) => self.acc(a, |ga, nodes| {
                let y = nodes[i].value.data();
                for ((d, gi), yi) in ga.iter_mut().zip(g).zip(y) {
                    *d += gi * yi;
                }
            }),
            &Op::Log(a) => self.acc(a, |ga, nodes| {
                let x = nodes[a].value.data();
                for ((d, gi), xi) in ga.iter_mut().zip(g).zip(x) {
                    *d += gi / xi;
                }
            }),
            &Op::Softmax(a) => self.acc(a, |ga, nodes| {
                let y = &nodes[i].value;
                let w = y.last_dim();
                if w == 0 {
                    return;
                }
                for ((d, gr), yr) in ga.chunks_mut(w).zip(g.chunks(w)).zip(y.data().chunks(w)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((dk, gk), yk) in d.iter_mut().zip(gr).zip(yr) {
                        *dk += yk * (gk - dot);
                    }
                }
            }),
            &Op::Sum(a) => self.acc(a, |ga, _| ga.iter_mut().for_each(|d| *d += g[0])),
            &Op::Mean(a) => self.acc(a, |ga, _| {
                let s = g[0] / ga.len() as f64;
                ga.iter_mut().for_each(|d| *d += s);
            }),
            &Op::SumAxis { a, axis } | &Op::MeanAxis { a, axis } => {
                let mean = matches!(op, Op::MeanAxis { .. });
                self.acc(a, |ga, nodes| {
                    let (outer, len, inner) = axis_split(nodes[a].value.shape(), axis);
                    let s = if mean { 1.0 / len as f64 } else { 1.0 };
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for l in 0..len {
                            let dst = &mut ga[(o * len + l) * inner..(o * len + l + 1) * inner];
                            axpy(dst, src, s);
                        }
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let axis = *axis;
                let (outer, total, inner) = axis_split(self.nodes[i].value.shape(), axis);
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p].value.shape()[axis];
                    self.acc(p, |gp, _| {
                        for o in 0..outer {
                            let src = &g
                                [(o * total + offset) * inner..(o * total + offset + len) * inner];
                            axpy(&mut gp[o * len * inner..(o + 1) * len * inner], src, 1.0);
                        }
                    });
                    offset += len;
                }
            }
            &Op::Slice { a, axis, start } => {
                let len = self.nodes[i].value.shape()[axis];
                self.acc(a, |ga, nodes| {
                    let (outer, full, inner) = axis_split(nodes[a].value.shape(), axis);
                    for o in 0..outer {
                        let base = (o * full + start) * inner;
                        axpy(
                            &mut ga[base..base + len * inner],
                            &g[o * len * inner..(o + 1) * len * inner],
                            1.0,
                        );
                    }
                });
            }
            &Op::Reshape(a) => self.acc(a, |ga, _| axpy(ga, g, 1.0)),
            Op::Custom { inputs, f } => {
                let contributions = {
                    let ins: Vec<&Tensor> = inputs.iter().map(|&p| &self.nodes[p].value).collect();
                    f.backward(&ins, &self.nodes[i].value, g)
                };
                for (&p, c) in inputs.iter().zip(contributions) {
                    if let Some(c) = c {
                        self.acc(p, |gp, _| axpy(gp, &c, 1.0));
                    }
                }
            }
        }
        self.nodes[i].op = op;
    }

    fn back_matmul(&mut self, i: usize, a: usize, b: usize, trans_b: bool, g: &[f64]) {
        let sa = self.nodes[a].value.shape().to_vec();
        let sb = self.nodes[b].value.shape().to_vec();
        let k = sa[sa.len() - 1];
        let n = self.nodes[i].value.last_dim();
        if sb.len() == 2 {
            let rows = self.nodes[i].value.len() / n.max(1);
            self.acc(a, |ga, nodes| {
                let bv = nodes[b].value.data();
                // dA = dC · op(B)ᵀ
                gemm(rows, n, k, g, false, bv, !trans_b, ga, 1.0);
            });
            self.acc(b, |gb, nodes| {
                let av = nodes[a].value.data();
                if trans_b {
                    gemm(n, rows, k, g, true, av, false, gb, 1.0);
                } else {
                    gemm(k, rows, n, av, true, g, false, gb, 1.0);
                }
            });
        } else {
            let batch = sa[0];
            let m = sa[1];
            self.acc(a, |ga, nodes| {
                let bv = nodes[b].value.data();
                for t in 0..batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g[t * m * n..(t + 1) * m * n],
                        false,
                        &bv[t * k * n..(t + 1) * k * n],
                        !trans_b,
                        &mut ga[t * m * k..(t + 1) * m * k],
                        1.0,
                    );
                }
            });
            self.acc(b, |gb, nodes| {
                let av = nodes[a].value.data();
                for t in 0..batch {
                    let gt = &g[t * m * n..(t + 1) * m * n];
                    let at = &av[t * m * k..(t + 1) * m * k];
                    let dst = &mut gb[t * k * n..(t + 1) * k * n];
                    if trans_b {
                        gemm(n, m, k, gt, true, at, false, dst, 1.0);
                    } else {
                        gemm(k, m, n, at, true, gt, false, dst, 1.0);
                    }
                }
            });
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

fn axpy(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn fold_broadcast(dst: &mut [f64], src: &[f64], c: f64) {
    let m = dst.len();
    for (k, s) in src.iter().enumerate() {
        dst[k % m] += c * s;
    }
}

/// `C = op(A) · op(B) + beta · C` with `op(A)` of size `m × k` and `op(B)` of
/// size `k × n`, all row-major. A transposed operand is stored as its
/// transpose (`k × m` / `n × k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|x| *x *= beta);
        return;
    }
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the slices cover the strided extents asserted above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
