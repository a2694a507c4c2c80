//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation appends a node to the [`Graph`] and returns a [`Var`]
//! handle. Because a node can only reference nodes that already exist, the
//! node list is a topological order by construction and [`Graph::backward`]
//! is a single reverse sweep.
//!
//! ```
//! use xdomain_core::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![-1.0, 2.0]).unwrap());
//! let y = g.relu(x);
//! let loss = g.sum(y);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).data(), &[0.0, 1.0]);
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Ln { x: Var, eps: f64 },
    Pairwise { a: Var, b: Var, squared: bool },
    SelectRows { x: Var, rows: Vec<usize> },
    Reshape(Var),
    Map { x: Var, df: fn(f64) -> f64 },
    #[cfg(feature = "conv")]
    Conv2d { x: Var, k: Var, b: Var },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Recorded computation. Single-threaded; build a fresh graph per step.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
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

    /// Leaves that gradients are tracked for, in creation order.
    pub fn params(&self) -> Vec<Var> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf) && n.requires_grad)
            .map(|(i, _)| Var(i))
            .collect()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant leaf.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, true)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.input(Tensor::scalar(v))
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, inputs: &[Var], value: Tensor) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// `x[B,I] · w[I,O] + b[O]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        let (rows, inner) = xt.dims2().ok_or_else(|| dim_err("affine", xt, wt))?;
        let (w_in, outs) = wt.dims2().ok_or_else(|| dim_err("affine", xt, wt))?;
        if inner != w_in {
            return Err(dim_err("affine", xt, wt));
        }
        if bt.shape() != [outs] {
            return Err(dim_err("affine bias", wt, bt));
        }
        let (xd, wd, bd) = (xt.data(), wt.data(), bt.data());
        let mut out = Vec::with_capacity(rows * outs);
        for r in 0..rows {
            out.extend_from_slice(bd);
            let acc = &mut out[r * outs..(r + 1) * outs];
            for (k, &xv) in xd[r * inner..(r + 1) * inner].iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (o, &wv) in acc.iter_mut().zip(&wd[k * outs..(k + 1) * outs]) {
                    *o += xv * wv;
                }
            }
        }
        let value = Tensor::new(vec![rows, outs], out)?;
        Ok(self.push(Op::Affine { x, w, b }, &[x, w, b], value))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.map_value(x, |v| if v < 0.0 { 0.0 } else { v });
        self.push(Op::Relu(x), &[x], value)
    }

    /// Elementwise logistic function, stable for large `|x|`.
    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.map_value(x, sigmoid);
        self.push(Op::Sigmoid(x), &[x], value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_value("add", a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), &[a, b], value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_value("sub", a, b, |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), &[a, b], value))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_value("mul", a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), &[a, b], value))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.map_value(x, |v| v * c);
        self.push(Op::Scale(x, c), &[x], value)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.map_value(x, |v| v + c);
        self.push(Op::AddScalar(x), &[x], value)
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), &[x], Tensor::scalar(s))
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.data().iter().sum();
        let m = s / t.numel() as f64;
        self.push(Op::Mean(x), &[x], Tensor::scalar(m))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let value = self.map_value(x, |v| v.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, &[x], value)
    }

    /// `ln(max(x, eps))`. NaN stays NaN.
    pub fn ln(&mut self, x: Var, eps: f64) -> Var {
        let value = self.map_value(x, |v| libm::log(if v < eps { eps } else { v }));
        self.push(Op::Ln { x, eps }, &[x], value)
    }

    /// `out[i,j] = ||a_i - b_j||_2`. The derivative of the square root at a
    /// zero distance is taken as 0.
    pub fn pairwise_euclidean(&mut self, a: Var, b: Var) -> Result<Var> {
        self.pairwise(a, b, false)
    }

    /// `out[i,j] = ||a_i - b_j||_2^2`.
    pub fn pairwise_sq_euclidean(&mut self, a: Var, b: Var) -> Result<Var> {
        self.pairwise(a, b, true)
    }

    fn pairwise(&mut self, a: Var, b: Var, squared: bool) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        let ((m, d), (n, d2)) = match (at.dims2(), bt.dims2()) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(dim_err("pairwise_euclidean", at, bt)),
        };
        if d != d2 {
            return Err(dim_err("pairwise_euclidean", at, bt));
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let ai = at.row(i);
            for j in 0..n {
                let u: f64 = ai
                    .iter()
                    .zip(bt.row(j))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                out.push(if squared { u } else { libm::sqrt(u) });
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(Op::Pairwise { a, b, squared }, &[a, b], value))
    }

    /// Gathers rows of a rank-2 tensor. Rows may repeat.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2().ok_or_else(|| dim_err("select_rows", t, t))?;
        if rows.is_empty() {
            return Err(Error::contract("select_rows with no rows"));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::Dimension {
                op: "select_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![bad],
            });
        }
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            out.extend_from_slice(t.row(i));
        }
        let value = Tensor::new(vec![rows.len(), c], out)?;
        Ok(self.push(
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            &[x],
            value,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(Op::Reshape(x), &[x], value))
    }

    /// Elementwise `f` with a caller-supplied derivative `df`.
    ///
    /// Nothing checks that `df` is the derivative of `f`; [`crate::gradcheck`]
    /// does.
    pub fn map(&mut self, x: Var, f: fn(f64) -> f64, df: fn(f64) -> f64) -> Var {
        let value = self.map_value(x, f);
        self.push(Op::Map { x, df }, &[x], value)
    }

    /// Valid (no padding), stride-1 cross-correlation.
    ///
    /// `x[B,C,H,W]`, `k[O,C,K,K]`, `b[O]` gives `[B,O,H-K+1,W-K+1]`.
    #[cfg(feature = "conv")]
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (xt, kt, bt) = (self.value(x), self.value(k), self.value(b));
        let (bs, c, h, w) = match xt.shape() {
            &[bs, c, h, w] => (bs, c, h, w),
            _ => return Err(dim_err("conv2d", xt, kt)),
        };
        let (o, kh, kw) = match kt.shape() {
            &[o, kc, kh, kw] if kc == c && kh <= h && kw <= w => (o, kh, kw),
            _ => return Err(dim_err("conv2d", xt, kt)),
        };
        if bt.shape() != [o] {
            return Err(dim_err("conv2d bias", kt, bt));
        }
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let (xd, kd) = (xt.data(), kt.data());
        let mut out = vec![0.0; bs * o * oh * ow];
        for n in 0..bs {
            for oc in 0..o {
                let plane = &mut out[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow];
                plane.iter_mut().for_each(|v| *v = bt.data()[oc]);
                for ic in 0..c {
                    let img = &xd[(n * c + ic) * h * w..(n * c + ic + 1) * h * w];
                    let ker = &kd[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let kv = ker[dy * kw + dx];
                            for y in 0..oh {
                                let src = &img[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                                for (p, s) in plane[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                                    *p += kv * s;
                                }
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![bs, o, oh, ow], out)?;
        Ok(self.push(Op::Conv2d { x, k, b }, &[x, k, b], value))
    }

    fn map_value(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        Tensor::new(t.shape().to_vec(), data).expect("same shape")
    }

    fn zip_value(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(dim_err(op, at, bt));
        }
        let data = at
            .data()
            .iter()
            .zip(bt.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(at.shape().to_vec(), data)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::contract(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|d| Tensor::new(n.value.shape().to_vec(), d).expect("grad shape")))
            .collect();
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let (rows, inner) = xt.dims2().expect("checked");
                let outs = wt.shape()[1];
                if self.wants(*x) {
                    let wd = wt.data();
                    let gx = with_grad(grads, *x, rows * inner);
                    for r in 0..rows {
                        let gr = &g[r * outs..(r + 1) * outs];
                        for k in 0..inner {
                            let wk = &wd[k * outs..(k + 1) * outs];
                            gx[r * inner + k] += dot(gr, wk);
                        }
                    }
                }
                if self.wants(*w) {
                    let xd = xt.data();
                    let gw = with_grad(grads, *w, inner * outs);
                    for r in 0..rows {
                        let gr = &g[r * outs..(r + 1) * outs];
                        for (k, &xv) in xd[r * inner..(r + 1) * inner].iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            for (d, &gv) in gw[k * outs..(k + 1) * outs].iter_mut().zip(gr) {
                                *d += xv * gv;
                            }
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = with_grad(grads, *b, outs);
                    for r in 0..rows {
                        for (d, &gv) in gb.iter_mut().zip(&g[r * outs..(r + 1) * outs]) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                accumulate(grads, *x, g.iter().zip(xd).map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 }));
            }
            Op::Sigmoid(x) => {
                accumulate(grads, *x, g.iter().zip(out).map(|(&gv, &s)| gv * s * (1.0 - s)));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.iter().copied());
                accumulate(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.iter().copied());
                accumulate(grads, *b, g.iter().map(|&v| -v));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                accumulate(grads, *a, g.iter().zip(bd).map(|(&gv, &y)| gv * y));
                accumulate(grads, *b, g.iter().zip(ad).map(|(&gv, &x)| gv * x));
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.iter().map(|&v| v * c)),
            Op::AddScalar(x) | Op::Reshape(x) => accumulate(grads, *x, g.iter().copied()),
            Op::Sum(x) => {
                let n = self.value(*x).numel();
                accumulate(grads, *x, core::iter::repeat_n(g[0], n));
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel();
                let v = g[0] / n as f64;
                accumulate(grads, *x, core::iter::repeat_n(v, n));
            }
            Op::Clamp { x, lo, hi } => {
                let xd = self.value(*x).data();
                accumulate(
                    grads,
                    *x,
                    g.iter()
                        .zip(xd)
                        .map(|(&gv, &v)| if v >= *lo && v <= *hi { gv } else { 0.0 }),
                );
            }
            Op::Ln { x, eps } => {
                let xd = self.value(*x).data();
                accumulate(
                    grads,
                    *x,
                    g.iter()
                        .zip(xd)
                        .map(|(&gv, &v)| if v >= *eps { gv / v } else { 0.0 }),
                );
            }
            Op::Pairwise { a, b, squared } => {
                let (at, bt) = (self.value(*a), self.value(*b));
                let (m, d) = at.dims2().expect("checked");
                let n = bt.shape()[0];
                // coefficient on (a_i - b_j) for each pair
                let coef: Vec<f64> = (0..m * n)
                    .map(|ij| {
                        if *squared {
                            2.0 * g[ij]
                        } else if out[ij] > 0.0 {
                            g[ij] / out[ij]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.wants(*a) {
                    let ga = with_grad(grads, *a, m * d);
                    for i in 0..m {
                        for j in 0..n {
                            let c = coef[i * n + j];
                            if c == 0.0 {
                                continue;
                            }
                            for ((gv, &x), &y) in ga[i * d..(i + 1) * d].iter_mut().zip(at.row(i)).zip(bt.row(j)) {
                                *gv += c * (x - y);
                            }
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = with_grad(grads, *b, n * d);
                    for i in 0..m {
                        for j in 0..n {
                            let c = coef[i * n + j];
                            if c == 0.0 {
                                continue;
                            }
                            for ((gv, &x), &y) in gb[j * d..(j + 1) * d].iter_mut().zip(at.row(i)).zip(bt.row(j)) {
                                *gv -= c * (x - y);
                            }
                        }
                    }
                }
            }
            Op::SelectRows { x, rows } => {
                let xt = self.value(*x);
                let c = xt.shape()[1];
                let gx = with_grad(grads, *x, xt.numel());
                for (k, &r) in rows.iter().enumerate() {
                    for (d, &gv) in gx[r * c..(r + 1) * c].iter_mut().zip(&g[k * c..(k + 1) * c]) {
                        *d += gv;
                    }
                }
            }
            Op::Map { x, df } => {
                let xd = self.value(*x).data();
                accumulate(grads, *x, g.iter().zip(xd).map(|(&gv, &v)| gv * df(v)));
            }
            #[cfg(feature = "conv")]
            Op::Conv2d { x, k, b } => self.conv2d_backward(*x, *k, *b, g, grads),
        }
    }

    #[cfg(feature = "conv")]
    fn conv2d_backward(&self, x: Var, k: Var, b: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (xt, kt) = (self.value(x), self.value(k));
        let &[bs, c, h, w] = xt.shape() else { unreachable!() };
        let &[o, _, kh, kw] = kt.shape() else { unreachable!() };
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let (xd, kd) = (xt.data(), kt.data());
        if self.wants(b) {
            let gb = with_grad(grads, b, o);
            for n in 0..bs {
                for (oc, d) in gb.iter_mut().enumerate() {
                    *d += g[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow].iter().sum::<f64>();
                }
            }
        }
        if self.wants(k) {
            let gk = with_grad(grads, k, kd.len());
            for n in 0..bs {
                for oc in 0..o {
                    let gp = &g[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow];
                    for ic in 0..c {
                        let img = &xd[(n * c + ic) * h * w..(n * c + ic + 1) * h * w];
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let mut s = 0.0;
                                for y in 0..oh {
                                    s += dot(&gp[y * ow..(y + 1) * ow], &img[(y + dy) * w + dx..(y + dy) * w + dx + ow]);
                                }
                                gk[((oc * c + ic) * kh + dy) * kw + dx] += s;
                            }
                        }
                    }
                }
            }
        }
        if self.wants(x) {
            let gx = with_grad(grads, x, xd.len());
            for n in 0..bs {
                for oc in 0..o {
                    let gp = &g[(n * o + oc) * oh * ow..(n * o + oc + 1) * oh * ow];
                    for ic in 0..c {
                        let ker = &kd[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
                        let gi = &mut gx[(n * c + ic) * h * w..(n * c + ic + 1) * h * w];
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let kv = ker[dy * kw + dx];
                                for y in 0..oh {
                                    let dst = &mut gi[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                                    for (d, &gv) in dst.iter_mut().zip(&gp[y * ow..(y + 1) * ow]) {
                                        *d += kv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn with_grad(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contrib: impl Iterator<Item = f64>) {
    match &mut grads[v.0] {
        Some(existing) => existing.iter_mut().zip(contrib).for_each(|(d, c)| *d += c),
        slot @ None => *slot = Some(contrib.collect()),
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; exact zeros when the loss
    /// does not depend on `v`.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(self.shapes[v.0].clone()),
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}
