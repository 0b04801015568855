//! Tape-based reverse-mode differentiation.
//!
//! Every operation on a [`Graph`] evaluates eagerly and records itself on
//! the tape. [`Graph::backward`] then walks the tape in reverse once.

use crate::kernels::contextual::{self, CxParams};
use crate::kernels::conv::{self, ConvDims, ConvGeom};
use crate::kernels::gemm::gemm;
use crate::kernels::norm::{self, BatchStats, Layout};
use crate::kernels::shuffle;
use crate::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How a batch-norm node treats its statistics.
#[derive(Clone, Debug)]
pub enum NormMode {
    /// Normalise with the statistics of the current batch.
    Batch,
    /// Normalise with fixed (running) statistics.
    Fixed { mean: Vec<f64>, var: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContextualMode {
    /// Cosine similarity between every pair of positions.
    Template,
    /// Per-position cosine between the feature difference and a fixed
    /// image difference (`lr_up - target`).
    Positional,
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    SumAxis {
        x: Var,
        axis: usize,
    },
    NormAxis {
        x: Var,
        axis: usize,
    },
    Reshape(Var),
    MatMul(Var, Var),
    Conv {
        x: Var,
        w: Var,
        geom: ConvGeom,
    },
    PixelShuffle {
        x: Var,
        k: usize,
    },
    UpsampleNearest {
        x: Var,
        k: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        var: Vec<f64>,
        eps: f64,
        batch_mode: bool,
        stats: Option<BatchStats>,
    },
    ConcatOuter(Vec<Var>),
    SliceOuter {
        x: Var,
        start: usize,
    },
    Contextual {
        sr: Var,
        hr: Var,
        reference: Option<(Tensor, Tensor)>,
        params: CxParams,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients of one scalar with respect to every node that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf whose gradient will be computed.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Batch statistics computed by a batch-norm node in batch mode.
    pub fn batch_stats(&self, v: Var) -> Option<&BatchStats> {
        match &self.nodes[v.0].op {
            Op::BatchNorm { stats, .. } => stats.as_ref(),
            _ => None,
        }
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(x).map(f);
        let rg = self.rg(&[x]);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64, what: &str) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, what);
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(va.shape(), data).expect("shape preserved");
        let rg = self.rg(&[a, b]);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y, "mul")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + s)
    }

    /// Adds `bias[c]` along axis 1 of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let b = self.value(bias).data().to_vec();
        assert!(shape.len() >= 2 && shape[1] == b.len(), "add_bias: {shape:?} vs bias {}", b.len());
        let inner: usize = shape[2..].iter().product();
        let mut value = self.value(x).clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += b[(i / inner) % shape[1]];
        }
        let rg = self.rg(&[x, bias]);
        self.push(value, Op::AddBias { x, bias }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        assert!(!t.is_empty(), "mean of empty tensor");
        let m = t.sum() / t.len() as f64;
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
        assert!(axis < shape.len(), "axis {axis} out of range for {shape:?}");
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        (outer, shape[axis], inner)
    }

    fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
        let mut s = shape.to_vec();
        s.remove(axis);
        s
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Var {
        let t = self.value(x);
        let (outer, len, inner) = Self::axis_split(t.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += t.data()[(o * len + a) * inner + i];
                }
            }
        }
        let value = Tensor::new(&Self::reduced_shape(t.shape(), axis), out).expect("reduced shape");
        let rg = self.rg(&[x]);
        self.push(value, Op::SumAxis { x, axis }, rg)
    }

    /// Euclidean norm along `axis`. The gradient at a zero vector is zero.
    pub fn norm_axis(&mut self, x: Var, axis: usize) -> Var {
        let t = self.value(x);
        let (outer, len, inner) = Self::axis_split(t.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                for i in 0..inner {
                    let v = t.data()[(o * len + a) * inner + i];
                    out[o * inner + i] += v * v;
                }
            }
        }
        for v in out.iter_mut() {
            *v = v.sqrt();
        }
        let value = Tensor::new(&Self::reduced_shape(t.shape(), axis), out).expect("reduced shape");
        let rg = self.rg(&[x]);
        self.push(value, Op::NormAxis { x, axis }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let value = self.value(x).clone().reshape(shape).unwrap_or_else(|e| panic!("reshape: {e}"));
        let rg = self.rg(&[x]);
        self.push(value, Op::Reshape(x), rg)
    }

    /// `(m x k) * (k x n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0], "matmul: {sa:?} x {sb:?}");
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let value = Tensor::new(&[m, n], out).expect("matmul shape");
        let rg = self.rg(&[a, b]);
        self.push(value, Op::MatMul(a, b), rg)
    }

    /// 3-D convolution (cross-correlation) without bias.
    ///
    /// `x` is `(N, Ci, D, H, W)`, `w` is `(Co, Ci, kD, kH, kW)`.
    pub fn conv3d(&mut self, x: Var, w: Var, geom: ConvGeom) -> Var {
        let d = ConvDims::from_shapes(self.shape(x), self.shape(w), &geom);
        let out = conv::forward(self.value(x).data(), self.value(w).data(), &d, &geom);
        let value = Tensor::new(&d.out_shape(), out).expect("conv shape");
        let rg = self.rg(&[x, w]);
        self.push(value, Op::Conv { x, w, geom }, rg)
    }

    pub fn pixel_shuffle(&mut self, x: Var, k: usize) -> Var {
        let value = shuffle::pixel_shuffle(self.value(x), k).unwrap_or_else(|e| panic!("pixel_shuffle: {e}"));
        let rg = self.rg(&[x]);
        self.push(value, Op::PixelShuffle { x, k }, rg)
    }

    pub fn upsample_nearest(&mut self, x: Var, k: usize) -> Var {
        let value = shuffle::upsample_nearest(self.value(x), k).unwrap_or_else(|e| panic!("upsample: {e}"));
        let rg = self.rg(&[x]);
        self.push(value, Op::UpsampleNearest { x, k }, rg)
    }

    /// Per-channel (axis 1) batch normalisation with affine `gamma`, `beta`.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, mode: NormMode, eps: f64) -> Var {
        let l = Layout::of(self.shape(x));
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        assert!(g.len() == l.c && b.len() == l.c, "batch_norm: affine length");
        let xs = self.value(x).data();
        let (mean, var, stats, batch_mode) = match mode {
            NormMode::Batch => {
                let st = norm::batch_stats(xs, &l);
                (st.mean.clone(), st.var.clone(), Some(st), true)
            }
            NormMode::Fixed { mean, var } => (mean, var, None, false),
        };
        let (y, xhat) = norm::normalize(xs, &l, &mean, &var, g, b, eps);
        let value = Tensor::new(self.shape(x), y).expect("bn shape");
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                var,
                eps,
                batch_mode,
                stats,
            },
            rg,
        )
    }

    pub fn concat_outer(&mut self, parts: &[Var]) -> Var {
        let values: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let value = Tensor::concat_outer(&values).unwrap_or_else(|e| panic!("concat: {e}"));
        let rg = self.rg(parts);
        self.push(value, Op::ConcatOuter(parts.to_vec()), rg)
    }

    pub fn slice_outer(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice_outer(start, len);
        let rg = self.rg(&[x]);
        self.push(value, Op::SliceOuter { x, start }, rg)
    }

    /// Batch-mean contextual loss between `(N, C, ...)` feature maps.
    ///
    /// In [`ContextualMode::Positional`] `reference` supplies the fixed
    /// `(lr_up, target)` pair, each shaped like the feature maps, and the
    /// positions are laid out as a `rows x cols` grid taken from the last
    /// two axes.
    pub fn contextual_loss(&mut self, sr: Var, hr: Var, mode: ContextualMode, reference: Option<(Tensor, Tensor)>, bands: f64) -> Var {
        let params = CxParams {
            bands,
            eps: contextual::MIN_GUARD,
        };
        let (loss, _) = contextual_eval(self.value(sr), self.value(hr), mode, reference.as_ref(), params, None);
        let rg = self.rg(&[sr, hr]);
        let reference = match mode {
            ContextualMode::Template => None,
            ContextualMode::Positional => reference,
        };
        self.push(Tensor::scalar(loss), Op::Contextual { sr, hr, reference, params }, rg)
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.shape(root), 1.0));
        for id in (0..=root.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        debug_assert_eq!(t.shape(), self.shape(v));
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot => *slot = Some(t),
        }
    }

    fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(a.shape(), data).expect("same shape")
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[id].value;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, Self::zip_map(g, vb, |x, y| x * y));
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, Self::zip_map(g, va, |x, y| x * y));
                }
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, g.map(|v| v * s)),
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::AddBias { x, bias } => {
                self.accumulate(grads, *x, g.clone());
                if self.requires_grad(*bias) {
                    let shape = g.shape();
                    let c = shape[1];
                    let inner: usize = shape[2..].iter().product();
                    let mut db = vec![0.0; c];
                    for (i, v) in g.data().iter().enumerate() {
                        db[(i / inner) % c] += v;
                    }
                    self.accumulate(grads, *bias, Tensor::new(&[c], db).expect("bias"));
                }
            }
            Op::Relu(x) => {
                let t = Self::zip_map(g, self.value(*x), |d, v| if v > 0.0 { d } else { 0.0 });
                self.accumulate(grads, *x, t);
            }
            Op::LeakyRelu(x, s) => {
                let t = Self::zip_map(g, self.value(*x), |d, v| if v > 0.0 { d } else { d * s });
                self.accumulate(grads, *x, t);
            }
            Op::Sigmoid(x) => {
                let t = Self::zip_map(g, out, |d, y| d * y * (1.0 - y));
                self.accumulate(grads, *x, t);
            }
            Op::Softplus(x) => {
                let t = Self::zip_map(g, self.value(*x), |d, v| d * sigmoid(v));
                self.accumulate(grads, *x, t);
            }
            Op::Exp(x) => self.accumulate(grads, *x, Self::zip_map(g, out, |d, y| d * y)),
            Op::Log(x) => {
                let t = Self::zip_map(g, self.value(*x), |d, v| d / v);
                self.accumulate(grads, *x, t);
            }
            Op::Square(x) => {
                let t = Self::zip_map(g, self.value(*x), |d, v| 2.0 * d * v);
                self.accumulate(grads, *x, t);
            }
            Op::Sum(x) => {
                let gv = g.item();
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), gv));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                let gv = g.item() / n;
                self.accumulate(grads, *x, Tensor::full(self.shape(*x), gv));
            }
            Op::SumAxis { x, axis } => {
                let shape = self.shape(*x);
                let (outer, len, inner) = Self::axis_split(shape, *axis);
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        for i in 0..inner {
                            dx[(o * len + a) * inner + i] = g.data()[o * inner + i];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(shape, dx).expect("sum_axis"));
            }
            Op::NormAxis { x, axis } => {
                let xv = self.value(*x);
                let (outer, len, inner) = Self::axis_split(xv.shape(), *axis);
                let mut dx = vec![0.0; xv.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let n = out.data()[o * inner + i];
                        if n == 0.0 {
                            continue;
                        }
                        let gi = g.data()[o * inner + i] / n;
                        for a in 0..len {
                            let idx = (o * len + a) * inner + i;
                            dx[idx] = gi * xv.data()[idx];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape(), dx).expect("norm_axis"));
            }
            Op::Reshape(x) => {
                let t = g.clone().reshape(self.shape(*x)).expect("reshape back");
                self.accumulate(grads, *x, t);
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, g.data(), false, vb.data(), true, 0.0, &mut da);
                    self.accumulate(grads, *a, Tensor::new(&[m, k], da).expect("da"));
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, 1.0, va.data(), true, g.data(), false, 0.0, &mut db);
                    self.accumulate(grads, *b, Tensor::new(&[k, n], db).expect("db"));
                }
            }
            Op::Conv { x, w, geom } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let d = ConvDims::from_shapes(vx.shape(), vw.shape(), geom);
                let (dx, dw) = conv::backward(
                    vx.data(),
                    vw.data(),
                    g.data(),
                    &d,
                    geom,
                    self.requires_grad(*x),
                    self.requires_grad(*w),
                );
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, Tensor::new(vx.shape(), dx).expect("dx"));
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, Tensor::new(vw.shape(), dw).expect("dw"));
                }
            }
            Op::PixelShuffle { x, k } => {
                let t = shuffle::pixel_unshuffle(g, *k).expect("unshuffle");
                self.accumulate(grads, *x, t);
            }
            Op::UpsampleNearest { x, k } => {
                let t = shuffle::upsample_nearest_adjoint(g, *k).expect("adjoint");
                self.accumulate(grads, *x, t);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                var,
                eps,
                batch_mode,
                ..
            } => {
                let l = Layout::of(self.shape(*x));
                let gm = self.value(*gamma).data();
                let r = norm::backward(g.data(), xhat, &l, var, gm, *eps, *batch_mode);
                let c = l.c;
                self.accumulate(grads, *x, Tensor::new(self.shape(*x), r.dx).expect("bn dx"));
                self.accumulate(grads, *gamma, Tensor::new(&[c], r.dgamma).expect("bn dg"));
                self.accumulate(grads, *beta, Tensor::new(&[c], r.dbeta).expect("bn db"));
            }
            Op::ConcatOuter(parts) => {
                let mut start = 0;
                for p in parts {
                    let len = self.shape(*p)[0];
                    self.accumulate(grads, *p, g.slice_outer(start, len));
                    start += len;
                }
            }
            Op::SliceOuter { x, start } => {
                let shape = self.shape(*x);
                let inner: usize = shape[1..].iter().product();
                let mut dx = vec![0.0; shape.iter().product()];
                dx[start * inner..start * inner + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, Tensor::new(shape, dx).expect("slice"));
            }
            Op::Contextual { sr, hr, reference, params } => {
                let mode = if reference.is_some() {
                    ContextualMode::Positional
                } else {
                    ContextualMode::Template
                };
                let (_, gr) = contextual_eval(self.value(*sr), self.value(*hr), mode, reference.as_ref(), *params, Some(g.item()));
                let (dsr, dhr) = gr.expect("gradient requested");
                self.accumulate(grads, *sr, dsr);
                self.accumulate(grads, *hr, dhr);
            }
        }
    }
}

fn contextual_eval(
    sr: &Tensor,
    hr: &Tensor,
    mode: ContextualMode,
    reference: Option<&(Tensor, Tensor)>,
    params: CxParams,
    upstream: Option<f64>,
) -> (f64, Option<(Tensor, Tensor)>) {
    same_shape(sr, hr, "contextual_loss");
    let shape = sr.shape();
    assert!(shape.len() >= 3, "contextual_loss needs (N, C, positions..), got {shape:?}");
    let (n, ch) = (shape[0], shape[1]);
    let pos: usize = shape[2..].iter().product();
    let block = ch * pos;
    let per_sample = upstream.map(|g| g / n as f64);
    let mut total = 0.0;
    let mut dsr = upstream.map(|_| vec![0.0; sr.len()]);
    let mut dhr = upstream.map(|_| vec![0.0; hr.len()]);
    for s in 0..n {
        let range = s * block..(s + 1) * block;
        let (loss, g) = match mode {
            ContextualMode::Template => {
                contextual::template_sample(&sr.data()[range.clone()], &hr.data()[range.clone()], ch, pos, params, per_sample)
            }
            ContextualMode::Positional => {
                let (lr_up, target) = reference.expect("positional mode needs a reference pair");
                same_shape(sr, lr_up, "contextual_loss reference");
                same_shape(sr, target, "contextual_loss reference");
                let cols = shape[shape.len() - 1];
                let rows = pos / cols;
                contextual::positional_sample(
                    &sr.data()[range.clone()],
                    &hr.data()[range.clone()],
                    &lr_up.data()[range.clone()],
                    &target.data()[range.clone()],
                    ch,
                    rows,
                    cols,
                    params,
                    per_sample,
                )
            }
        };
        total += loss;
        if let (Some(g), Some(dsr), Some(dhr)) = (g, dsr.as_mut(), dhr.as_mut()) {
            dsr[range.clone()].copy_from_slice(&g.dsr);
            dhr[range].copy_from_slice(&g.dhr);
        }
    }
    let grads = match (dsr, dhr) {
        (Some(a), Some(b)) => Some((Tensor::new(shape, a).expect("dsr"), Tensor::new(shape, b).expect("dhr"))),
        _ => None,
    };
    (total / n as f64, grads)
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v + (-v).exp()
    } else {
        v.exp().ln_1p()
    }
}
