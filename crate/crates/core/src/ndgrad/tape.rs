use super::conv::{matmul, Window};
use super::fault;
use super::optim::ParamId;
use super::{Float, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation families, used for reporting and fault injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum OpKind {
    Conv2d,
    ConvTranspose2d,
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Relu,
    Concat,
    Slice,
    Sum,
    Scale,
    Sse,
    AddScalarAt,
}

impl OpKind {
    pub const ALL: [OpKind; 13] = [
        OpKind::Conv2d,
        OpKind::ConvTranspose2d,
        OpKind::Add,
        OpKind::Mul,
        OpKind::Sigmoid,
        OpKind::Tanh,
        OpKind::Relu,
        OpKind::Concat,
        OpKind::Slice,
        OpKind::Sum,
        OpKind::Scale,
        OpKind::Sse,
        OpKind::AddScalarAt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Conv2d => "conv2d",
            OpKind::ConvTranspose2d => "conv_transpose2d",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Relu => "relu",
            OpKind::Concat => "concat_channels",
            OpKind::Slice => "slice_channels",
            OpKind::Sum => "sum_tensors",
            OpKind::Scale => "scale",
            OpKind::Sse => "sse",
            OpKind::AddScalarAt => "add_scalar_at",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvSpec {
    n: usize,
    /// Sweep over the larger image (conv input / transposed-conv output).
    win: Window,
    /// Output channels of the forward conv, or input channels of the transposed one.
    c_other: usize,
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    ConvTranspose2d { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Sum(Vec<Var>),
    Scale(Var, F),
    Sse(Var, Var),
    AddScalarAt { x: Var, p: Var, index: usize },
}

impl<F> Op<F> {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Leaf => return None,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Tanh(_) => OpKind::Tanh,
            Op::Relu(_) => OpKind::Relu,
            Op::Concat(_) => OpKind::Concat,
            Op::Slice { .. } => OpKind::Slice,
            Op::Sum(_) => OpKind::Sum,
            Op::Scale(..) => OpKind::Scale,
            Op::Sse(..) => OpKind::Sse,
            Op::AddScalarAt { .. } => OpKind::AddScalarAt,
        })
    }
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
    /// Accumulated gradient; only kept for leaves.
    grad: Option<Vec<F>>,
    param: Option<ParamId>,
}

/// Execution record for one forward pass.
pub struct Tape<F: Float> {
    nodes: Vec<Node<F>>,
}

impl<F: Float> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(what: &str, a: &[usize], b: &[usize]) -> Error {
    Error::arg(format!("{what}: incompatible shapes {a:?} and {b:?}"))
}

impl<F: Float> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.leaf(value, false)
    }

    pub(crate) fn param_leaf(&mut self, value: Tensor<F>, id: ParamId) -> Var {
        let v = self.leaf(value, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any has reached it.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[F])> {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.param?, n.grad.as_deref()?)))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn conv_bias_check(&self, b: Option<Var>, channels: usize) -> Result<()> {
        if let Some(b) = b {
            if self.shape(b) != [channels] {
                return Err(shape_err("bias", self.shape(b), &[channels]));
            }
        }
        Ok(())
    }

    /// Cross-correlation of `x` (`N×Ci×H×W`) with `w` (`Co×Ci×kh×kw`).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let [n, ci, h, wd] = self.value(x).nchw()?;
        let [co, wci, kh, kw] = self.value(w).nchw()?;
        if wci != ci || stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw {
            return Err(shape_err(
                "conv2d input/weight",
                self.shape(x),
                self.shape(w),
            ));
        }
        self.conv_bias_check(b, co)?;
        let win = Window {
            c: ci,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            oh: (h + 2 * pad - kh) / stride + 1,
            ow: (wd + 2 * pad - kw) / stride + 1,
        };
        let spec = ConvSpec { n, win, c_other: co };
        let value = conv_forward(
            &spec,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(value, Op::Conv2d { x, w, b, spec }, rg))
    }

    /// Adjoint of [`Tape::conv2d`]: `x` is `N×Ci×H×W`, `w` is `Ci×Co×kh×kw`,
    /// output extent `(in - 1)·stride - 2·pad + k + output_padding`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let [n, ci, h, wd] = self.value(x).nchw()?;
        let [wci, co, kh, kw] = self.value(w).nchw()?;
        if wci != ci || stride == 0 || output_padding >= stride || h == 0 || wd == 0 {
            return Err(shape_err(
                "conv_transpose2d input/weight",
                self.shape(x),
                self.shape(w),
            ));
        }
        let oh = ((h - 1) * stride + kh + output_padding)
            .checked_sub(2 * pad)
            .filter(|&v| v > 0);
        let ow = ((wd - 1) * stride + kw + output_padding)
            .checked_sub(2 * pad)
            .filter(|&v| v > 0);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(Error::arg("conv_transpose2d: padding exceeds output extent"));
        };
        self.conv_bias_check(b, co)?;
        let win = Window {
            c: co,
            h: oh,
            w: ow,
            kh,
            kw,
            stride,
            pad,
            oh: h,
            ow: wd,
        };
        let spec = ConvSpec { n, win, c_other: ci };
        let value = conv_transpose_forward(
            &spec,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, spec }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(what, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn unary(&self, a: Var, f: impl Fn(F) -> F) -> Tensor<F> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.unary(a, |x| F::one() / (F::one() + (-x).exp()));
        let rg = self.rg(&[a]);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.unary(a, |x| x.tanh());
        let rg = self.rg(&[a]);
        self.push(value, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.unary(a, |x| x.max(F::zero()));
        let rg = self.rg(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let value = self.unary(a, |x| x * s);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    /// Stacks NCHW tensors along the channel axis, in argument order.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::arg("concat_channels needs at least one tensor"));
        };
        if parts.len() == 1 {
            return Ok(first);
        }
        let [n, _, h, w] = self.value(first).nchw()?;
        let mut total_c = 0;
        for &p in parts {
            let [pn, pc, ph, pw] = self.value(p).nchw()?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(shape_err("concat_channels", self.shape(first), self.shape(p)));
            }
            total_c += pc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total_c * plane);
        for b in 0..n {
            for &p in parts {
                let t = self.value(p);
                let pc = t.shape()[1];
                data.extend_from_slice(&t.data()[b * pc * plane..(b + 1) * pc * plane]);
            }
        }
        let value = Tensor::new(vec![n, total_c, h, w], data)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Channels `start..start + len` of an NCHW tensor.
    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).nchw()?;
        if len == 0 || start + len > c {
            return Err(Error::arg(format!(
                "slice_channels: {start}..{} out of {c} channels",
                start + len
            )));
        }
        let plane = h * w;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(n * len * plane);
        for b in 0..n {
            let off = (b * c + start) * plane;
            data.extend_from_slice(&src[off..off + len * plane]);
        }
        let value = Tensor::new(vec![n, len, h, w], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Slice { x, start }, rg))
    }

    /// Element-wise sum of equally shaped tensors, accumulated left to right.
    pub fn sum_tensors(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::arg("sum_tensors needs at least one tensor"));
        };
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            let t = self.value(p);
            if t.shape() != acc.shape() {
                return Err(shape_err("sum_tensors", acc.shape(), t.shape()));
            }
            acc.data_mut().iter_mut().zip(t.data()).for_each(|(a, &b)| *a += b);
        }
        let rg = self.rg(parts);
        Ok(self.push(acc, Op::Sum(parts.to_vec()), rg))
    }

    /// `Σ (a − b)²` as a one-element tensor.
    pub fn sse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sse", ta.shape(), tb.shape()));
        }
        let s = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Sse(a, b), rg))
    }

    /// `x + p[index]` for every element of `x`.
    pub fn add_scalar_at(&mut self, x: Var, p: Var, index: usize) -> Result<Var> {
        let Some(&s) = self.value(p).data().get(index) else {
            return Err(Error::arg(format!(
                "add_scalar_at: index {index} outside {:?}",
                self.shape(p)
            )));
        };
        let value = self.unary(x, |v| v + s);
        let rg = self.rg(&[x, p]);
        Ok(self.push(value, Op::AddScalarAt { x, p, index }, rg))
    }

    /// Reverse sweep from a one-element `loss`. Leaf gradients accumulate
    /// across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::arg(format!(
                "backward needs a scalar loss, found shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(mut dy) = grads[i].take() else {
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            if let Op::Leaf = op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(g) => g.iter_mut().zip(&dy).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(dy),
                }
                continue;
            }
            if op.kind().is_some_and(fault::flips) {
                dy.iter_mut().for_each(|v| *v = -*v);
            }
            self.backward_op(i, &op, &dy, &mut grads);
        }
        Ok(())
    }

    fn backward_op(&self, i: usize, op: &Op<F>, dy: &[F], grads: &mut [Option<Vec<F>>]) {
        let out = self.nodes[i].value.data();
        match op {
            Op::Leaf => unreachable!(),
            Op::Conv2d { x, w, b, spec } => {
                let xs = self.value(*x).data();
                let ws = self.value(*w).data();
                let mut dx = self.requires_grad(*x).then(|| std::mem::take(self.buf(grads, *x)));
                let mut dw = self.requires_grad(*w).then(|| std::mem::take(self.buf(grads, *w)));
                let mut db = b.filter(|b| self.requires_grad(*b)).map(|b| std::mem::take(self.buf(grads, b)));
                conv_backward(spec, xs, ws, dy, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                restore(grads, *x, dx);
                restore(grads, *w, dw);
                if let Some(b) = b {
                    restore(grads, *b, db);
                }
            }
            Op::ConvTranspose2d { x, w, b, spec } => {
                let xs = self.value(*x).data();
                let ws = self.value(*w).data();
                let mut dx = self.requires_grad(*x).then(|| std::mem::take(self.buf(grads, *x)));
                let mut dw = self.requires_grad(*w).then(|| std::mem::take(self.buf(grads, *w)));
                let mut db = b.filter(|b| self.requires_grad(*b)).map(|b| std::mem::take(self.buf(grads, b)));
                conv_transpose_backward(spec, xs, ws, dy, dx.as_deref_mut(), dw.as_deref_mut(), db.as_deref_mut());
                restore(grads, *x, dx);
                restore(grads, *w, dw);
                if let Some(b) = b {
                    restore(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    self.accumulate(grads, v, |g| g.iter_mut().zip(dy).for_each(|(g, &d)| *g += d));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |g| {
                    g.iter_mut().zip(dy).zip(vb).for_each(|((g, &d), &y)| *g += d * y)
                });
                self.accumulate(grads, *b, |g| {
                    g.iter_mut().zip(dy).zip(va).for_each(|((g, &d), &x)| *g += d * x)
                });
            }
            Op::Sigmoid(a) => self.accumulate(grads, *a, |g| {
                g.iter_mut()
                    .zip(dy)
                    .zip(out)
                    .for_each(|((g, &d), &y)| *g += d * y * (F::one() - y))
            }),
            Op::Tanh(a) => self.accumulate(grads, *a, |g| {
                g.iter_mut()
                    .zip(dy)
                    .zip(out)
                    .for_each(|((g, &d), &y)| *g += d * (F::one() - y * y))
            }),
            Op::Relu(a) => self.accumulate(grads, *a, |g| {
                g.iter_mut().zip(dy).zip(out).for_each(|((g, &d), &y)| {
                    if y > F::zero() {
                        *g += d
                    }
                })
            }),
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |g| g.iter_mut().zip(dy).for_each(|(g, &d)| *g += d * *s))
            }
            Op::Concat(parts) => {
                let [n, c, h, w] = self.nodes[i].value.nchw().expect("nchw");
                let plane = h * w;
                let mut start = 0;
                for &p in parts {
                    let pc = self.shape(p)[1];
                    self.accumulate(grads, p, |g| {
                        for b in 0..n {
                            let src = &dy[(b * c + start) * plane..(b * c + start + pc) * plane];
                            let dst = &mut g[b * pc * plane..(b + 1) * pc * plane];
                            dst.iter_mut().zip(src).for_each(|(g, &d)| *g += d);
                        }
                    });
                    start += pc;
                }
            }
            Op::Slice { x, start } => {
                let [n, c, h, w] = self.value(*x).nchw().expect("nchw");
                let len = self.nodes[i].value.shape()[1];
                let plane = h * w;
                self.accumulate(grads, *x, |g| {
                    for b in 0..n {
                        let dst = &mut g[(b * c + start) * plane..(b * c + start + len) * plane];
                        let src = &dy[b * len * plane..(b + 1) * len * plane];
                        dst.iter_mut().zip(src).for_each(|(g, &d)| *g += d);
                    }
                });
            }
            Op::Sum(parts) => {
                for &p in parts {
                    self.accumulate(grads, p, |g| g.iter_mut().zip(dy).for_each(|(g, &d)| *g += d));
                }
            }
            Op::Sse(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let two = F::of(2.0) * dy[0];
                self.accumulate(grads, *a, |g| {
                    g.iter_mut().zip(va.iter().zip(vb)).for_each(|(g, (&x, &y))| *g += two * (x - y))
                });
                self.accumulate(grads, *b, |g| {
                    g.iter_mut().zip(va.iter().zip(vb)).for_each(|(g, (&x, &y))| *g -= two * (x - y))
                });
            }
            Op::AddScalarAt { x, p, index } => {
                self.accumulate(grads, *x, |g| g.iter_mut().zip(dy).for_each(|(g, &d)| *g += d));
                let total: F = dy.iter().copied().sum();
                self.accumulate(grads, *p, |g| g[*index] += total);
            }
        }
    }

    fn buf<'g>(&self, grads: &'g mut [Option<Vec<F>>], v: Var) -> &'g mut Vec<F> {
        let n = self.value(v).numel();
        grads[v.0].get_or_insert_with(|| vec![F::zero(); n])
    }

    fn accumulate(&self, grads: &mut [Option<Vec<F>>], v: Var, f: impl FnOnce(&mut [F])) {
        if self.requires_grad(v) {
            f(self.buf(grads, v));
        }
    }
}

fn restore<F>(grads: &mut [Option<Vec<F>>], v: Var, g: Option<Vec<F>>) {
    if let Some(g) = g {
        grads[v.0] = Some(g);
    }
}

fn add_bias<F: Float>(out: &mut [F], bias: &[F], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad<F: Float>(dy: &[F], db: &mut [F], plane: usize) {
    let c = db.len();
    for (i, chunk) in dy.chunks(plane).enumerate() {
        db[i % c] += chunk.iter().copied().sum::<F>();
    }
}

fn conv_forward<F: Float>(spec: &ConvSpec, x: &[F], w: &[F], b: Option<&[F]>) -> Tensor<F> {
    let ConvSpec { n, win, c_other: co } = *spec;
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let in_len = win.c * win.h * win.w;
    let mut out = vec![F::zero(); n * co * cols];
    let mut col = if win.is_pointwise() { Vec::new() } else { vec![F::zero(); rows * cols] };
    for bi in 0..n {
        let img = &x[bi * in_len..(bi + 1) * in_len];
        let colm: &[F] = if win.is_pointwise() {
            img
        } else {
            win.im2col(img, &mut col);
            &col
        };
        matmul(co, rows, cols, w, false, colm, false, &mut out[bi * co * cols..(bi + 1) * co * cols], false);
    }
    if let Some(b) = b {
        add_bias(&mut out, b, cols);
    }
    Tensor::new(vec![n, co, win.oh, win.ow], out).expect("conv output shape")
}

fn conv_backward<F: Float>(
    spec: &ConvSpec,
    x: &[F],
    w: &[F],
    dy: &[F],
    mut dx: Option<&mut [F]>,
    mut dw: Option<&mut [F]>,
    db: Option<&mut [F]>,
) {
    let ConvSpec { n, win, c_other: co } = *spec;
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let in_len = win.c * win.h * win.w;
    let mut col = vec![F::zero(); if win.is_pointwise() { 0 } else { rows * cols }];
    let mut dcol = vec![F::zero(); if win.is_pointwise() { 0 } else { rows * cols }];
    for bi in 0..n {
        let dyb = &dy[bi * co * cols..(bi + 1) * co * cols];
        let img = &x[bi * in_len..(bi + 1) * in_len];
        if let Some(dw) = dw.as_deref_mut() {
            let colm: &[F] = if win.is_pointwise() {
                img
            } else {
                win.im2col(img, &mut col);
                &col
            };
            matmul(co, cols, rows, dyb, false, colm, true, dw, true);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxb = &mut dx[bi * in_len..(bi + 1) * in_len];
            if win.is_pointwise() {
                matmul(rows, co, cols, w, true, dyb, false, dxb, true);
            } else {
                matmul(rows, co, cols, w, true, dyb, false, &mut dcol, false);
                win.col2im(&dcol, dxb);
            }
        }
    }
    if let Some(db) = db {
        bias_grad(dy, db, cols);
    }
}

fn conv_transpose_forward<F: Float>(spec: &ConvSpec, x: &[F], w: &[F], b: Option<&[F]>) -> Tensor<F> {
    let ConvSpec { n, win, c_other: ci } = *spec;
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let out_len = win.c * win.h * win.w;
    let mut out = vec![F::zero(); n * out_len];
    let mut col = vec![F::zero(); rows * cols];
    for bi in 0..n {
        let xb = &x[bi * ci * cols..(bi + 1) * ci * cols];
        let ob = &mut out[bi * out_len..(bi + 1) * out_len];
        if win.is_pointwise() {
            matmul(rows, ci, cols, w, true, xb, false, ob, false);
        } else {
            matmul(rows, ci, cols, w, true, xb, false, &mut col, false);
            win.col2im(&col, ob);
        }
    }
    if let Some(b) = b {
        add_bias(&mut out, b, win.h * win.w);
    }
    Tensor::new(vec![n, win.c, win.h, win.w], out).expect("conv_transpose output shape")
}

fn conv_transpose_backward<F: Float>(
    spec: &ConvSpec,
    x: &[F],
    w: &[F],
    dy: &[F],
    mut dx: Option<&mut [F]>,
    mut dw: Option<&mut [F]>,
    db: Option<&mut [F]>,
) {
    let ConvSpec { n, win, c_other: ci } = *spec;
    let (rows, cols) = (win.col_rows(), win.col_cols());
    let out_len = win.c * win.h * win.w;
    let mut col = vec![F::zero(); if win.is_pointwise() { 0 } else { rows * cols }];
    for bi in 0..n {
        let dyb = &dy[bi * out_len..(bi + 1) * out_len];
        let dcol: &[F] = if win.is_pointwise() {
            dyb
        } else {
            win.im2col(dyb, &mut col);
            &col
        };
        if let Some(dx) = dx.as_deref_mut() {
            matmul(ci, rows, cols, w, false, dcol, false, &mut dx[bi * ci * cols..(bi + 1) * ci * cols], true);
        }
        if let Some(dw) = dw.as_deref_mut() {
            let xb = &x[bi * ci * cols..(bi + 1) * ci * cols];
            matmul(ci, cols, rows, xb, false, dcol, true, dw, true);
        }
    }
    if let Some(db) = db {
        bias_grad(dy, db, win.h * win.w);
    }
}
