//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Operations append nodes in execution order, so the tape is topologically
//! sorted by construction and a single reverse sweep propagates gradients.
//! Every forward result is scanned for NaN/Inf and rejected immediately;
//! a silent non-finite value in a training loop is much harder to find than
//! a failed op.
//!
//! A tape and its tensors form a single-owner unit. Distinct tapes (one per
//! batch sample, say) can run on separate threads freely.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a tensor stored on a tape. Only valid for the tape that minted it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(crate) usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S: Scalar> {
    Leaf,
    MatMul {
        a: TensorId,
        b: TensorId,
    },
    Conv2d {
        input: TensorId,
        kernels: TensorId,
        bias: TensorId,
        stride: usize,
        pad: usize,
    },
    MaxPool2d {
        input: TensorId,
        kh: usize,
        kw: usize,
        stride: usize,
    },
    Relu {
        input: TensorId,
    },
    Sigmoid {
        input: TensorId,
    },
    Tanh {
        input: TensorId,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    Mul {
        a: TensorId,
        b: TensorId,
    },
    Scale {
        input: TensorId,
        factor: S,
    },
    ConcatChannels {
        a: TensorId,
        b: TensorId,
    },
    ConcatCols {
        a: TensorId,
        b: TensorId,
    },
    Reshape {
        input: TensorId,
    },
    Sum {
        input: TensorId,
    },
    Softmax {
        input: TensorId,
    },
    SoftmaxCrossEntropy {
        logits: TensorId,
        target: usize,
        probs: Vec<S>,
    },
}

pub struct Tape<S: Scalar> {
    tensors: Vec<Tensor<S>>,
    ops: Vec<Op<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            tensors: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Insert a leaf tensor. Leaves with `requires_grad` receive accumulated
    /// gradients from [`Tape::backward`].
    pub fn leaf(&mut self, mut t: Tensor<S>, requires_grad: bool) -> Result<TensorId> {
        if !t.all_finite() {
            return Err(CoreError::NonFinite { op: "leaf" });
        }
        t.requires_grad = requires_grad;
        t.grad = None;
        Ok(self.push(t, Op::Leaf))
    }

    pub fn value(&self, id: TensorId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        self.tensors[id.0].grad.as_deref()
    }

    fn push(&mut self, t: Tensor<S>, op: Op<S>) -> TensorId {
        self.tensors.push(t);
        self.ops.push(op);
        TensorId(self.tensors.len() - 1)
    }

    fn output(&mut self, shape: Vec<usize>, data: Vec<S>, op: Op<S>, name: &'static str) -> Result<TensorId> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite { op: name });
        }
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Ok(self.push(
            Tensor {
                shape,
                data,
                requires_grad: false,
                grad: None,
            },
            op,
        ))
    }

    fn check(&self, id: TensorId) -> Result<()> {
        if id.0 >= self.tensors.len() {
            return Err(CoreError::NotOnTape {
                id: id.0,
                len: self.tensors.len(),
            });
        }
        Ok(())
    }

    // ── Forward operations ───────────────────────────────────────────

    /// `[m×k] · [k×n] -> [m×n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let data = mm_nn(&ta.data, &tb.data, m, k, n);
        self.output(vec![m, n], data, Op::MatMul { a, b }, "matmul")
    }

    /// Cross-correlation (no kernel flip) over a `C_in×H×W` input with
    /// `C_out×C_in×kh×kw` kernels, per-output-channel bias.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        kernels: TensorId,
        bias: TensorId,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        self.check(input)?;
        self.check(kernels)?;
        self.check(bias)?;
        let (ti, tk, tb) = (
            &self.tensors[input.0],
            &self.tensors[kernels.0],
            &self.tensors[bias.0],
        );
        if stride == 0 {
            return Err(CoreError::InvalidArgument {
                op: "conv2d",
                msg: "stride must be positive".into(),
            });
        }
        if ti.shape.len() != 3 || tk.shape.len() != 4 || ti.shape[0] != tk.shape[1] {
            return Err(CoreError::ShapeMismatch {
                op: "conv2d",
                lhs: ti.shape.clone(),
                rhs: tk.shape.clone(),
            });
        }
        let (c_in, h, w) = (ti.shape[0], ti.shape[1], ti.shape[2]);
        let (c_out, kh, kw) = (tk.shape[0], tk.shape[2], tk.shape[3]);
        if tb.shape != vec![c_out] {
            return Err(CoreError::ShapeMismatch {
                op: "conv2d bias",
                lhs: tb.shape.clone(),
                rhs: vec![c_out],
            });
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(CoreError::InvalidArgument {
                op: "conv2d",
                msg: format!(
                    "kernel {kh}x{kw} larger than padded input {}x{}",
                    h + 2 * pad,
                    w + 2 * pad
                ),
            });
        }
        let out_h = (h + 2 * pad - kh) / stride + 1;
        let out_w = (w + 2 * pad - kw) / stride + 1;
        let patch = c_in * kh * kw;
        let cols = im2col(&ti.data, c_in, h, w, kh, kw, stride, pad, out_h, out_w);
        let mut data = mm_nn(&tk.data, &cols, c_out, patch, out_h * out_w);
        for co in 0..c_out {
            let b = tb.data[co];
            for v in &mut data[co * out_h * out_w..(co + 1) * out_h * out_w] {
                *v += b;
            }
        }
        self.output(
            vec![c_out, out_h, out_w],
            data,
            Op::Conv2d {
                input,
                kernels,
                bias,
                stride,
                pad,
            },
            "conv2d",
        )
    }

    /// Per-window maximum over a `C×H×W` input; ties go to the first element
    /// in row-major scan order (the backward route follows the same rule).
    pub fn max_pool2d(
        &mut self,
        input: TensorId,
        kh: usize,
        kw: usize,
        stride: usize,
    ) -> Result<TensorId> {
        self.check(input)?;
        let ti = &self.tensors[input.0];
        if stride == 0 || kh == 0 || kw == 0 {
            return Err(CoreError::InvalidArgument {
                op: "max_pool2d",
                msg: "window and stride must be positive".into(),
            });
        }
        if ti.shape.len() != 3 {
            return Err(CoreError::ShapeMismatch {
                op: "max_pool2d",
                lhs: ti.shape.clone(),
                rhs: vec![0, 0, 0],
            });
        }
        let (c, h, w) = (ti.shape[0], ti.shape[1], ti.shape[2]);
        if kh > h || kw > w {
            return Err(CoreError::InvalidArgument {
                op: "max_pool2d",
                msg: format!("window {kh}x{kw} larger than input {h}x{w}"),
            });
        }
        let out_h = (h - kh) / stride + 1;
        let out_w = (w - kw) / stride + 1;
        let mut data = vec![S::zero(); c * out_h * out_w];
        for ci in 0..c {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut best = ti.data[(ci * h + oy * stride) * w + ox * stride];
                    for u in 0..kh {
                        for v in 0..kw {
                            let x = ti.data[(ci * h + oy * stride + u) * w + ox * stride + v];
                            if x > best {
                                best = x;
                            }
                        }
                    }
                    data[(ci * out_h + oy) * out_w + ox] = best;
                }
            }
        }
        self.output(
            vec![c, out_h, out_w],
            data,
            Op::MaxPool2d {
                input,
                kh,
                kw,
                stride,
            },
            "max_pool2d",
        )
    }

    /// Elementwise `max(0, x)`; subgradient at 0 is 0.
    pub fn relu(&mut self, input: TensorId) -> Result<TensorId> {
        self.check(input)?;
        let ti = &self.tensors[input.0];
        let data: Vec<S> = ti.data.iter().map(|&x| x.max(S::zero())).collect();
        let shape = ti.shape.clone();
        self.output(shape, data, Op::Relu { input }, "relu")
    }

    pub fn sigmoid(&mut self, input: TensorId) -> Result<TensorId> {
        self.check(input)?;
        let ti = &self.tensors[input.0];
        let one = S::one();
        let data: Vec<S> = ti.data.iter().map(|&x| one / (one + (-x).exp())).collect();
        let shape = ti.shape.clone();
        self.output(shape, data, Op::Sigmoid { input }, "sigmoid")
    }

    pub fn tanh(&mut self, input: TensorId) -> Result<TensorId> {
        self.check(input)?;
        let ti = &self.tensors[input.0];
        let data: Vec<S> = ti.data.iter().map(|&x| x.tanh()).collect();
        let shape = ti.shape.clone();
        self.output(shape, data, Op::Tanh { input }, "tanh")
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape != tb.shape {
            return Err(CoreError::ShapeMismatch {
                op: "add",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let data: Vec<S> = ta
            .data
            .iter()
            .zip(tb.data.iter())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = ta.shape.clone();
        self.output(shape, data, Op::Add { a, b }, "add")
    }

    /// Elementwise (Hadamard) product of two same-shape tensors.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape != tb.shape {
            return Err(CoreError::ShapeMismatch {
                op: "mul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let data: Vec<S> = ta
            .data
            .iter()
            .zip(tb.data.iter())
            .map(|(&x, &y)| x * y)
            .collect();
        let shape = ta.shape.clone();
        self.output(shape, data, Op::Mul { a, b }, "mul")
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, input: TensorId, factor: S) -> Result<TensorId> {
        self.check(input)?;
        if !factor.is_finite() {
            return Err(CoreError::NonFinite { op: "scale" });
        }
        let ti = &self.tensors[input.0];
        let data: Vec<S> = ti.data.iter().map(|&x| x * factor).collect();
        let shape = ti.shape.clone();
        self.output(shape, data, Op::Scale { input, factor }, "scale")
    }

    /// Stack `a: C₁×H×W` and `b: C₂×H×W` along the channel axis; `a` keeps
    /// channels `[0, C₁)`.
    pub fn concat_channels(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape.len() != 3
            || tb.shape.len() != 3
            || ta.shape[1..] != tb.shape[1..]
        {
            return Err(CoreError::ShapeMismatch {
                op: "concat_channels",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let shape = vec![ta.shape[0] + tb.shape[0], ta.shape[1], ta.shape[2]];
        let mut data = Vec::with_capacity(ta.data.len() + tb.data.len());
        data.extend_from_slice(&ta.data);
        data.extend_from_slice(&tb.data);
        self.output(shape, data, Op::ConcatChannels { a, b }, "concat_channels")
    }

    /// Concatenate two row vectors `[1×m]`, `[1×n]` into `[1×(m+n)]`.
    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.tensors[a.0], &self.tensors[b.0]);
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[0] != 1 || tb.shape[0] != 1 {
            return Err(CoreError::ShapeMismatch {
                op: "concat_cols",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let shape = vec![1, ta.shape[1] + tb.shape[1]];
        let mut data = Vec::with_capacity(ta.data.len() + tb.data.len());
        data.extend_from_slice(&ta.data);
        data.extend_from_slice(&tb.data);
        self.output(shape, data, Op::ConcatCols { a, b }, "concat_cols")
    }

    /// View the same elements under a new shape (element count must match).
    pub fn reshape(&mut self, input: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        self.check(input)?;
        let ti = &self.tensors[input.0];
        if shape.iter().product::<usize>() != ti.numel() {
            return Err(CoreError::ShapeMismatch {
                op: "reshape",
                lhs: ti.shape.clone(),
                rhs: shape,
            });
        }
        let data = ti.data.clone();
        self.output(shape, data, Op::Reshape { input }, "reshape")
    }

    /// Full reduction to a scalar.
    pub fn sum(&mut self, input: TensorId) -> Result<TensorId> {
        self.check(input)?;
        let ti = &self.tensors[input.0];
        let s: S = ti.data.iter().copied().sum();
        self.output(vec![1], vec![s], Op::Sum { input }, "sum")
    }

    /// Softmax over all elements (one distribution), max-subtracted for
    /// stability. Output sums to 1 with entries in `[0, 1]`.
    pub fn softmax(&mut self, input: TensorId) -> Result<TensorId> {
        self.check(input)?;
        let ti = &self.tensors[input.0];
        if ti.numel() == 0 {
            return Err(CoreError::InvalidArgument {
                op: "softmax",
                msg: "empty input".into(),
            });
        }
        let data = stable_softmax(&ti.data);
        let shape = ti.shape.clone();
        self.output(shape, data, Op::Softmax { input }, "softmax")
    }

    /// Fused softmax + negative log-likelihood of the target class.
    /// Returns the scalar loss id and the probability vector.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: TensorId,
        target: usize,
    ) -> Result<(TensorId, Vec<S>)> {
        self.check(logits)?;
        let tl = &self.tensors[logits.0];
        let classes = tl.numel();
        if target >= classes {
            return Err(CoreError::ClassOutOfRange {
                index: target,
                classes,
            });
        }
        let probs = stable_softmax(&tl.data);
        let loss = -probs[target].max(S::of_f64(f64::MIN_POSITIVE)).ln();
        let id = self.output(
            vec![1],
            vec![loss],
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs: probs.clone(),
            },
            "softmax_cross_entropy",
        )?;
        Ok((id, probs))
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients sum into every tensor on
    /// every path; leaves keep theirs for the caller to read via
    /// [`Tape::grad`].
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        self.check(loss)?;
        if !self.tensors[loss.0].is_scalar() {
            return Err(CoreError::LossNotScalar {
                shape: self.tensors[loss.0].shape.clone(),
            });
        }
        for t in &mut self.tensors {
            t.grad = None;
        }
        self.tensors[loss.0].grad = Some(vec![S::one()]);

        for i in (0..self.tensors.len()).rev() {
            let Some(grad) = self.tensors[i].grad.clone() else {
                continue;
            };
            let op = self.ops[i].clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, k) = (self.tensors[a.0].shape[0], self.tensors[a.0].shape[1]);
                    let n = self.tensors[b.0].shape[1];
                    let da = mm_nt(&grad, &self.tensors[b.0].data, m, n, k);
                    let db = mm_tn(&self.tensors[a.0].data, &grad, m, k, n);
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Conv2d {
                    input,
                    kernels,
                    bias,
                    stride,
                    pad,
                } => {
                    let (c_in, h, w) = {
                        let s = &self.tensors[input.0].shape;
                        (s[0], s[1], s[2])
                    };
                    let (c_out, kh, kw) = {
                        let s = &self.tensors[kernels.0].shape;
                        (s[0], s[2], s[3])
                    };
                    let out_h = (h + 2 * pad - kh) / stride + 1;
                    let out_w = (w + 2 * pad - kw) / stride + 1;
                    let patch = c_in * kh * kw;
                    let npix = out_h * out_w;
                    // Patch matrix is recomputed rather than cached on the
                    // node; it is cheap next to the two matmuls below.
                    let cols = im2col(
                        &self.tensors[input.0].data,
                        c_in,
                        h,
                        w,
                        kh,
                        kw,
                        stride,
                        pad,
                        out_h,
                        out_w,
                    );
                    let dk = mm_nt(&grad, &cols, c_out, npix, patch);
                    let mut dbias = vec![S::zero(); c_out];
                    for co in 0..c_out {
                        dbias[co] = grad[co * npix..(co + 1) * npix].iter().copied().sum();
                    }
                    let dcols = mm_tn(&self.tensors[kernels.0].data, &grad, c_out, patch, npix);
                    let dinput =
                        col2im(&dcols, c_in, h, w, kh, kw, stride, pad, out_h, out_w);
                    self.accumulate(kernels, &dk);
                    self.accumulate(bias, &dbias);
                    self.accumulate(input, &dinput);
                }
                Op::MaxPool2d {
                    input,
                    kh,
                    kw,
                    stride,
                } => {
                    let (c, h, w) = {
                        let s = &self.tensors[input.0].shape;
                        (s[0], s[1], s[2])
                    };
                    let out_h = (h - kh) / stride + 1;
                    let out_w = (w - kw) / stride + 1;
                    let src = &self.tensors[input.0].data;
                    let mut dinput = vec![S::zero(); src.len()];
                    for ci in 0..c {
                        for oy in 0..out_h {
                            for ox in 0..out_w {
                                let mut best =
                                    src[(ci * h + oy * stride) * w + ox * stride];
                                let mut best_at = (0, 0);
                                for u in 0..kh {
                                    for v in 0..kw {
                                        let x = src
                                            [(ci * h + oy * stride + u) * w + ox * stride + v];
                                        if x > best {
                                            best = x;
                                            best_at = (u, v);
                                        }
                                    }
                                }
                                let (u, v) = best_at;
                                dinput[(ci * h + oy * stride + u) * w + ox * stride + v] +=
                                    grad[(ci * out_h + oy) * out_w + ox];
                            }
                        }
                    }
                    self.accumulate(input, &dinput);
                }
                Op::Relu { input } => {
                    let src = &self.tensors[input.0].data;
                    let dg: Vec<S> = grad
                        .iter()
                        .zip(src.iter())
                        .map(|(&g, &x)| if x > S::zero() { g } else { S::zero() })
                        .collect();
                    self.accumulate(input, &dg);
                }
                Op::Sigmoid { input } => {
                    let out = &self.tensors[i].data;
                    let one = S::one();
                    let dg: Vec<S> = grad
                        .iter()
                        .zip(out.iter())
                        .map(|(&g, &s)| g * s * (one - s))
                        .collect();
                    self.accumulate(input, &dg);
                }
                Op::Tanh { input } => {
                    let out = &self.tensors[i].data;
                    let one = S::one();
                    let dg: Vec<S> = grad
                        .iter()
                        .zip(out.iter())
                        .map(|(&g, &t)| g * (one - t * t))
                        .collect();
                    self.accumulate(input, &dg);
                }
                Op::Add { a, b } => {
                    self.accumulate(a, &grad);
                    self.accumulate(b, &grad);
                }
                Op::Mul { a, b } => {
                    let da: Vec<S> = grad
                        .iter()
                        .zip(self.tensors[b.0].data.iter())
                        .map(|(&g, &y)| g * y)
                        .collect();
                    let db: Vec<S> = grad
                        .iter()
                        .zip(self.tensors[a.0].data.iter())
                        .map(|(&g, &x)| g * x)
                        .collect();
                    self.accumulate(a, &da);
                    self.accumulate(b, &db);
                }
                Op::Scale { input, factor } => {
                    let dg: Vec<S> = grad.iter().map(|&g| g * factor).collect();
                    self.accumulate(input, &dg);
                }
                Op::ConcatChannels { a, b } | Op::ConcatCols { a, b } => {
                    let na = self.tensors[a.0].numel();
                    self.accumulate(a, &grad[..na]);
                    self.accumulate(b, &grad[na..]);
                }
                Op::Reshape { input } => {
                    self.accumulate(input, &grad);
                }
                Op::Sum { input } => {
                    let g = grad[0];
                    let dg = vec![g; self.tensors[input.0].numel()];
                    self.accumulate(input, &dg);
                }
                Op::Softmax { input } => {
                    let out = &self.tensors[i].data;
                    let dot: S = grad
                        .iter()
                        .zip(out.iter())
                        .map(|(&g, &s)| g * s)
                        .sum();
                    let dg: Vec<S> = grad
                        .iter()
                        .zip(out.iter())
                        .map(|(&g, &s)| s * (g - dot))
                        .collect();
                    self.accumulate(input, &dg);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    target,
                    ref probs,
                } => {
                    let g = grad[0];
                    let mut dg: Vec<S> = probs.iter().map(|&p| g * p).collect();
                    dg[target] -= g;
                    self.accumulate(logits, &dg);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, delta: &[S]) {
        let t = &mut self.tensors[id.0];
        match t.grad {
            Some(ref mut g) => {
                for (a, &d) in g.iter_mut().zip(delta.iter()) {
                    *a += d;
                }
            }
            None => t.grad = Some(delta.to_vec()),
        }
    }
}

fn stable_softmax<S: Scalar>(x: &[S]) -> Vec<S> {
    let max = x.iter().copied().fold(S::neg_infinity(), S::max);
    let exps: Vec<S> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: S = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

// ── Raw kernels ──────────────────────────────────────────────────────

/// `a[m×k] · b[k×n]`, ikj order so the inner loop streams both rows.
pub(crate) fn mm_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let row_out = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let row_b = &b[p * n..(p + 1) * n];
            for (o, &bv) in row_out.iter_mut().zip(row_b.iter()) {
                *o += a_ip * bv;
            }
        }
    }
    out
}

/// `a[m×n] · bᵀ` with `b[k×n]`, producing `[m×k]` (row-row dot products).
/// Eight independent accumulators so the reduction vectorizes.
pub(crate) fn mm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, k: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * k];
    for i in 0..m {
        let row_a = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let row_b = &b[j * n..(j + 1) * n];
            let mut lanes = [S::zero(); 8];
            let mut chunks_a = row_a.chunks_exact(8);
            let mut chunks_b = row_b.chunks_exact(8);
            for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
                for l in 0..8 {
                    lanes[l] += ca[l] * cb[l];
                }
            }
            let mut acc = S::zero();
            for (&x, &y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
                acc += x * y;
            }
            for lane in lanes {
                acc += lane;
            }
            out[i * k + j] = acc;
        }
    }
    out
}

/// `aᵀ · b` with `a[m×k]`, `b[m×n]`, producing `[k×n]` (rank-1 updates).
pub(crate) fn mm_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); k * n];
    for p in 0..m {
        let row_b = &b[p * n..(p + 1) * n];
        for i in 0..k {
            let a_pi = a[p * k + i];
            if a_pi == S::zero() {
                continue;
            }
            let row_out = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row_out.iter_mut().zip(row_b.iter()) {
                *o += a_pi * bv;
            }
        }
    }
    out
}

/// Gather conv patches into a `[C_in·kh·kw × out_h·out_w]` matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<S: Scalar>(
    input: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<S> {
    let npix = out_h * out_w;
    let mut cols = vec![S::zero(); c_in * kh * kw * npix];
    for ci in 0..c_in {
        for u in 0..kh {
            for v in 0..kw {
                let row = ((ci * kh + u) * kw + v) * npix;
                for oy in 0..out_h {
                    let iy = (oy * stride + u) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = (ci * h + iy as usize) * w;
                    for ox in 0..out_w {
                        let ix = (ox * stride + v) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[row + oy * out_w + ox] = input[src_row + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add a patch-matrix gradient back onto the input layout.
#[allow(clippy::too_many_arguments)]
fn col2im<S: Scalar>(
    dcols: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<S> {
    let npix = out_h * out_w;
    let mut dinput = vec![S::zero(); c_in * h * w];
    for ci in 0..c_in {
        for u in 0..kh {
            for v in 0..kw {
                let row = ((ci * kh + u) * kw + v) * npix;
                for oy in 0..out_h {
                    let iy = (oy * stride + u) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = (ci * h + iy as usize) * w;
                    for ox in 0..out_w {
                        let ix = (ox * stride + v) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dinput[dst_row + ix as usize] += dcols[row + oy * out_w + ox];
                    }
                }
            }
        }
    }
    dinput
}
