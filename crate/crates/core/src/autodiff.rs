//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Tape`] records every forward operation as a node; [`Tape::backward`]
//! walks the nodes in reverse insertion order and accumulates gradients for
//! every node on a path to a trainable leaf. The op set is exactly what the
//! cascade model and its losses need.

use crate::error::{CoreError, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, T),
    AddScalar(Var),
    Abs(Var),
    Sigmoid(Var),
    LeakyRelu(Var, T),
    Clamp(Var, T, T),
    Ln(Var),
    Mean(Var),
    Sum(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    },
    BiasAdd {
        input: Var,
        bias: Var,
    },
    Upsample2x(Var),
    Crop2d(Var),
    ConcatChannels(Var, Var),
    Reshape(Var),
    GlobalAvgPool(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Recording tape for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Registers a trainable leaf; gradients will be available after
    /// `backward`.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a non-trainable input; backward never propagates into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    /// Gradient of the last `backward` root w.r.t. `v`, if one was computed.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    // ---- elementwise ----------------------------------------------------

    fn zip_same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(CoreError::shape(sa, sb, what));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same_shape(a, b, "add")?;
        let data = self.ew2(a, b, |x, y| x + y);
        Ok(self.push(data, Op::Add(a, b), self.needs(a) || self.needs(b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same_shape(a, b, "sub")?;
        let data = self.ew2(a, b, |x, y| x - y);
        Ok(self.push(data, Op::Sub(a, b), self.needs(a) || self.needs(b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same_shape(a, b, "mul")?;
        let data = self.ew2(a, b, |x, y| x * y);
        Ok(self.push(data, Op::Mul(a, b), self.needs(a) || self.needs(b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same_shape(a, b, "div")?;
        let data = self.ew2(a, b, |x, y| x / y);
        Ok(self.push(data, Op::Div(a, b), self.needs(a) || self.needs(b)))
    }

    fn ew2(&self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.shape().to_vec(), data).expect("same-shape elementwise")
    }

    fn ew1(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.nodes[a.0].value.map(f);
        let needs = self.needs(a);
        self.push(value, op, needs)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.ew1(a, Op::Neg(a), |x| -x)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        self.ew1(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        self.ew1(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.ew1(a, Op::Abs(a), |x| x.abs())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.ew1(a, Op::Sigmoid(a), stable_sigmoid)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        self.ew1(a, Op::LeakyRelu(a, slope), |x| {
            if x > T::zero() {
                x
            } else {
                slope * x
            }
        })
    }

    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.ew1(a, Op::Clamp(a, lo, hi), |x| {
            if x < lo {
                lo
            } else if x > hi {
                hi
            } else {
                x
            }
        })
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.ew1(a, Op::Ln(a), |x| x.ln())
    }

    // ---- reductions ------------------------------------------------------

    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let n = T::from_usize(v.numel()).unwrap();
        let s = v.data().iter().fold(T::zero(), |acc, &x| acc + x);
        let needs = self.needs(a);
        self.push(Tensor::scalar(s / n), Op::Mean(a), needs)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let s = v.data().iter().fold(T::zero(), |acc, &x| acc + x);
        let needs = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    // ---- structured ops --------------------------------------------------

    fn dims4(&self, v: Var, what: &str) -> Result<[usize; 4]> {
        let s = self.shape(v);
        if s.len() != 4 {
            return Err(CoreError::InvalidShape {
                shape: s.to_vec(),
                reason: format!("{what} expects a 4-d [N,C,H,W] tensor"),
            });
        }
        Ok([s[0], s[1], s[2], s[3]])
    }

    /// 2-D convolution: input `[N,C,H,W]`, kernel `[F,C,kH,kW]`, zero padding.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        if stride == 0 {
            return Err(CoreError::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        let [n, c, h, w] = self.dims4(input, "conv2d input")?;
        let [f, kc, kh, kw] = self.dims4(kernel, "conv2d kernel")?;
        if kc != c {
            return Err(CoreError::shape(
                self.shape(input),
                self.shape(kernel),
                "conv2d: kernel channels must match input channels",
            ));
        }
        let (oh, ow) = match (
            kernels::conv_out_extent(h, kh, stride, padding),
            kernels::conv_out_extent(w, kw, stride, padding),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(CoreError::shape(
                    self.shape(input),
                    self.shape(kernel),
                    "conv2d: kernel larger than padded input",
                ))
            }
        };
        let out = kernels::conv2d_forward(
            self.nodes[input.0].value.data(),
            n,
            c,
            h,
            w,
            self.nodes[kernel.0].value.data(),
            f,
            kh,
            kw,
            stride,
            padding,
            oh,
            ow,
        );
        let value = Tensor::new(vec![n, f, oh, ow], out)?;
        let needs = self.needs(input) || self.needs(kernel);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            },
            needs,
        ))
    }

    /// Adds a `[C]` bias across an `[N,C,H,W]` activation.
    pub fn bias_add(&mut self, input: Var, bias: Var) -> Result<Var> {
        let [n, c, h, w] = self.dims4(input, "bias_add input")?;
        if self.shape(bias) != [c] {
            return Err(CoreError::shape(&[c], self.shape(bias), "bias_add"));
        }
        let iv = self.nodes[input.0].value.data();
        let bv = self.nodes[bias.0].value.data();
        let hw = h * w;
        let mut out = Vec::with_capacity(iv.len());
        for s in 0..n {
            for (ch, &b) in bv.iter().enumerate() {
                let base = (s * c + ch) * hw;
                out.extend(iv[base..base + hw].iter().map(|&x| x + b));
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        let needs = self.needs(input) || self.needs(bias);
        Ok(self.push(value, Op::BiasAdd { input, bias }, needs))
    }

    /// Bilinear 2x upsampling (corners not aligned): `[N,C,H,W] -> [N,C,2H,2W]`.
    pub fn upsample_bilinear2x(&mut self, input: Var) -> Result<Var> {
        let [n, c, h, w] = self.dims4(input, "upsample_bilinear2x")?;
        let out = kernels::up2x_forward(self.nodes[input.0].value.data(), n * c, h, w);
        let value = Tensor::new(vec![n, c, 2 * h, 2 * w], out)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Upsample2x(input), needs))
    }

    /// Keeps the top-left `out_h x out_w` window of every plane.
    pub fn crop2d(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let [n, c, h, w] = self.dims4(input, "crop2d")?;
        if out_h > h || out_w > w || out_h == 0 || out_w == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "crop2d to {out_h}x{out_w} from {h}x{w}"
            )));
        }
        if out_h == h && out_w == w {
            // still record a node so backward stays uniform
        }
        let iv = self.nodes[input.0].value.data();
        let mut out = Vec::with_capacity(n * c * out_h * out_w);
        for p in 0..n * c {
            let plane = &iv[p * h * w..(p + 1) * h * w];
            for y in 0..out_h {
                out.extend_from_slice(&plane[y * w..y * w + out_w]);
            }
        }
        let value = Tensor::new(vec![n, c, out_h, out_w], out)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::Crop2d(input), needs))
    }

    /// Concatenates two `[N,*,H,W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [na, ca, ha, wa] = self.dims4(a, "concat_channels lhs")?;
        let [nb, cb, hb, wb] = self.dims4(b, "concat_channels rhs")?;
        if na != nb || ha != hb || wa != wb {
            return Err(CoreError::shape(self.shape(a), self.shape(b), "concat_channels"));
        }
        let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let hw = ha * wa;
        let mut out = Vec::with_capacity(na * (ca + cb) * hw);
        for s in 0..na {
            out.extend_from_slice(&av[s * ca * hw..(s + 1) * ca * hw]);
            out.extend_from_slice(&bv[s * cb * hw..(s + 1) * cb * hw]);
        }
        let value = Tensor::new(vec![na, ca + cb, ha, wa], out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::ConcatChannels(a, b), needs))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[a.0].value.reshaped(shape)?;
        let needs = self.needs(a);
        Ok(self.push(value, Op::Reshape(a), needs))
    }

    /// Spatial mean per channel: `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let [n, c, h, w] = self.dims4(input, "global_avg_pool")?;
        let iv = self.nodes[input.0].value.data();
        let hw = T::from_usize(h * w).unwrap();
        let mut out = Vec::with_capacity(n * c);
        for p in 0..n * c {
            let s = iv[p * h * w..(p + 1) * h * w]
                .iter()
                .fold(T::zero(), |acc, &x| acc + x);
            out.push(s / hw);
        }
        let value = Tensor::new(vec![n, c], out)?;
        let needs = self.needs(input);
        Ok(self.push(value, Op::GlobalAvgPool(input), needs))
    }

    // ---- backward --------------------------------------------------------

    /// Back-propagates from a scalar `root`, filling gradients for every node
    /// on a path to a trainable leaf.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(CoreError::InvalidArgument(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape(root)
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[root.0] = Some(vec![T::one()]);

        for i in (0..=root.0).rev() {
            if !self.nodes[i].needs_grad {
                self.grads[i] = None;
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accum(&mut self, parent: Var, contribution: impl FnOnce() -> Vec<T>) {
        if !self.nodes[parent.0].needs_grad {
            return;
        }
        let c = contribution();
        match &mut self.grads[parent.0] {
            Some(existing) => {
                for (e, v) in existing.iter_mut().zip(c) {
                    *e += v;
                }
            }
            slot => *slot = Some(c),
        }
    }

    fn propagate(&mut self, i: usize, g: &[T]) {
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(a, || g.to_vec());
                self.accum(b, || g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accum(a, || g.to_vec());
                self.accum(b, || g.iter().map(|&v| -v).collect());
            }
            Op::Mul(a, b) => {
                let bv: Vec<T> = self.nodes[b.0].value.data().to_vec();
                self.accum(a, || g.iter().zip(&bv).map(|(&gv, &y)| gv * y).collect());
                let av: Vec<T> = self.nodes[a.0].value.data().to_vec();
                self.accum(b, || g.iter().zip(&av).map(|(&gv, &x)| gv * x).collect());
            }
            Op::Div(a, b) => {
                let bv: Vec<T> = self.nodes[b.0].value.data().to_vec();
                self.accum(a, || g.iter().zip(&bv).map(|(&gv, &y)| gv / y).collect());
                let yv: Vec<T> = self.nodes[i].value.data().to_vec();
                self.accum(b, || {
                    g.iter()
                        .zip(yv.iter().zip(&bv))
                        .map(|(&gv, (&q, &y))| -gv * q / y)
                        .collect()
                });
            }
            Op::Neg(a) => self.accum(a, || g.iter().map(|&v| -v).collect()),
            Op::Scale(a, c) => self.accum(a, || g.iter().map(|&v| c * v).collect()),
            Op::AddScalar(a) => self.accum(a, || g.to_vec()),
            Op::Abs(a) => {
                let xv: Vec<T> = self.nodes[a.0].value.data().to_vec();
                self.accum(a, || {
                    g.iter()
                        .zip(&xv)
                        .map(|(&gv, &x)| {
                            if x > T::zero() {
                                gv
                            } else if x < T::zero() {
                                -gv
                            } else {
                                T::zero()
                            }
                        })
                        .collect()
                });
            }
            Op::Sigmoid(a) => {
                let yv: Vec<T> = self.nodes[i].value.data().to_vec();
                self.accum(a, || {
                    g.iter()
                        .zip(&yv)
                        .map(|(&gv, &y)| gv * y * (T::one() - y))
                        .collect()
                });
            }
            Op::LeakyRelu(a, slope) => {
                let xv: Vec<T> = self.nodes[a.0].value.data().to_vec();
                self.accum(a, || {
                    g.iter()
                        .zip(&xv)
                        .map(|(&gv, &x)| if x > T::zero() { gv } else { slope * gv })
                        .collect()
                });
            }
            Op::Clamp(a, lo, hi) => {
                let xv: Vec<T> = self.nodes[a.0].value.data().to_vec();
                self.accum(a, || {
                    g.iter()
                        .zip(&xv)
                        .map(|(&gv, &x)| if x > lo && x < hi { gv } else { T::zero() })
                        .collect()
                });
            }
            Op::Ln(a) => {
                let xv: Vec<T> = self.nodes[a.0].value.data().to_vec();
                self.accum(a, || g.iter().zip(&xv).map(|(&gv, &x)| gv / x).collect());
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.numel();
                let share = g[0] / T::from_usize(n).unwrap();
                self.accum(a, || vec![share; n]);
            }
            Op::Sum(a) => {
                let n = self.nodes[a.0].value.numel();
                let share = g[0];
                self.accum(a, || vec![share; n]);
            }
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            } => {
                let [n, c, h, w] = {
                    let s = self.shape(input);
                    [s[0], s[1], s[2], s[3]]
                };
                let [f, _, kh, kw] = {
                    let s = self.shape(kernel);
                    [s[0], s[1], s[2], s[3]]
                };
                let (oh, ow) = (self.shape(Var(i))[2], self.shape(Var(i))[3]);
                let want_input = self.nodes[input.0].needs_grad;
                let want_kernel = self.nodes[kernel.0].needs_grad;
                let mut gi = want_input.then(|| vec![T::zero(); n * c * h * w]);
                let mut gk = want_kernel.then(|| vec![T::zero(); f * c * kh * kw]);
                kernels::conv2d_backward(
                    g,
                    self.nodes[input.0].value.data(),
                    n,
                    c,
                    h,
                    w,
                    self.nodes[kernel.0].value.data(),
                    f,
                    kh,
                    kw,
                    stride,
                    padding,
                    oh,
                    ow,
                    gi.as_deref_mut(),
                    gk.as_deref_mut(),
                );
                if let Some(gi) = gi {
                    self.accum(input, || gi);
                }
                if let Some(gk) = gk {
                    self.accum(kernel, || gk);
                }
            }
            Op::BiasAdd { input, bias } => {
                self.accum(input, || g.to_vec());
                let [n, c, h, w] = {
                    let s = self.shape(input);
                    [s[0], s[1], s[2], s[3]]
                };
                self.accum(bias, || {
                    let hw = h * w;
                    let mut gb = vec![T::zero(); c];
                    for s in 0..n {
                        for (ch, gb_ch) in gb.iter_mut().enumerate() {
                            let base = (s * c + ch) * hw;
                            *gb_ch = g[base..base + hw]
                                .iter()
                                .fold(*gb_ch, |acc, &v| acc + v);
                        }
                    }
                    gb
                });
            }
            Op::Upsample2x(a) => {
                let [n, c, h, w] = {
                    let s = self.shape(a);
                    [s[0], s[1], s[2], s[3]]
                };
                self.accum(a, || kernels::up2x_backward(g, n * c, h, w));
            }
            Op::Crop2d(a) => {
                let [n, c, h, w] = {
                    let s = self.shape(a);
                    [s[0], s[1], s[2], s[3]]
                };
                let (oh, ow) = (self.shape(Var(i))[2], self.shape(Var(i))[3]);
                self.accum(a, || {
                    let mut gi = vec![T::zero(); n * c * h * w];
                    for p in 0..n * c {
                        for y in 0..oh {
                            let src = &g[(p * oh + y) * ow..(p * oh + y + 1) * ow];
                            gi[p * h * w + y * w..p * h * w + y * w + ow].copy_from_slice(src);
                        }
                    }
                    gi
                });
            }
            Op::ConcatChannels(a, b) => {
                let [n, ca, h, w] = {
                    let s = self.shape(a);
                    [s[0], s[1], s[2], s[3]]
                };
                let cb = self.shape(b)[1];
                let hw = h * w;
                let ct = ca + cb;
                self.accum(a, || {
                    let mut ga = Vec::with_capacity(n * ca * hw);
                    for s in 0..n {
                        ga.extend_from_slice(&g[s * ct * hw..s * ct * hw + ca * hw]);
                    }
                    ga
                });
                self.accum(b, || {
                    let mut gb = Vec::with_capacity(n * cb * hw);
                    for s in 0..n {
                        gb.extend_from_slice(&g[s * ct * hw + ca * hw..(s + 1) * ct * hw]);
                    }
                    gb
                });
            }
            Op::Reshape(a) => self.accum(a, || g.to_vec()),
            Op::GlobalAvgPool(a) => {
                let [n, c, h, w] = {
                    let s = self.shape(a);
                    [s[0], s[1], s[2], s[3]]
                };
                let hw = h * w;
                let inv = T::one() / T::from_usize(hw).unwrap();
                self.accum(a, || {
                    let mut gi = Vec::with_capacity(n * c * hw);
                    for &go in g.iter().take(n * c) {
                        gi.extend(std::iter::repeat_n(go * inv, hw));
                    }
                    gi
                });
            }
        }
    }
}

fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
