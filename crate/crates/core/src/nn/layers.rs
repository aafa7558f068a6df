//! The five layer kinds used by the feedback networks.
//!
//! Every layer maps a batch-leading tensor to a batch-leading tensor. `forward`
//! never mutates the layer; it returns a [`Cache`] that `backward` consumes.
//! Batch-norm running statistics are folded in separately through
//! [`Layer::commit_stats`] so that frozen layers can be run in train mode
//! without being touched.

use rand::Rng;

use crate::error::{Error, Result};

use super::init::{truncated_normal, INIT_STDDEV};
use super::{Scalar, Tensor};

pub const LEAKY_RELU_SLOPE: f64 = 0.3;
pub const BN_EPSILON: f64 = 1e-5;
const CONV_BLOCK_VALUES: usize = 1 << 18;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Sigmoid,
    LeakyRelu,
}

impl ActivationKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sigmoid" => Ok(Self::Sigmoid),
            "leaky_relu" => Ok(Self::LeakyRelu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::LeakyRelu => "leaky_relu",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Self::Sigmoid => 0,
            Self::LeakyRelu => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Self::Sigmoid),
            1 => Some(Self::LeakyRelu),
            _ => None,
        }
    }
}

/// Numerically stable logistic function, kept strictly inside (0, 1).
pub fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    let y = if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    };
    let hi = one - T::epsilon() / T::lit(2.0);
    y.max(T::min_positive_value()).min(hi)
}

pub fn leaky_relu<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        x
    } else {
        T::lit(LEAKY_RELU_SLOPE) * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d,
    BatchNorm,
    Activation,
    Reshape,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            Self::Dense => 0,
            Self::Conv2d => 1,
            Self::BatchNorm => 2,
            Self::Activation => 3,
            Self::Reshape => 4,
        }
    }
}

/// Shape description of a layer applied to a concrete per-sample input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    pub kernel: Option<usize>,
    pub activation: Option<ActivationKind>,
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: truncated_normal(&[outputs, inputs], INIT_STDDEV, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::dims("dense parameters", weight.shape(), bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, inputs, outputs) = (x.batch(), self.inputs(), self.outputs());
        if x.shape().len() != 2 || x.shape()[1] != inputs {
            return Err(Error::dims("dense input", x.shape(), self.weight.shape()));
        }
        let mut out = Vec::with_capacity(batch * outputs);
        for _ in 0..batch {
            out.extend_from_slice(self.bias.data());
        }
        T::gemm(
            batch,
            inputs,
            outputs,
            x.data(),
            false,
            self.weight.data(),
            true,
            &mut out,
            true,
        );
        Tensor::new(&[batch, outputs], out)
    }

    fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>, grads: Option<&mut [Tensor<T>]>) -> Tensor<T> {
        let (batch, inputs, outputs) = (input.batch(), self.inputs(), self.outputs());
        if let Some(grads) = grads {
            let (gw, gb) = grads.split_at_mut(1);
            T::gemm(
                outputs,
                batch,
                inputs,
                grad_out.data(),
                true,
                input.data(),
                false,
                gw[0].data_mut(),
                true,
            );
            let gb = gb[0].data_mut();
            for row in grad_out.data().chunks_exact(outputs) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
        }
        let mut gx = vec![T::zero(); batch * inputs];
        T::gemm(
            batch,
            outputs,
            inputs,
            grad_out.data(),
            false,
            self.weight.data(),
            false,
            &mut gx,
            false,
        );
        Tensor::new(&[batch, inputs], gx).expect("input shape")
    }
}

/// Same-padded 2-D cross-correlation with an odd square kernel.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, size: usize, rng: &mut R) -> Result<Self> {
        check_kernel_size(size)?;
        Ok(Self {
            kernel: truncated_normal(&[out_channels, in_channels, size, size], INIT_STDDEV, rng),
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    pub fn from_parts(kernel: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let s = kernel.shape();
        if s.len() != 4 || s[2] != s[3] || bias.shape() != [s[0]] {
            return Err(Error::dims("conv2d parameters", s, bias.shape()));
        }
        check_kernel_size(s[2])?;
        Ok(Self { kernel, bias })
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn size(&self) -> usize {
        self.kernel.shape()[2]
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.in_channels() {
            return Err(Error::dims("conv2d input", s, self.kernel.shape()));
        }
        Ok((s[0], s[2], s[3]))
    }

    /// Items per im2col block, keeping the patch buffer cache-sized.
    fn chunk(&self, channels: usize, hw: usize) -> usize {
        (CONV_BLOCK_VALUES / (channels * self.size() * self.size() * hw)).max(1)
    }

    /// Kernel for the input gradient: channels swapped and taps flipped, as
    /// an `in_c x (out_c * k * k)` matrix.
    fn flipped_kernel(&self) -> Vec<T> {
        let (oc, ic, k) = (self.out_channels(), self.in_channels(), self.size());
        let src = self.kernel.data();
        let mut out = vec![T::zero(); ic * oc * k * k];
        for o in 0..oc {
            for c in 0..ic {
                for ky in 0..k {
                    for kx in 0..k {
                        out[((c * oc + o) * k + ky) * k + kx] =
                            src[((o * ic + c) * k + (k - 1 - ky)) * k + (k - 1 - kx)];
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, h, w) = self.check_input(x)?;
        let (ic, oc, k, hw) = (self.in_channels(), self.out_channels(), self.size(), h * w);
        let out = correlate(
            x.data(),
            batch,
            ic,
            oc,
            k,
            h,
            w,
            self.kernel.data(),
            self.chunk(ic, hw),
            Some(self.bias.data()),
        );
        Tensor::new(&[batch, oc, h, w], out)
    }

    fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>, grads: Option<&mut [Tensor<T>]>) -> Tensor<T> {
        let (batch, h, w) = (input.batch(), input.shape()[2], input.shape()[3]);
        let (ic, oc, k, hw) = (self.in_channels(), self.out_channels(), self.size(), h * w);
        if let Some(grads) = grads {
            let patch = ic * k * k;
            let chunk = self.chunk(ic, hw);
            let mut cols = vec![T::zero(); patch * chunk * hw];
            let mut gout_t = vec![T::zero(); oc * chunk * hw];
            let (gk, gb) = grads.split_at_mut(1);
            for start in (0..batch).step_by(chunk) {
                let n = chunk.min(batch - start);
                let ld = n * hw;
                for i in 0..n {
                    im2col(input.item(start + i), ic, k, h, w, &mut cols, ld, i * hw);
                    let g = grad_out.item(start + i);
                    for o in 0..oc {
                        gout_t[o * ld + i * hw..][..hw].copy_from_slice(&g[o * hw..(o + 1) * hw]);
                    }
                }
                let gout_t = &gout_t[..oc * ld];
                T::gemm(
                    oc,
                    ld,
                    patch,
                    gout_t,
                    false,
                    &cols[..patch * ld],
                    true,
                    gk[0].data_mut(),
                    true,
                );
                for (g, row) in gb[0].data_mut().iter_mut().zip(gout_t.chunks_exact(ld)) {
                    *g += row.iter().copied().sum::<T>();
                }
            }
        }
        let flipped = self.flipped_kernel();
        let gx = correlate(
            grad_out.data(),
            batch,
            oc,
            ic,
            k,
            h,
            w,
            &flipped,
            self.chunk(oc, hw),
            None,
        );
        Tensor::new(input.shape(), gx).expect("input shape")
    }
}

/// Same-padded cross-correlation of `batch` items of `ic x h x w` with an
/// `oc x (ic * k * k)` kernel matrix, processed `chunk` items per GEMM.
#[allow(clippy::too_many_arguments)]
fn correlate<T: Scalar>(
    x: &[T],
    batch: usize,
    ic: usize,
    oc: usize,
    k: usize,
    h: usize,
    w: usize,
    kernel: &[T],
    chunk: usize,
    bias: Option<&[T]>,
) -> Vec<T> {
    let hw = h * w;
    let patch = ic * k * k;
    let mut out = vec![T::zero(); batch * oc * hw];
    let mut cols = vec![T::zero(); patch * chunk * hw];
    let mut prod = vec![T::zero(); oc * chunk * hw];
    for start in (0..batch).step_by(chunk) {
        let n = chunk.min(batch - start);
        let ld = n * hw;
        for i in 0..n {
            im2col(
                &x[(start + i) * ic * hw..][..ic * hw],
                ic,
                k,
                h,
                w,
                &mut cols,
                ld,
                i * hw,
            );
        }
        T::gemm(
            oc,
            patch,
            ld,
            kernel,
            false,
            &cols[..patch * ld],
            false,
            &mut prod[..oc * ld],
            false,
        );
        for i in 0..n {
            let dst = &mut out[(start + i) * oc * hw..][..oc * hw];
            for (o, row) in dst.chunks_exact_mut(hw).enumerate() {
                let b = bias.map_or(T::zero(), |b| b[o]);
                for (d, &p) in row.iter_mut().zip(&prod[o * ld + i * hw..][..hw]) {
                    *d = p + b;
                }
            }
        }
    }
    out
}

/// Writes the `k x k` patches of one `channels x h x w` item into `cols`, a
/// `(channels * k * k) x ld` row-major buffer, at column offset `off`.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(item: &[T], channels: usize, k: usize, h: usize, w: usize, cols: &mut [T], ld: usize, off: usize) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for c in 0..channels {
        let plane = &item[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * ld + off..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let (x0, x1) = valid_range(dx, w);
                let s0 = (x0 as isize + dx) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    dst[..x0].fill(T::zero());
                    dst[x1..].fill(T::zero());
                    dst[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Output columns `x` in `[x0, x1)` whose source `x + dx` lies inside `0..w`.
fn valid_range(dx: isize, w: usize) -> (usize, usize) {
    let x0 = (-dx).clamp(0, w as isize) as usize;
    let x1 = (w as isize - dx).clamp(0, w as isize) as usize;
    (x0, x1.max(x0))
}

fn check_kernel_size(size: usize) -> Result<()> {
    if size % 2 == 0 {
        return Err(Error::Config(format!(
            "conv2d kernel size must be odd for same padding, got {size}"
        )));
    }
    Ok(())
}

/// Per-feature batch normalization. Accepts `batch x features` or
/// `batch x channels x ...`, normalizing each channel over the batch and the
/// remaining axes.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub scale: Tensor<T>,
    pub shift: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    /// False until the running statistics hold a real batch estimate.
    primed: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        Self {
            scale: Tensor::full(&[features], T::one()),
            shift: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], T::one()),
            primed: false,
        }
    }

    pub fn from_parts(scale: Tensor<T>, shift: Tensor<T>, mean: Tensor<T>, var: Tensor<T>) -> Result<Self> {
        let s = scale.shape().to_vec();
        if s.len() != 1 || shift.shape() != s || mean.shape() != s || var.shape() != s {
            return Err(Error::dims("batchnorm parameters", &s, shift.shape()));
        }
        Ok(Self {
            scale,
            shift,
            running_mean: mean,
            running_var: var,
            primed: true,
        })
    }

    pub fn features(&self) -> usize {
        self.scale.len()
    }

    /// Values per feature in one sample: 1 for `batch x features`, the
    /// spatial size for `batch x channels x ...`.
    fn inner(&self, shape: &[usize]) -> Result<usize> {
        let f = self.features();
        if shape.len() < 2 || shape[1] != f {
            return Err(Error::dims("batchnorm input", shape, &[f]));
        }
        Ok(shape[2..].iter().product())
    }

    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Cache<T>)> {
        let f = self.features();
        let inner = self.inner(x.shape())?;
        let batch = x.batch();
        let eps = T::lit(BN_EPSILON);
        let (mean, var) = match mode {
            Mode::Train => {
                if batch < 2 {
                    return Err(Error::InvalidBatch(batch));
                }
                let n = T::lit((batch * inner) as f64);
                let mut mean = vec![T::zero(); f];
                for (i, plane) in x.data().chunks_exact(inner).enumerate() {
                    mean[i % f] += plane.iter().fold(T::zero(), |a, &v| a + v);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![T::zero(); f];
                for (i, plane) in x.data().chunks_exact(inner).enumerate() {
                    let m = mean[i % f];
                    var[i % f] += plane.iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m));
                }
                var.iter_mut().for_each(|s| *s /= n);
                (mean, var)
            }
            Mode::Infer => (self.running_mean.data().to_vec(), self.running_var.data().to_vec()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for (i, plane) in x.data().chunks_exact(inner).enumerate() {
            let j = i % f;
            let (scale, shift) = (self.scale.data()[j], self.shift.data()[j]);
            for &v in plane {
                let h = (v - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(scale * h + shift);
            }
        }
        let shape = x.shape();
        Ok((
            Tensor::new(shape, out)?,
            Cache::BatchNorm {
                xhat: Tensor::new(shape, xhat)?,
                inv_std,
                mean,
                var,
                mode,
            },
        ))
    }

    fn backward(&self, cache: &Cache<T>, grad_out: &Tensor<T>, grads: Option<&mut [Tensor<T>]>) -> Tensor<T> {
        let Cache::BatchNorm {
            xhat, inv_std, mode, ..
        } = cache
        else {
            unreachable!("cache kind checked by Layer::backward")
        };
        let f = self.features();
        let inner: usize = grad_out.shape()[2..].iter().product();
        let count = grad_out.batch() * inner;
        let mut sum_dy = vec![T::zero(); f];
        let mut sum_dy_xhat = vec![T::zero(); f];
        let planes = grad_out.data().chunks_exact(inner).zip(xhat.data().chunks_exact(inner));
        for (i, (gy, xh)) in planes.clone().enumerate() {
            for (&g, &h) in gy.iter().zip(xh) {
                sum_dy[i % f] += g;
                sum_dy_xhat[i % f] += g * h;
            }
        }
        if let Some(grads) = grads {
            for j in 0..f {
                grads[0].data_mut()[j] += sum_dy_xhat[j];
                grads[1].data_mut()[j] += sum_dy[j];
            }
        }
        let scale = self.scale.data();
        let mut gx = Vec::with_capacity(grad_out.len());
        let n = T::lit(count as f64);
        for (i, (gy, xh)) in planes.enumerate() {
            let j = i % f;
            let a = scale[j] * inv_std[j];
            for (&g, &h) in gy.iter().zip(xh) {
                gx.push(match mode {
                    Mode::Train => a / n * (n * g - sum_dy[j] - h * sum_dy_xhat[j]),
                    Mode::Infer => g * a,
                });
            }
        }
        Tensor::new(grad_out.shape(), gx).expect("same shape")
    }

    /// The first committed batch replaces the initial statistics; later ones
    /// are blended in with momentum [`BN_MOMENTUM`].
    fn commit(&mut self, mean: &[T], var: &[T]) {
        if !self.primed {
            self.running_mean.data_mut().copy_from_slice(mean);
            self.running_var.data_mut().copy_from_slice(var);
            self.primed = true;
            return;
        }
        let mom = T::lit(BN_MOMENTUM);
        let rest = T::one() - mom;
        for (r, &m) in self.running_mean.data_mut().iter_mut().zip(mean) {
            *r = mom * *r + rest * m;
        }
        for (r, &v) in self.running_var.data_mut().iter_mut().zip(var) {
            *r = mom * *r + rest * v;
        }
    }
}

/// Per-sample reshape; the batch axis is preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reshape {
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
}

impl Reshape {
    pub fn new(input_dims: &[usize], output_dims: &[usize]) -> Result<Self> {
        if input_dims.iter().product::<usize>() != output_dims.iter().product::<usize>() {
            return Err(Error::dims("reshape layer", input_dims, output_dims));
        }
        Ok(Self {
            input_dims: input_dims.to_vec(),
            output_dims: output_dims.to_vec(),
        })
    }

    fn apply<T: Scalar>(x: &Tensor<T>, from: &[usize], to: &[usize]) -> Result<Tensor<T>> {
        if &x.shape()[1..] != from {
            return Err(Error::dims("reshape input", &x.shape()[1..], from));
        }
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(to);
        x.clone().reshape(&shape)
    }
}

/// Values a layer keeps from its forward pass for the reverse pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    BatchNorm {
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        mean: Vec<T>,
        var: Vec<T>,
        mode: Mode,
    },
    Shape,
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Activation(ActivationKind),
    Reshape(Reshape),
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::BatchNorm(_) => LayerKind::BatchNorm,
            Layer::Activation(_) => LayerKind::Activation,
            Layer::Reshape(_) => LayerKind::Reshape,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Cache<T>)> {
        match self {
            Layer::Dense(d) => Ok((d.forward(x)?, Cache::Input(x.clone()))),
            Layer::Conv2d(c) => Ok((c.forward(x)?, Cache::Input(x.clone()))),
            Layer::BatchNorm(bn) => bn.forward(x, mode),
            Layer::Activation(kind) => {
                let y = activation_forward(*kind, x);
                match kind {
                    ActivationKind::Sigmoid => Ok((y.clone(), Cache::Output(y))),
                    ActivationKind::LeakyRelu => Ok((y, Cache::Input(x.clone()))),
                }
            }
            Layer::Reshape(r) => Ok((Reshape::apply(x, &r.input_dims, &r.output_dims)?, Cache::Shape)),
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv2d(c) => c.forward(x),
            Layer::Activation(kind) => Ok(activation_forward(*kind, x)),
            _ => Ok(self.forward(x, Mode::Infer)?.0),
        }
    }

    /// Propagates `grad_out` to the layer input, accumulating parameter
    /// gradients into `grads` (aligned with [`Layer::params`]) when given.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        grad_out: &Tensor<T>,
        grads: Option<&mut [Tensor<T>]>,
    ) -> Result<Tensor<T>> {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => Ok(d.backward(x, grad_out, grads)),
            (Layer::Conv2d(c), Cache::Input(x)) => Ok(c.backward(x, grad_out, grads)),
            (Layer::BatchNorm(bn), cache @ Cache::BatchNorm { .. }) => Ok(bn.backward(cache, grad_out, grads)),
            (Layer::Activation(ActivationKind::Sigmoid), Cache::Output(y)) => {
                grad_out.zip_map(y, |g, s| g * s * (T::one() - s))
            }
            (Layer::Activation(ActivationKind::LeakyRelu), Cache::Input(x)) => {
                let slope = T::lit(LEAKY_RELU_SLOPE);
                grad_out.zip_map(x, |g, v| if v >= T::zero() { g } else { g * slope })
            }
            (Layer::Reshape(r), Cache::Shape) => Reshape::apply(grad_out, &r.output_dims, &r.input_dims),
            _ => Err(Error::Usage(format!(
                "cache does not belong to a {:?} layer",
                self.kind()
            ))),
        }
    }

    /// Folds the batch statistics of a train-mode pass into the running estimates.
    pub fn commit_stats(&mut self, cache: &Cache<T>) {
        if let (
            Layer::BatchNorm(bn),
            Cache::BatchNorm {
                mean,
                var,
                mode: Mode::Train,
                ..
            },
        ) = (self, cache)
        {
            bn.commit(mean, var);
        }
    }

    /// Trainable tensors.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Conv2d(c) => vec![&c.kernel, &c.bias],
            Layer::BatchNorm(bn) => vec![&bn.scale, &bn.shift],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Conv2d(c) => vec![&mut c.kernel, &mut c.bias],
            Layer::BatchNorm(bn) => vec![&mut bn.scale, &mut bn.shift],
            _ => vec![],
        }
    }

    /// Trainable tensors followed by non-trainable state (batch-norm running statistics).
    pub fn state(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::BatchNorm(bn) => vec![&bn.scale, &bn.shift, &bn.running_mean, &bn.running_var],
            _ => self.params(),
        }
    }

    pub fn spec(&self, input_dims: &[usize]) -> LayerSpec {
        let (output_dims, kernel, activation) = match self {
            Layer::Dense(d) => (vec![d.outputs()], None, None),
            Layer::Conv2d(c) => {
                let mut dims = input_dims.to_vec();
                if let Some(ch) = dims.first_mut() {
                    *ch = c.out_channels();
                }
                (dims, Some(c.size()), None)
            }
            Layer::Activation(kind) => (input_dims.to_vec(), None, Some(*kind)),
            Layer::BatchNorm(_) => (input_dims.to_vec(), None, None),
            Layer::Reshape(r) => (r.output_dims.clone(), None, None),
        };
        LayerSpec {
            kind: self.kind(),
            input_dims: input_dims.to_vec(),
            output_dims,
            kernel,
            activation,
        }
    }
}

pub fn activation_forward<T: Scalar>(kind: ActivationKind, x: &Tensor<T>) -> Tensor<T> {
    match kind {
        ActivationKind::Sigmoid => x.map(sigmoid),
        ActivationKind::LeakyRelu => x.map(leaky_relu),
    }
}
