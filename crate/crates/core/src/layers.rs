//! Feedforward layers: convolution, max pooling, dense, dropout.
//!
//! Convolution is computed as cross-correlation (the kernel is not flipped):
//! `S[f, i, j] = b[f] + Σ_c Σ_m Σ_n I_pad[c, i·s + m, j·s + n] · K[f, c, m, n]`.
//! Forward kernels take a [`MacSink`] so that cost-model tests can count the
//! multiply-accumulates they actually execute.

use serde::{Deserialize, Serialize};

use crate::cost::MacSink;
use crate::error::{Error, Result};
use crate::tensor::{matvec_acc, matvec_t_acc, outer_acc, Activation, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
    /// Zero padding so that `out = ceil(in / stride)`; an odd deficit puts
    /// the extra element on the left/top.
    Same,
}

impl Padding {
    /// Returns `(pad_before, padded_len)` for one spatial axis.
    pub fn resolve(self, input: usize, kernel: usize, stride: usize) -> (usize, usize) {
        match self {
            Padding::Valid => (0, input),
            Padding::Same => {
                let out = input.div_ceil(stride);
                let total = ((out - 1) * stride + kernel).saturating_sub(input);
                let before = total.div_ceil(2);
                (before, input + total)
            }
        }
    }
}

/// Output extent `floor((padded - kernel) / stride) + 1`, or `None` if the
/// kernel does not fit.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<usize> {
    let (_, padded) = padding.resolve(input, kernel, stride);
    if kernel == 0 || stride == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2DLayer {
    /// `[F, C_in, KH, KW]`
    pub weights: Tensor,
    /// `[F]`
    pub bias: Tensor,
    pub stride: (usize, usize),
    pub padding: Padding,
}

struct ConvGeometry {
    channels: usize,
    kh: usize,
    kw: usize,
    pad_top: usize,
    pad_left: usize,
    hp: usize,
    wp: usize,
    oh: usize,
    ow: usize,
}

impl Conv2DLayer {
    /// Square `D×D` kernel with equal strides.
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, padding: Padding) -> Result<Self> {
        Self::with_strides(weights, bias, (stride, stride), padding)
    }

    pub fn with_strides(weights: Tensor, bias: Tensor, stride: (usize, usize), padding: Padding) -> Result<Self> {
        if weights.rank() != 4 {
            return Err(Error::shape(format!("conv weights must be rank 4, got {:?}", weights.shape())));
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::shape(format!(
                "conv bias {:?} does not match {} filters",
                bias.shape(),
                weights.shape()[0]
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::invalid("stride must be >= 1"));
        }
        Ok(Self { weights, bias, stride, padding })
    }

    /// Glorot-initialized layer with zero bias.
    pub fn init(
        filters: usize,
        in_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let fan_out = filters * kernel.0 * kernel.1;
        let w = Tensor::glorot(&[filters, in_channels, kernel.0, kernel.1], fan_in, fan_out, rng)?;
        Self::with_strides(w, Tensor::zeros(&[filters])?, stride, padding)
    }

    pub fn num_filters(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }

    /// `[F, H', W']` for an input of `[C, H, W]`.
    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let g = self.geometry(input)?;
        Ok([self.num_filters(), g.oh, g.ow])
    }

    fn geometry(&self, input: &[usize]) -> Result<ConvGeometry> {
        let [c, h, w] = match input {
            [c, h, w] => [*c, *h, *w],
            s => return Err(Error::shape(format!("conv2d input must be [C,H,W], got {s:?}"))),
        };
        if c != self.in_channels() {
            return Err(Error::shape(format!("conv2d expects {} channels, got {c}", self.in_channels())));
        }
        let (kh, kw) = self.kernel();
        let (pad_top, hp) = self.padding.resolve(h, kh, self.stride.0);
        let (pad_left, wp) = self.padding.resolve(w, kw, self.stride.1);
        let oh = conv_output_len(h, kh, self.stride.0, self.padding);
        let ow = conv_output_len(w, kw, self.stride.1, self.padding);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok(ConvGeometry { channels: c, kh, kw, pad_top, pad_left, hp, wp, oh, ow }),
            _ => Err(Error::shape(format!(
                "kernel {kh}x{kw} larger than padded input {hp}x{wp}"
            ))),
        }
    }

    fn pad(&self, input: &Tensor, g: &ConvGeometry) -> Vec<f64> {
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let mut out = vec![0.0; g.channels * g.hp * g.wp];
        for c in 0..g.channels {
            for y in 0..h {
                let src = &input.data()[(c * h + y) * w..(c * h + y + 1) * w];
                let dst = (c * g.hp + y + g.pad_top) * g.wp + g.pad_left;
                out[dst..dst + w].copy_from_slice(src);
            }
        }
        out
    }

    pub fn conv2d_forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_counted(input, &mut ())
    }

    pub fn forward_counted<S: MacSink>(&self, input: &Tensor, sink: &mut S) -> Result<Tensor> {
        let g = self.geometry(input.shape())?;
        let xp = self.pad(input, &g);
        let f_count = self.num_filters();
        let w = self.weights.data();
        let mut out = vec![0.0; f_count * g.oh * g.ow];
        for f in 0..f_count {
            let bias = self.bias.data()[f];
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = bias;
                    for c in 0..g.channels {
                        for ky in 0..g.kh {
                            let row = (c * g.hp + oy * self.stride.0 + ky) * g.wp + ox * self.stride.1;
                            let wrow = ((f * g.channels + c) * g.kh + ky) * g.kw;
                            for kx in 0..g.kw {
                                acc += xp[row + kx] * w[wrow + kx];
                                sink.add(1);
                            }
                        }
                    }
                    out[(f * g.oh + oy) * g.ow + ox] = acc;
                }
            }
        }
        Tensor::from_vec(&[f_count, g.oh, g.ow], out)
    }

    /// Gradients `(d_input, d_weights, d_bias)` given the upstream gradient
    /// of the pre-activation output.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let g = self.geometry(input.shape())?;
        let f_count = self.num_filters();
        if grad_out.shape() != [f_count, g.oh, g.ow] {
            return Err(Error::shape(format!("conv2d grad shape {:?}", grad_out.shape())));
        }
        let xp = self.pad(input, &g);
        let w = self.weights.data();
        let go = grad_out.data();
        let mut dxp = vec![0.0; xp.len()];
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; f_count];
        for f in 0..f_count {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let gv = go[(f * g.oh + oy) * g.ow + ox];
                    if gv == 0.0 {
                        continue;
                    }
                    db[f] += gv;
                    for c in 0..g.channels {
                        for ky in 0..g.kh {
                            let row = (c * g.hp + oy * self.stride.0 + ky) * g.wp + ox * self.stride.1;
                            let wrow = ((f * g.channels + c) * g.kh + ky) * g.kw;
                            for kx in 0..g.kw {
                                dw[wrow + kx] += gv * xp[row + kx];
                                dxp[row + kx] += gv * w[wrow + kx];
                            }
                        }
                    }
                }
            }
        }
        let (h, wd) = (input.shape()[1], input.shape()[2]);
        let mut dx = vec![0.0; input.len()];
        for c in 0..g.channels {
            for y in 0..h {
                let src = (c * g.hp + y + g.pad_top) * g.wp + g.pad_left;
                dx[(c * h + y) * wd..(c * h + y + 1) * wd].copy_from_slice(&dxp[src..src + wd]);
            }
        }
        Ok((
            Tensor::from_vec(input.shape(), dx)?,
            Tensor::from_vec(self.weights.shape(), dw)?,
            Tensor::from_vec(&[f_count], db)?,
        ))
    }
}

/// One-dimensional convolution over `[C_in, L]` inputs, stored as a
/// `1×D` two-dimensional kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1DLayer {
    pub inner: Conv2DLayer,
}

impl Conv1DLayer {
    /// `weights` is `[F, C_in, D]`.
    pub fn new(weights: Tensor, bias: Tensor, stride: usize, padding: Padding) -> Result<Self> {
        let s = weights.shape().to_vec();
        if s.len() != 3 {
            return Err(Error::shape(format!("conv1d weights must be [F,C,D], got {s:?}")));
        }
        let w = weights.reshape(&[s[0], s[1], 1, s[2]])?;
        Ok(Self { inner: Conv2DLayer::with_strides(w, bias, (1, stride), padding)? })
    }

    pub fn init(filters: usize, in_channels: usize, kernel: usize, stride: usize, padding: Padding, rng: &mut RngStream) -> Result<Self> {
        Ok(Self { inner: Conv2DLayer::init(filters, in_channels, (1, kernel), (1, stride), padding, rng)? })
    }

    fn lift(input: &Tensor) -> Result<Tensor> {
        match input.shape() {
            [c, l] => input.reshape(&[*c, 1, *l]),
            s => Err(Error::shape(format!("conv1d input must be [C,L], got {s:?}"))),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 2]> {
        match input {
            [c, l] => {
                let [f, _, ol] = self.inner.output_shape(&[*c, 1, *l])?;
                Ok([f, ol])
            }
            s => Err(Error::shape(format!("conv1d input must be [C,L], got {s:?}"))),
        }
    }

    pub fn conv1d_forward(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_counted(input, &mut ())
    }

    pub fn forward_counted<S: MacSink>(&self, input: &Tensor, sink: &mut S) -> Result<Tensor> {
        let out = self.inner.forward_counted(&Self::lift(input)?, sink)?;
        let s = out.shape().to_vec();
        out.reshape(&[s[0], s[2]])
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let go = grad_out.reshape(&[grad_out.shape()[0], 1, grad_out.shape()[1]])?;
        let (dx, dw, db) = self.inner.backward(&Self::lift(input)?, &go)?;
        Ok((dx.reshape(input.shape())?, dw, db))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPool2DLayer {
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl MaxPool2DLayer {
    /// Square window; stride defaults to the window size.
    pub fn new(window: usize, stride: Option<usize>) -> Result<Self> {
        let s = stride.unwrap_or(window);
        Self::with_dims((window, window), (s, s))
    }

    pub fn with_dims(window: (usize, usize), stride: (usize, usize)) -> Result<Self> {
        if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::invalid("pool window and stride must be >= 1"));
        }
        Ok(Self { window, stride })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let [c, h, w] = match input {
            [c, h, w] => [*c, *h, *w],
            s => return Err(Error::shape(format!("maxpool input must be [C,H,W], got {s:?}"))),
        };
        if self.window.0 > h || self.window.1 > w {
            return Err(Error::shape(format!(
                "pool window {:?} exceeds input {h}x{w}",
                self.window
            )));
        }
        Ok([c, (h - self.window.0) / self.stride.0 + 1, (w - self.window.1) / self.stride.1 + 1])
    }

    pub fn maxpool_forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_argmax(input, &mut ())?.0)
    }

    /// Forward pass plus the flat input index chosen for each output
    /// (first maximum on ties). The sink is charged one unit per output.
    pub fn forward_with_argmax<S: MacSink>(&self, input: &Tensor, sink: &mut S) -> Result<(Tensor, Vec<usize>)> {
        let [c, oh, ow] = self.output_shape(input.shape())?;
        let (h, w) = (input.shape()[1], input.shape()[2]);
        let x = input.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut idx = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    for m in 0..self.window.0 {
                        for n in 0..self.window.1 {
                            let i = (ch * h + oy * self.stride.0 + m) * w + ox * self.stride.1 + n;
                            if best == usize::MAX || x[i] > x[best] {
                                best = i;
                            }
                        }
                    }
                    sink.add(1);
                    out.push(x[best]);
                    idx.push(best);
                }
            }
        }
        Ok((Tensor::from_vec(&[c, oh, ow], out)?, idx))
    }

    pub fn backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
        let mut dx = Tensor::zeros(input_shape)?;
        for (&i, &g) in argmax.iter().zip(grad_out.data()) {
            dx.data_mut()[i] += g;
        }
        Ok(dx)
    }
}

/// Max pooling over `[C, L]` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaxPool1DLayer {
    pub inner: MaxPool2DLayer,
}

impl MaxPool1DLayer {
    pub fn new(window: usize, stride: Option<usize>) -> Result<Self> {
        Ok(Self { inner: MaxPool2DLayer::with_dims((1, window), (1, stride.unwrap_or(window)))? })
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 2]> {
        match input {
            [c, l] => {
                let [c, _, ol] = self.inner.output_shape(&[*c, 1, *l])?;
                Ok([c, ol])
            }
            s => Err(Error::shape(format!("maxpool1d input must be [C,L], got {s:?}"))),
        }
    }

    pub fn forward_with_argmax<S: MacSink>(&self, input: &Tensor, sink: &mut S) -> Result<(Tensor, Vec<usize>)> {
        let [c, l] = match input.shape() {
            [c, l] => [*c, *l],
            s => return Err(Error::shape(format!("maxpool1d input must be [C,L], got {s:?}"))),
        };
        let (out, idx) = self.inner.forward_with_argmax(&input.reshape(&[c, 1, l])?, sink)?;
        let s = out.shape().to_vec();
        Ok((out.reshape(&[s[0], s[2]])?, idx))
    }

    pub fn maxpool_forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_argmax(input, &mut ())?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenseActivation {
    Sigmoid,
    Relu,
    Tanh,
    Softmax,
    None,
}

impl DenseActivation {
    /// Gradient with respect to the pre-activation, given the output `y`
    /// and the upstream gradient `g`.
    pub fn backward(self, y: &[f64], g: &[f64]) -> Vec<f64> {
        match self {
            DenseActivation::None => g.to_vec(),
            DenseActivation::Softmax => {
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                y.iter().zip(g).map(|(yi, gi)| yi * (gi - dot)).collect()
            }
            a => {
                let act = a.elementwise().expect("elementwise activation");
                y.iter().zip(g).map(|(&yi, &gi)| gi * act.derivative_from_output(yi)).collect()
            }
        }
    }

    pub fn apply(self, z: &mut [f64]) {
        match self {
            DenseActivation::Softmax => softmax_in_place(z),
            a => {
                if let Some(act) = a.elementwise() {
                    z.iter_mut().for_each(|v| *v = act.apply(*v));
                }
            }
        }
    }

    fn elementwise(self) -> Option<Activation> {
        match self {
            DenseActivation::Sigmoid => Some(Activation::Sigmoid),
            DenseActivation::Relu => Some(Activation::Relu),
            DenseActivation::Tanh => Some(Activation::Tanh),
            DenseActivation::Softmax | DenseActivation::None => None,
        }
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// `y = activation(W·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[out, in]`
    pub weights: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: DenseActivation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: DenseActivation) -> Result<Self> {
        if weights.rank() != 2 || bias.shape() != [weights.shape()[0]] {
            return Err(Error::shape(format!(
                "dense weights {:?} / bias {:?} inconsistent",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Self { weights, bias, activation })
    }

    pub fn init(inputs: usize, outputs: usize, activation: DenseActivation, rng: &mut RngStream) -> Result<Self> {
        let w = Tensor::glorot(&[outputs, inputs], inputs, outputs, rng)?;
        Self::new(w, Tensor::zeros(&[outputs])?, activation)
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn dense_forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_counted(x, &mut ())
    }

    pub fn forward_counted<S: MacSink>(&self, x: &Tensor, sink: &mut S) -> Result<Tensor> {
        if x.len() != self.inputs() {
            return Err(Error::shape(format!(
                "dense expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        let mut z = self.bias.data().to_vec();
        matvec_acc(self.weights.data(), x.data(), &mut z);
        sink.add((self.inputs() * self.outputs()) as u64);
        self.activation.apply(&mut z);
        Tensor::from_vec(&[self.outputs()], z)
    }

    /// Gradients `(dx, dW, db)` from the layer input, its output `y`, and
    /// the upstream gradient with respect to `y`.
    pub fn backward(&self, x: &Tensor, y: &Tensor, grad_y: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let y = y.data();
        let g = grad_y.data();
        let dz = self.activation.backward(y, g);
        let mut dx = vec![0.0; self.inputs()];
        matvec_t_acc(self.weights.data(), &dz, &mut dx);
        let mut dw = vec![0.0; self.weights.len()];
        outer_acc(&dz, x.data(), &mut dw);
        Ok((
            Tensor::from_vec(x.shape(), dx)?,
            Tensor::from_vec(self.weights.shape(), dw)?,
            Tensor::from_vec(&[self.outputs()], dz)?,
        ))
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
/// training so inference is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutLayer {
    pub rate: f64,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn dropout_forward(&self, x: &Tensor, training: bool, rng: &mut RngStream) -> Tensor {
        self.forward_with_mask(x, training, rng).0
    }

    /// Output plus the per-element multiplier that was applied.
    pub fn forward_with_mask(&self, x: &Tensor, training: bool, rng: &mut RngStream) -> (Tensor, Option<Vec<f64>>) {
        if !training || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.bernoulli(self.rate) { 0.0 } else { keep })
            .collect();
        let y = Tensor::from_vec(x.shape(), x.data().iter().zip(&mask).map(|(a, m)| a * m).collect())
            .expect("same shape");
        (y, Some(mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conv1(kernel: &[f64], padding: Padding) -> Conv1DLayer {
        Conv1DLayer::new(
            Tensor::from_vec(&[1, 1, kernel.len()], kernel.to_vec()).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            1,
            padding,
        )
        .unwrap()
    }

    #[test]
    fn conv2d_identity_kernel() {
        let layer = Conv2DLayer::new(Tensor::filled(&[1, 1, 1, 1], 1.0).unwrap(), Tensor::zeros(&[1]).unwrap(), 1, Padding::Valid).unwrap();
        let x = Tensor::from_vec(&[1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(layer.conv2d_forward(&x).unwrap(), x);
    }

    #[test]
    fn conv2d_diagonal_kernel() {
        let layer = Conv2DLayer::new(
            Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
            1,
            Padding::Valid,
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = layer.conv2d_forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[5.0]);
    }

    #[test]
    fn conv2d_zero_input_gives_bias() {
        let mut rng = RngStream::new(3);
        let mut layer = Conv2DLayer::init(3, 2, (3, 3), (1, 1), Padding::Same, &mut rng).unwrap();
        layer.bias = Tensor::vector(&[0.5, -1.0, 2.0]);
        let y = layer.conv2d_forward(&Tensor::zeros(&[2, 5, 4]).unwrap()).unwrap();
        assert_eq!(y.shape(), &[3, 5, 4]);
        for f in 0..3 {
            for v in &y.data()[f * 20..(f + 1) * 20] {
                assert_eq!(*v, layer.bias.data()[f]);
            }
        }
    }

    #[test]
    fn conv2d_kernel_too_large() {
        let layer = Conv2DLayer::new(Tensor::zeros(&[1, 1, 3, 3]).unwrap(), Tensor::zeros(&[1]).unwrap(), 1, Padding::Valid).unwrap();
        assert!(layer.conv2d_forward(&Tensor::zeros(&[1, 2, 2]).unwrap()).is_err());
    }

    #[test]
    fn same_padding_is_left_biased() {
        // deficit of 1 for kernel 2, stride 1: pad goes before the data
        assert_eq!(Padding::Same.resolve(4, 2, 1), (1, 5));
        assert_eq!(Padding::Same.resolve(4, 3, 1), (1, 6));
        let y = conv1(&[1.0, 0.0], Padding::Same).conv1d_forward(&Tensor::matrix(&[&[1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(y.data(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn conv1d_examples() {
        let mut rng = RngStream::new(1);
        let layer = Conv1DLayer::init(4, 1, 5, 1, Padding::Valid, &mut rng).unwrap();
        let beat = Tensor::zeros(&[1, 187]).unwrap();
        assert_eq!(layer.conv1d_forward(&beat).unwrap().shape(), &[4, 183]);

        let x = Tensor::matrix(&[&[1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(conv1(&[1.0], Padding::Valid).conv1d_forward(&x).unwrap(), x);
        assert_eq!(conv1(&[1.0, 1.0, 1.0], Padding::Valid).conv1d_forward(&x).unwrap().data(), &[6.0, 9.0]);
    }

    #[test]
    fn maxpool_examples() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(MaxPool2DLayer::new(1, Some(1)).unwrap().maxpool_forward(&x).unwrap(), x);
        assert_eq!(MaxPool2DLayer::new(2, None).unwrap().maxpool_forward(&x).unwrap().data(), &[4.0]);
        let c = Tensor::filled(&[2, 4, 4], 7.0).unwrap();
        let y = MaxPool2DLayer::new(2, Some(1)).unwrap().maxpool_forward(&c).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        assert!(MaxPool2DLayer::new(3, None).unwrap().maxpool_forward(&x).is_err());
    }

    #[test]
    fn dense_examples() {
        let id = DenseLayer::new(Tensor::identity(3).unwrap(), Tensor::zeros(&[3]).unwrap(), DenseActivation::None).unwrap();
        let x = Tensor::vector(&[1.0, -2.0, 3.0]);
        assert_eq!(id.dense_forward(&x).unwrap(), x);

        let sm = DenseLayer::new(Tensor::zeros(&[5, 4]).unwrap(), Tensor::zeros(&[5]).unwrap(), DenseActivation::Softmax).unwrap();
        let y = sm.dense_forward(&Tensor::vector(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!(y.data().iter().all(|&p| (p - 0.2).abs() < 1e-15));

        let r = DenseLayer::new(Tensor::matrix(&[&[1.0, 1.0]]), Tensor::vector(&[1.0]), DenseActivation::Relu).unwrap();
        assert_eq!(r.dense_forward(&Tensor::vector(&[2.0, 3.0])).unwrap().data(), &[6.0]);
        assert!(r.dense_forward(&Tensor::vector(&[2.0])).is_err());
    }

    #[test]
    fn dropout_examples() {
        let mut rng = RngStream::new(11);
        let x = Tensor::random_normal(&[50], 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(DropoutLayer::new(0.0).unwrap().dropout_forward(&x, true, &mut rng), x);
        assert_eq!(DropoutLayer::new(0.7).unwrap().dropout_forward(&x, false, &mut rng), x);
        assert!(DropoutLayer::new(1.0).is_err());

        let ones = Tensor::filled(&[10_000], 1.0).unwrap();
        let y = DropoutLayer::new(0.5).unwrap().dropout_forward(&ones, true, &mut RngStream::new(2024));
        let zeroed = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
        assert!((zeroed - 0.5).abs() <= 0.02, "zeroed fraction {zeroed}");
    }

    #[test]
    fn dropout_is_unbiased() {
        let layer = DropoutLayer::new(0.3).unwrap();
        let x = Tensor::vector(&[1.0, -2.0, 0.5, 4.0]);
        let mut rng = RngStream::new(77);
        let mut acc = [0.0; 4];
        for _ in 0..10_000 {
            let y = layer.dropout_forward(&x, true, &mut rng);
            acc.iter_mut().zip(y.data()).for_each(|(a, v)| *a += v);
        }
        for (a, v) in acc.iter().zip(x.data()) {
            let mean = a / 10_000.0;
            assert!((mean - v).abs() <= 0.02 * v.abs(), "{mean} vs {v}");
        }
    }

    /// Counts kernel placements by sliding the window one offset at a time.
    fn enumerate_placements(input: usize, kernel: usize, stride: usize, padding: Padding) -> usize {
        let (_, padded) = padding.resolve(input, kernel, stride);
        let mut count = 0;
        let mut start = 0;
        while start + kernel <= padded {
            count += 1;
            start += stride;
        }
        count
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn conv_output_shape_matches_enumeration(
            h in 1usize..20, w in 1usize..20, d in 1usize..6, stride in 1usize..4, same in any::<bool>()
        ) {
            let padding = if same { Padding::Same } else { Padding::Valid };
            let layer = Conv2DLayer::new(Tensor::zeros(&[2, 1, d, d]).unwrap(), Tensor::zeros(&[2]).unwrap(), stride, padding).unwrap();
            let eh = enumerate_placements(h, d, stride, padding);
            let ew = enumerate_placements(w, d, stride, padding);
            match layer.output_shape(&[1, h, w]) {
                Ok(s) => prop_assert_eq!(s, [2, eh, ew]),
                Err(_) => prop_assert!(eh == 0 || ew == 0),
            }
        }

        #[test]
        fn conv_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
            let mut rng = RngStream::new(seed);
            let layer = Conv2DLayer::init(3, 2, (3, 2), (1, 2), Padding::Same, &mut rng).unwrap();
            let x1 = Tensor::random_normal(&[2, 6, 5], 0.0, 1.0, &mut rng).unwrap();
            let x2 = Tensor::random_normal(&[2, 6, 5], 0.0, 1.0, &mut rng).unwrap();
            let lhs = layer.conv2d_forward(&x1.scale(a).add(&x2).unwrap()).unwrap();
            let rhs = layer.conv2d_forward(&x1).unwrap().scale(a).add(&layer.conv2d_forward(&x2).unwrap()).unwrap();
            for (l, r) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((l - r).abs() < 1e-9);
            }
        }

        #[test]
        fn maxpool_bounds(seed in any::<u64>(), p in 1usize..4, s in 1usize..4) {
            let mut rng = RngStream::new(seed);
            let x = Tensor::random_normal(&[2, 7, 7], 0.0, 1.0, &mut rng).unwrap();
            let layer = MaxPool2DLayer::new(p, Some(s)).unwrap();
            let (y, idx) = layer.forward_with_argmax(&x, &mut ()).unwrap();
            let global = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let [c, oh, ow] = layer.output_shape(x.shape()).unwrap();
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let o = (ch * oh + oy) * ow + ox;
                        let v = y.data()[o];
                        prop_assert!(v <= global);
                        for m in 0..p {
                            for n in 0..p {
                                prop_assert!(v >= x.get(&[ch, oy * s + m, ox * s + n]));
                            }
                        }
                        prop_assert_eq!(v, x.data()[idx[o]]);
                    }
                }
            }
        }
    }
}
