//! Sequential models over the layer kernels, per-sample backprop, MAC cost
//! walks, and the four benchmark model families.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{CountMode, LayerCost, LayerKind, MacSink};
use crate::data::{BEAT_LEN, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::layers::{
    Conv1DLayer, Conv2DLayer, DenseActivation, DenseLayer, DropoutLayer, MaxPool1DLayer, MaxPool2DLayer, Padding,
};
use crate::metrics::PROB_FLOOR;
use crate::rbm::{Dbn, Rbm};
use crate::recurrent::{BiLstm, BiLstmTrace, LstmCell, LstmState, LstmTrace, RnnCell, RnnTrace};
use crate::tensor::{Activation, RngStream, Tensor};

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Layer {
    Conv1D(Conv1DLayer),
    Conv2D(Conv2DLayer),
    MaxPool1D(MaxPool1DLayer),
    MaxPool2D(MaxPool2DLayer),
    Dense(DenseLayer),
    Activation(DenseActivation),
    Dropout(DropoutLayer),
    Flatten,
    Reshape(Vec<usize>),
    /// `[T, X]` to `[T, H]`, or to the final `[H]` without `return_sequences`.
    Lstm { cell: LstmCell, return_sequences: bool },
    /// `[T, X]` to `[T, H_f + H_b]`.
    BiLstm(BiLstm),
    /// `[T, X]` to the head output `[Y]` of the last step.
    Rnn(RnnCell),
    /// `[n_v]` to hidden probabilities `[n_h]`.
    Rbm(Rbm),
}

enum Cache {
    Input(Tensor),
    InOut(Tensor, Tensor),
    Output(Tensor),
    Pool(Vec<usize>, Vec<usize>),
    Mask(Option<Vec<f64>>),
    Shape(Vec<usize>),
    Lstm(LstmTrace),
    BiLstm(BiLstmTrace),
    Rnn(RnnTrace),
}

fn dims2(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match shape {
        [a, b] => Ok((*a, *b)),
        s => Err(Error::shape(format!("{what} expects a rank-2 input, got {s:?}"))),
    }
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1D(_) => "conv1d",
            Layer::Conv2D(_) => "conv2d",
            Layer::MaxPool1D(_) => "maxpool1d",
            Layer::MaxPool2D(_) => "maxpool2d",
            Layer::Dense(_) => "dense",
            Layer::Activation(_) => "activation",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten => "flatten",
            Layer::Reshape(_) => "reshape",
            Layer::Lstm { .. } => "lstm",
            Layer::BiLstm(_) => "bilstm",
            Layer::Rnn(_) => "rnn",
            Layer::Rbm(_) => "rbm",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        const LSTM: [&str; 8] = ["w_f", "w_i", "w_c", "w_o", "b_f", "b_i", "b_c", "b_o"];
        const BI: [&str; 16] = [
            "fwd.w_f", "fwd.w_i", "fwd.w_c", "fwd.w_o", "fwd.b_f", "fwd.b_i", "fwd.b_c", "fwd.b_o", "bwd.w_f",
            "bwd.w_i", "bwd.w_c", "bwd.w_o", "bwd.b_f", "bwd.b_i", "bwd.b_c", "bwd.b_o",
        ];
        match self {
            Layer::Conv1D(c) => vec![("weights", &c.inner.weights), ("bias", &c.inner.bias)],
            Layer::Conv2D(c) => vec![("weights", &c.weights), ("bias", &c.bias)],
            Layer::Dense(d) => vec![("weights", &d.weights), ("bias", &d.bias)],
            Layer::Lstm { cell, .. } => LSTM.into_iter().zip(cell.params()).collect(),
            Layer::BiLstm(b) => BI.into_iter().zip(b.forward_cell.params().into_iter().chain(b.backward_cell.params())).collect(),
            Layer::Rnn(r) => ["w_h", "u_x", "b_h", "v", "b_y"].into_iter().zip(r.params()).collect(),
            Layer::Rbm(r) => vec![("weights", &r.weights), ("visible_bias", &r.visible_bias), ("hidden_bias", &r.hidden_bias)],
            _ => Vec::new(),
        }
    }

    /// Mutable parameters in the order of [`Layer::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv1D(c) => vec![&mut c.inner.weights, &mut c.inner.bias],
            Layer::Conv2D(c) => vec![&mut c.weights, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            Layer::Lstm { cell, .. } => cell.params_mut().into_iter().collect(),
            Layer::BiLstm(b) => {
                let mut v: Vec<&mut Tensor> = b.forward_cell.params_mut().into_iter().collect();
                v.extend(b.backward_cell.params_mut());
                v
            }
            Layer::Rnn(r) => r.params_mut().into_iter().collect(),
            Layer::Rbm(r) => vec![&mut r.weights, &mut r.visible_bias, &mut r.hidden_bias],
            _ => Vec::new(),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let len: usize = input.iter().product();
        Ok(match self {
            Layer::Conv1D(c) => {
                if input.len() == 2 && input[0] != c.inner.in_channels() {
                    return Err(Error::shape(format!("conv1d expects {} channels, got {}", c.inner.in_channels(), input[0])));
                }
                c.output_shape(input)?.to_vec()
            }
            Layer::Conv2D(c) => {
                if input.len() == 3 && input[0] != c.in_channels() {
                    return Err(Error::shape(format!("conv2d expects {} channels, got {}", c.in_channels(), input[0])));
                }
                c.output_shape(input)?.to_vec()
            }
            Layer::MaxPool1D(p) => p.output_shape(input)?.to_vec(),
            Layer::MaxPool2D(p) => p.output_shape(input)?.to_vec(),
            Layer::Dense(d) => {
                if len != d.inputs() {
                    return Err(Error::shape(format!("dense expects {} inputs, got {len}", d.inputs())));
                }
                vec![d.outputs()]
            }
            Layer::Activation(_) | Layer::Dropout(_) => input.to_vec(),
            Layer::Flatten => vec![len],
            Layer::Reshape(s) => {
                if s.iter().product::<usize>() != len {
                    return Err(Error::shape(format!("cannot reshape {input:?} to {s:?}")));
                }
                s.clone()
            }
            Layer::Lstm { cell, return_sequences } => {
                let (t, x) = dims2(input, "lstm")?;
                if x != cell.input_size() || t == 0 {
                    return Err(Error::shape(format!("lstm expects [T, {}], got {input:?}", cell.input_size())));
                }
                if *return_sequences {
                    vec![t, cell.hidden_size()]
                } else {
                    vec![cell.hidden_size()]
                }
            }
            Layer::BiLstm(b) => {
                let (t, x) = dims2(input, "bilstm")?;
                if x != b.forward_cell.input_size() || t == 0 {
                    return Err(Error::shape(format!("bilstm expects [T, {}], got {input:?}", b.forward_cell.input_size())));
                }
                vec![t, b.output_width()]
            }
            Layer::Rnn(r) => {
                let (t, x) = dims2(input, "rnn")?;
                if x != r.input_size() || t == 0 {
                    return Err(Error::shape(format!("rnn expects [T, {}], got {input:?}", r.input_size())));
                }
                vec![r.output_size()]
            }
            Layer::Rbm(r) => {
                if len != r.n_visible() {
                    return Err(Error::shape(format!("rbm expects {} inputs, got {len}", r.n_visible())));
                }
                vec![r.n_hidden()]
            }
        })
    }

    /// Cost of this layer on `input`, which must already be shape-checked.
    pub fn cost(&self, input: &[usize], mode: CountMode) -> Result<(LayerKind, u64, bool)> {
        let out = self.output_shape(input)?;
        let p = |v: &[usize]| v.iter().map(|&x| x as u64).product::<u64>();
        Ok(match self {
            Layer::Conv1D(Conv1DLayer { inner: c }) | Layer::Conv2D(c) => {
                let (kh, kw) = c.kernel();
                let k = (kh * kw) as u64;
                let f = c.num_filters() as u64;
                let macs = match mode {
                    CountMode::Exact => k * c.in_channels() as u64 * p(&out),
                    // single-channel closed form over the input extent
                    CountMode::Formula => f * k * p(&input[1..]),
                };
                (LayerKind::Conv, macs, false)
            }
            Layer::MaxPool1D(MaxPool1DLayer { inner: pool }) | Layer::MaxPool2D(pool) => match mode {
                CountMode::Exact => (LayerKind::Pool, p(&out), false),
                CountMode::Formula => {
                    let area = p(&input[1..]);
                    let window = (pool.window.0 * pool.window.1) as u64;
                    (LayerKind::Pool, area / window, area % window != 0)
                }
            },
            Layer::Dense(d) => (LayerKind::Fc, (d.inputs() * d.outputs()) as u64, false),
            Layer::Rbm(r) => (LayerKind::Fc, (r.n_visible() * r.n_hidden()) as u64, false),
            Layer::Lstm { cell, .. } => {
                let (h, x) = (cell.hidden_size() as u64, cell.input_size() as u64);
                (LayerKind::Recurrent, input[0] as u64 * (4 * h * (h + x) + 3 * h), false)
            }
            Layer::BiLstm(b) => {
                let t = input[0] as u64;
                let macs = [&b.forward_cell, &b.backward_cell]
                    .iter()
                    .map(|c| {
                        let (h, x) = (c.hidden_size() as u64, c.input_size() as u64);
                        t * (4 * h * (h + x) + 3 * h)
                    })
                    .sum();
                (LayerKind::Recurrent, macs, false)
            }
            Layer::Rnn(r) => {
                let (h, x, y) = (r.hidden_size() as u64, r.input_size() as u64, r.output_size() as u64);
                (LayerKind::Recurrent, input[0] as u64 * h * (h + x) + y * h, false)
            }
            _ => (LayerKind::Other, 0, false),
        })
    }

    fn forward<S: MacSink>(&self, x: &Tensor, training: bool, rng: &mut RngStream, sink: &mut S) -> Result<(Tensor, Cache)> {
        Ok(match self {
            Layer::Conv1D(c) => (c.forward_counted(x, sink)?, Cache::Input(x.clone())),
            Layer::Conv2D(c) => (c.forward_counted(x, sink)?, Cache::Input(x.clone())),
            Layer::MaxPool1D(p) => {
                let (y, idx) = p.forward_with_argmax(x, sink)?;
                (y, Cache::Pool(x.shape().to_vec(), idx))
            }
            Layer::MaxPool2D(p) => {
                let (y, idx) = p.forward_with_argmax(x, sink)?;
                (y, Cache::Pool(x.shape().to_vec(), idx))
            }
            Layer::Dense(d) => {
                let y = d.forward_counted(x, sink)?;
                (y.clone(), Cache::InOut(x.clone(), y))
            }
            Layer::Activation(a) => {
                let mut z = x.data().to_vec();
                a.apply(&mut z);
                let y = Tensor::from_vec(x.shape(), z)?;
                (y.clone(), Cache::Output(y))
            }
            Layer::Dropout(d) => {
                let (y, mask) = d.forward_with_mask(x, training, rng);
                (y, Cache::Mask(mask))
            }
            Layer::Flatten | Layer::Reshape(_) => {
                let shape = self.output_shape(x.shape())?;
                (x.reshape(&shape)?, Cache::Shape(x.shape().to_vec()))
            }
            Layer::Lstm { cell, return_sequences } => {
                self.output_shape(x.shape())?;
                let trace = cell.run(x, &LstmState::zeros(cell.hidden_size())?, sink)?;
                let y = if *return_sequences {
                    trace.hidden_tensor()?
                } else {
                    Tensor::vector(trace.hidden_at(trace.len() - 1))
                };
                (y, Cache::Lstm(trace))
            }
            Layer::BiLstm(b) => {
                self.output_shape(x.shape())?;
                let trace = b.run(x, sink)?;
                (b.output(&trace)?, Cache::BiLstm(trace))
            }
            Layer::Rnn(r) => {
                self.output_shape(x.shape())?;
                let trace = r.run(x, sink)?;
                let last = Tensor::vector(trace.hidden.last().expect("initial state"));
                (r.output_counted(&last, sink)?, Cache::Rnn(trace))
            }
            Layer::Rbm(r) => {
                self.output_shape(x.shape())?;
                sink.add((r.n_visible() * r.n_hidden()) as u64);
                let y = Tensor::vector(&r.hidden_probs(x.data()));
                (y.clone(), Cache::InOut(x.clone(), y))
            }
        })
    }

    /// Returns `(dx, parameter gradients in params() order)`.
    fn backward(&self, cache: &Cache, grad: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        Ok(match (self, cache) {
            (Layer::Conv1D(c), Cache::Input(x)) => {
                let (dx, dw, db) = c.backward(x, grad)?;
                (dx, vec![dw, db])
            }
            (Layer::Conv2D(c), Cache::Input(x)) => {
                let (dx, dw, db) = c.backward(x, grad)?;
                (dx, vec![dw, db])
            }
            (Layer::MaxPool1D(_) | Layer::MaxPool2D(_), Cache::Pool(shape, idx)) => {
                (MaxPool2DLayer::backward(shape, idx, grad)?, Vec::new())
            }
            (Layer::Dense(d), Cache::InOut(x, y)) => {
                let (dx, dw, db) = d.backward(x, y, grad)?;
                (dx, vec![dw, db])
            }
            (Layer::Activation(a), Cache::Output(y)) => {
                (Tensor::from_vec(y.shape(), a.backward(y.data(), grad.data()))?, Vec::new())
            }
            (Layer::Dropout(_), Cache::Mask(mask)) => match mask {
                None => (grad.clone(), Vec::new()),
                Some(m) => (
                    Tensor::from_vec(grad.shape(), grad.data().iter().zip(m).map(|(g, k)| g * k).collect())?,
                    Vec::new(),
                ),
            },
            (Layer::Flatten | Layer::Reshape(_), Cache::Shape(s)) => (grad.reshape(s)?, Vec::new()),
            (Layer::Lstm { cell, return_sequences }, Cache::Lstm(trace)) => {
                let h = cell.hidden_size();
                let t_len = trace.len();
                let grad_h: Vec<Vec<f64>> = if *return_sequences {
                    (0..t_len).map(|t| grad.data()[t * h..(t + 1) * h].to_vec()).collect()
                } else {
                    let mut g = vec![vec![0.0; h]; t_len];
                    g[t_len - 1] = grad.data().to_vec();
                    g
                };
                cell.backward(trace, &grad_h)?
            }
            (Layer::BiLstm(b), Cache::BiLstm(trace)) => {
                let w = b.output_width();
                let rows: Vec<Vec<f64>> = grad.data().chunks(w).map(<[f64]>::to_vec).collect();
                b.backward(trace, &rows)?
            }
            (Layer::Rnn(r), Cache::Rnn(trace)) => r.backward(trace, grad.data())?,
            (Layer::Rbm(r), Cache::InOut(x, y)) => {
                let nh = r.n_hidden();
                let delta: Vec<f64> = y.data().iter().zip(grad.data()).map(|(y, g)| g * y * (1.0 - y)).collect();
                let w = r.weights.data();
                let mut dw = vec![0.0; w.len()];
                let mut dx = vec![0.0; r.n_visible()];
                for (i, &xi) in x.data().iter().enumerate() {
                    let row = &w[i * nh..(i + 1) * nh];
                    dx[i] = row.iter().zip(&delta).map(|(a, b)| a * b).sum();
                    dw[i * nh..(i + 1) * nh].iter_mut().zip(&delta).for_each(|(d, g)| *d = xi * g);
                }
                (
                    Tensor::from_vec(x.shape(), dx)?,
                    vec![
                        Tensor::from_vec(r.weights.shape(), dw)?,
                        Tensor::zeros(&[r.n_visible()])?,
                        Tensor::from_vec(&[nh], delta)?,
                    ],
                )
            }
            _ => return Err(Error::invalid(format!("{} backward called with a foreign cache", self.name()))),
        })
    }
}

/// Named gradient tensors, one per trainable parameter, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradRecord {
    pub entries: Vec<(String, Tensor)>,
}

impl GradRecord {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn accumulate(&mut self, other: &GradRecord) {
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in &mut self.entries {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    trainable: Vec<bool>,
}

impl Sequential {
    pub fn new(input_shape: &[usize], layers: Vec<Layer>) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(format!("invalid model input shape {shape:?}")));
        }
        for (i, l) in layers.iter().enumerate() {
            shape = l
                .output_shape(&shape)
                .map_err(|e| Error::shape(format!("layer {i} ({}): {e}", l.name())))?;
        }
        let trainable = vec![true; layers.len()];
        Ok(Self { input_shape: input_shape.to_vec(), layers, trainable })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn set_trainable(&mut self, layer: usize, trainable: bool) {
        self.trainable[layer] = trainable;
    }

    pub fn is_trainable(&self, layer: usize) -> bool {
        self.trainable[layer]
    }

    /// Input shape of every layer followed by the model output shape.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = vec![self.input_shape.clone()];
        for l in &self.layers {
            let next = l.output_shape(shapes.last().expect("non-empty")).expect("validated at construction");
            shapes.push(next);
        }
        shapes
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.shapes().pop().expect("non-empty")
    }

    /// Scalar count over every parameter tensor, frozen layers included.
    pub fn param_count(&self) -> u64 {
        self.layers.iter().flat_map(|l| l.params()).map(|(_, t)| t.len() as u64).sum()
    }

    pub fn trainable_param_count(&self) -> u64 {
        self.layers
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .flat_map(|(l, _)| l.params())
            .map(|(_, t)| t.len() as u64)
            .sum()
    }

    /// `(name, tensor)` for every trainable parameter; names are `"{layer}.{param}"`.
    pub fn trainable_params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(i, _)| self.trainable[*i])
            .flat_map(|(i, l)| l.params().into_iter().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .flat_map(|(l, _)| l.params_mut())
            .collect()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_counted(x, &mut ())
    }

    /// Inference pass charging every multiply-accumulate to `sink`.
    pub fn forward_counted<S: MacSink>(&self, x: &Tensor, sink: &mut S) -> Result<Tensor> {
        let mut rng = RngStream::new(0);
        let mut cur = self.check_input(x)?;
        for l in &self.layers {
            cur = l.forward(&cur, false, &mut rng, sink)?.0;
        }
        Ok(cur)
    }

    fn check_input(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.input_shape.iter().product::<usize>() {
            return Err(Error::shape(format!("model expects input {:?}, got {:?}", self.input_shape, x.shape())));
        }
        x.reshape(&self.input_shape)
    }

    /// Class probabilities `[N, classes]` for the rows of `[N, features]`.
    pub fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        use rayon::prelude::*;
        let n = batch.shape()[0];
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| self.forward(&Tensor::vector(batch.row(i))).map(Tensor::into_data))
            .collect::<Result<_>>()?;
        let k = rows.first().map_or(0, Vec::len);
        Tensor::from_vec(&[n, k], rows.concat())
    }

    /// Cross-entropy loss of one sample and the gradient of every trainable
    /// tensor. With `dropout_rng` set the pass runs in training mode.
    pub fn loss_and_grad(&self, x: &Tensor, label: usize, dropout_rng: Option<&mut RngStream>) -> Result<(f64, GradRecord)> {
        let mut local = RngStream::new(0);
        let training = dropout_rng.is_some();
        let rng = dropout_rng.unwrap_or(&mut local);
        let mut cur = self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, c) = l.forward(&cur, training, rng, &mut ())?;
            caches.push(c);
            cur = y;
        }
        let probs = cur.data();
        if label >= probs.len() {
            return Err(Error::invalid(format!("label {label} out of range for {} outputs", probs.len())));
        }
        let p = probs[label];
        let loss = if p.is_nan() { f64::NAN } else { -p.max(PROB_FLOOR).ln() };
        let mut g = vec![0.0; probs.len()];
        if p >= PROB_FLOOR {
            g[label] = -1.0 / p;
        }
        let mut grad = Tensor::from_vec(cur.shape(), g)?;
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        for (i, (l, c)) in self.layers.iter().zip(&caches).enumerate().rev() {
            let needs_input_grad = self.trainable[..i].iter().any(|&t| t);
            if !self.trainable[i] && !needs_input_grad {
                per_layer.push(Vec::new());
                break;
            }
            let (dx, dp) = l.backward(c, &grad)?;
            per_layer.push(if self.trainable[i] { dp } else { Vec::new() });
            grad = dx;
        }
        per_layer.reverse();
        let offset = self.layers.len() - per_layer.len();
        let mut entries = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if !self.trainable[i] {
                continue;
            }
            let grads = std::mem::take(&mut per_layer[i - offset]);
            for ((n, _), t) in l.params().into_iter().zip(grads) {
                entries.push((format!("{i}.{n}"), t));
            }
        }
        Ok((loss, GradRecord { entries }))
    }

    pub fn layer_costs(&self, mode: CountMode) -> Vec<LayerCost> {
        let shapes = self.shapes();
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (kind, macs, inexact) = l.cost(&shapes[i], mode).expect("validated at construction");
                let mut c = LayerCost::new(format!("{i}:{}", l.name()), kind, macs, mode);
                c.inexact = inexact;
                c
            })
            .collect()
    }

    pub fn total_macs(&self, mode: CountMode) -> u64 {
        self.layer_costs(mode).iter().map(|c| c.macs).sum()
    }
}

/// Central-difference check of [`Sequential::loss_and_grad`] (inference
/// mode). Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst: String,
}

pub fn gradient_check(model: &Sequential, x: &Tensor, label: usize, step: f64) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_grad(x, label, None)?;
    let mut probe = model.clone();
    let mut report = GradCheck { checked: 0, max_relative_error: 0.0, worst: String::new() };
    let loss_at = |m: &Sequential| -> Result<f64> { Ok(m.loss_and_grad(x, label, None)?.0) };
    let count = grads.len();
    for p in 0..count {
        let (name, analytic) = &grads.entries[p];
        for k in 0..analytic.len() {
            let original = probe.trainable_params_mut()[p].data()[k];
            probe.trainable_params_mut()[p].data_mut()[k] = original + step;
            let up = loss_at(&probe)?;
            probe.trainable_params_mut()[p].data_mut()[k] = original - step;
            let down = loss_at(&probe)?;
            probe.trainable_params_mut()[p].data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data()[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = format!("{name}[{k}]: analytic {a:e}, numeric {numeric:e}");
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Lstm,
    Cnn,
    Rnn,
    Dbn,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [ModelFamily::Lstm, ModelFamily::Cnn, ModelFamily::Rnn, ModelFamily::Dbn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Lstm => "lstm",
            ModelFamily::Cnn => "cnn",
            ModelFamily::Rnn => "rnn",
            ModelFamily::Dbn => "dbn",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelFamily::Lstm),
            "cnn" => Ok(ModelFamily::Cnn),
            "rnn" => Ok(ModelFamily::Rnn),
            "dbn" => Ok(ModelFamily::Dbn),
            other => Err(Error::invalid(format!("unknown model `{other}` (expected lstm, cnn, rnn or dbn)"))),
        }
    }
}

/// Architecture knobs for the benchmark families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    /// Beat samples per LSTM/RNN time step; must divide 187 (1, 11, 17 or 187).
    pub frame: usize,
    pub dropout: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self { frame: 11, dropout: 0.2 }
    }
}

/// DBN layer sizes, visible first.
pub const DBN_SIZES: [usize; 3] = [BEAT_LEN, 128, 64];

impl ModelFamily {
    pub fn build(self, cfg: &FamilyConfig, rng: &mut RngStream) -> Result<Sequential> {
        if cfg.frame == 0 || !BEAT_LEN.is_multiple_of(cfg.frame) {
            return Err(Error::invalid(format!("frame {} does not divide {BEAT_LEN}", cfg.frame)));
        }
        let seq = vec![BEAT_LEN / cfg.frame, cfg.frame];
        let dropout = Layer::Dropout(DropoutLayer::new(cfg.dropout)?);
        let layers = match self {
            ModelFamily::Lstm => vec![
                Layer::Reshape(seq),
                Layer::Lstm { cell: LstmCell::init(64, cfg.frame, rng)?, return_sequences: true },
                Layer::Lstm { cell: LstmCell::init(32, 64, rng)?, return_sequences: false },
                dropout,
                Layer::Dense(DenseLayer::init(32, NUM_CLASSES, DenseActivation::Softmax, rng)?),
            ],
            ModelFamily::Cnn => {
                let c1 = Conv1DLayer::init(8, 1, 5, 1, Padding::Valid, rng)?;
                let c2 = Conv1DLayer::init(16, 8, 5, 1, Padding::Valid, rng)?;
                // 187 -> 183 -> 91 -> 87 -> 43
                vec![
                    Layer::Reshape(vec![1, BEAT_LEN]),
                    Layer::Conv1D(c1),
                    Layer::Activation(DenseActivation::Relu),
                    Layer::MaxPool1D(MaxPool1DLayer::new(2, None)?),
                    Layer::Conv1D(c2),
                    Layer::Activation(DenseActivation::Relu),
                    Layer::MaxPool1D(MaxPool1DLayer::new(2, None)?),
                    dropout,
                    Layer::Flatten,
                    Layer::Dense(DenseLayer::init(16 * 43, NUM_CLASSES, DenseActivation::Softmax, rng)?),
                ]
            }
            ModelFamily::Rnn => vec![
                Layer::Reshape(seq),
                Layer::BiLstm(BiLstm::new(LstmCell::init(16, cfg.frame, rng)?, LstmCell::init(16, cfg.frame, rng)?)?),
                Layer::Rnn(RnnCell::init(32, 32, NUM_CLASSES, Activation::Tanh, rng)?),
                Layer::Activation(DenseActivation::Softmax),
            ],
            ModelFamily::Dbn => {
                let dbn = Dbn::init(&DBN_SIZES, NUM_CLASSES, rng)?;
                return Ok(dbn_model(&dbn));
            }
        };
        Sequential::new(&[BEAT_LEN], layers)
    }
}

/// Fine-tuning view of a DBN: lower RBMs frozen, top RBM and head trainable.
pub fn dbn_model(dbn: &Dbn) -> Sequential {
    let mut layers: Vec<Layer> = dbn.layers.iter().cloned().map(Layer::Rbm).collect();
    layers.push(Layer::Dense(dbn.head.clone()));
    let n = layers.len();
    let mut model = Sequential::new(&[dbn.n_visible()], layers).expect("DBN chain is consistent");
    for i in 0..n.saturating_sub(2) {
        model.set_trainable(i, false);
    }
    model
}

/// Recover the RBM stack of a model built by [`dbn_model`].
pub fn dbn_from_model(model: &Sequential) -> Result<Dbn> {
    let mut rbms = Vec::new();
    let mut head = None;
    for l in model.layers() {
        match l {
            Layer::Rbm(r) => rbms.push(r.clone()),
            Layer::Dense(d) => head = Some(d.clone()),
            other => return Err(Error::invalid(format!("unexpected {} layer in a DBN", other.name()))),
        }
    }
    Dbn::new(rbms, head.ok_or_else(|| Error::invalid("DBN model lacks a head"))?)
}
