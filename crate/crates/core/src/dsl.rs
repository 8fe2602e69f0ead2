//! Compact text description of small feedforward/recurrent stacks, used
//! for MAC analysis of arbitrary layer configurations.
//!
//! ```text
//! input=1x28x28;conv=8x3;relu;pool=2;fc=5;softmax
//! ```
//!
//! Items are `;`-separated. `input=` (1 to 3 dims) must come first.
//!
//! | item            | layer                                                   |
//! |-----------------|---------------------------------------------------------|
//! | `conv=FxK[xK2]` | valid stride-1 convolution, 1-D on `[C,L]`, 2-D on `[C,H,W]` |
//! | `pool=P[xP2]`   | max pooling, stride = window                            |
//! | `fc=N`          | dense layer (input flattened)                           |
//! | `lstm=H`        | LSTM returning the full sequence                        |
//! | `rnn=HxY`       | vanilla tanh RNN with a `Y`-wide head on the last step  |
//! | `dropout=R`     | dropout with rate `R`                                   |
//! | `flatten`, `relu`, `tanh`, `sigmoid`, `softmax` | shape and activation layers |
//!
//! A rank-1 input is lifted to `[1, L]` for convolution/pooling and to
//! `[L, 1]` for recurrent layers.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{Conv1DLayer, Conv2DLayer, DenseActivation, DenseLayer, DropoutLayer, MaxPool1DLayer, MaxPool2DLayer, Padding};
use crate::model::{Layer, Sequential};
use crate::recurrent::{LstmCell, RnnCell};
use crate::tensor::{Activation, RngStream};

/// Upper bound for any single dimension in a spec.
pub const MAX_DIM: usize = 1 << 16;
/// Upper bound on input elements and on total parameters of a built spec.
pub const MAX_ELEMENTS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub enum SpecItem {
    Conv { filters: usize, kernel: Vec<usize> },
    Pool { window: Vec<usize> },
    Fc(usize),
    Lstm(usize),
    Rnn { hidden: usize, outputs: usize },
    Dropout(f64),
    Flatten,
    Act(DenseActivation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input: Vec<usize>,
    pub items: Vec<SpecItem>,
}

fn dims(value: &str, min: usize, max: usize, what: &str) -> Result<Vec<usize>> {
    let parts: Vec<usize> = value
        .split('x')
        .map(|p| {
            let n: usize = p.trim().parse().map_err(|_| Error::invalid(format!("{what}: `{p}` is not a positive integer")))?;
            if n == 0 || n > MAX_DIM {
                return Err(Error::invalid(format!("{what}: {n} outside 1..={MAX_DIM}")));
            }
            Ok(n)
        })
        .collect::<Result<_>>()?;
    if parts.len() < min || parts.len() > max {
        return Err(Error::invalid(format!("{what}: expected {min} to {max} dimensions, got `{value}`")));
    }
    Ok(parts)
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut input = None;
        let mut items = Vec::new();
        for raw in s.split(';') {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let (key, value) = match raw.split_once('=') {
                Some((k, v)) => (k.trim().to_ascii_lowercase(), Some(v.trim())),
                None => (raw.to_ascii_lowercase(), None),
            };
            let need = |what: &str| value.ok_or_else(|| Error::invalid(format!("`{what}` needs a value")));
            if input.is_none() && key != "input" {
                return Err(Error::invalid("layer spec must start with `input=`"));
            }
            let item = match key.as_str() {
                "input" => {
                    if input.is_some() {
                        return Err(Error::invalid("duplicate `input=`"));
                    }
                    let d = dims(need("input")?, 1, 3, "input")?;
                    if d.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).is_none_or(|n| n > MAX_ELEMENTS) {
                        return Err(Error::invalid("input too large"));
                    }
                    input = Some(d);
                    continue;
                }
                "conv" => {
                    let d = dims(need("conv")?, 2, 3, "conv")?;
                    SpecItem::Conv { filters: d[0], kernel: d[1..].to_vec() }
                }
                "pool" => SpecItem::Pool { window: dims(need("pool")?, 1, 2, "pool")? },
                "fc" => SpecItem::Fc(dims(need("fc")?, 1, 1, "fc")?[0]),
                "lstm" => SpecItem::Lstm(dims(need("lstm")?, 1, 1, "lstm")?[0]),
                "rnn" => {
                    let d = dims(need("rnn")?, 2, 2, "rnn")?;
                    SpecItem::Rnn { hidden: d[0], outputs: d[1] }
                }
                "dropout" => {
                    let r: f64 = need("dropout")?.parse().map_err(|_| Error::invalid("dropout rate is not a number"))?;
                    DropoutLayer::new(r)?;
                    SpecItem::Dropout(r)
                }
                "flatten" | "relu" | "tanh" | "sigmoid" | "softmax" if value.is_some() => {
                    return Err(Error::invalid(format!("`{key}` takes no value")));
                }
                "flatten" => SpecItem::Flatten,
                "relu" => SpecItem::Act(DenseActivation::Relu),
                "tanh" => SpecItem::Act(DenseActivation::Tanh),
                "sigmoid" => SpecItem::Act(DenseActivation::Sigmoid),
                "softmax" => SpecItem::Act(DenseActivation::Softmax),
                other => return Err(Error::invalid(format!("unknown layer `{other}`"))),
            };
            items.push(item);
        }
        let input = input.ok_or_else(|| Error::invalid("layer spec is empty"))?;
        Ok(Self { input, items })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input={}", join(&self.input))?;
        for item in &self.items {
            match item {
                SpecItem::Conv { filters, kernel } => write!(f, ";conv={filters}x{}", join(kernel))?,
                SpecItem::Pool { window } => write!(f, ";pool={}", join(window))?,
                SpecItem::Fc(n) => write!(f, ";fc={n}")?,
                SpecItem::Lstm(h) => write!(f, ";lstm={h}")?,
                SpecItem::Rnn { hidden, outputs } => write!(f, ";rnn={hidden}x{outputs}")?,
                SpecItem::Dropout(r) => write!(f, ";dropout={r}")?,
                SpecItem::Flatten => f.write_str(";flatten")?,
                SpecItem::Act(a) => write!(
                    f,
                    ";{}",
                    match a {
                        DenseActivation::Relu => "relu",
                        DenseActivation::Tanh => "tanh",
                        DenseActivation::Sigmoid => "sigmoid",
                        DenseActivation::Softmax => "softmax",
                        DenseActivation::None => "linear",
                    }
                )?,
            }
        }
        Ok(())
    }
}

fn checked_product(v: &[usize]) -> Result<usize> {
    v.iter()
        .try_fold(1usize, |a, &b| a.checked_mul(b))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| Error::invalid("layer spec exceeds the size limit"))
}

impl ModelSpec {
    /// Instantiate with Glorot-initialized weights. Fails on shape mismatches
    /// or when the parameter total would exceed [`MAX_ELEMENTS`].
    pub fn build(&self, rng: &mut RngStream) -> Result<Sequential> {
        let mut shape = self.input.clone();
        let mut layers = Vec::new();
        let mut params = 0usize;
        let mut charge = |dims: &[usize]| -> Result<()> {
            params = params
                .checked_add(checked_product(dims)?)
                .filter(|&n| n <= MAX_ELEMENTS)
                .ok_or_else(|| Error::invalid("layer spec exceeds the parameter limit"))?;
            Ok(())
        };
        for item in &self.items {
            let lifted = match item {
                SpecItem::Conv { .. } | SpecItem::Pool { .. } if shape.len() == 1 => Some(vec![1, shape[0]]),
                SpecItem::Conv { kernel: d, .. } | SpecItem::Pool { window: d } if shape.len() == 2 && d.len() == 2 => {
                    Some(vec![1, shape[0], shape[1]])
                }
                SpecItem::Lstm(_) | SpecItem::Rnn { .. } if shape.len() == 1 => Some(vec![shape[0], 1]),
                _ => None,
            };
            if let Some(to) = lifted {
                layers.push(Layer::Reshape(to.clone()));
                shape = to;
            }
            let layer = match item {
                SpecItem::Conv { filters, kernel } => {
                    let c = shape[0];
                    match (shape.len(), kernel.as_slice()) {
                        (2, [k]) => {
                            charge(&[*filters, c, *k])?;
                            Layer::Conv1D(Conv1DLayer::init(*filters, c, *k, 1, Padding::Valid, rng)?)
                        }
                        (3, [k]) | (3, [k, _]) => {
                            let kw = kernel.get(1).copied().unwrap_or(*k);
                            charge(&[*filters, c, *k, kw])?;
                            Layer::Conv2D(Conv2DLayer::init(*filters, c, (*k, kw), (1, 1), Padding::Valid, rng)?)
                        }
                        _ => return Err(Error::shape(format!("conv kernel {kernel:?} does not fit input {shape:?}"))),
                    }
                }
                SpecItem::Pool { window } => match (shape.len(), window.as_slice()) {
                    (2, [p]) => Layer::MaxPool1D(MaxPool1DLayer::new(*p, None)?),
                    (3, [p]) => Layer::MaxPool2D(MaxPool2DLayer::new(*p, None)?),
                    (3, [p, q]) => Layer::MaxPool2D(MaxPool2DLayer::with_dims((*p, *q), (*p, *q))?),
                    _ => return Err(Error::shape(format!("pool window {window:?} does not fit input {shape:?}"))),
                },
                SpecItem::Fc(n) => {
                    let inputs = checked_product(&shape)?;
                    charge(&[inputs + 1, *n])?;
                    Layer::Dense(DenseLayer::init(inputs, *n, DenseActivation::None, rng)?)
                }
                SpecItem::Lstm(h) => {
                    if shape.len() != 2 {
                        return Err(Error::shape(format!("lstm needs a [T, X] input, got {shape:?}")));
                    }
                    charge(&[4, *h, h + shape[1] + 1])?;
                    Layer::Lstm { cell: LstmCell::init(*h, shape[1], rng)?, return_sequences: true }
                }
                SpecItem::Rnn { hidden, outputs } => {
                    if shape.len() != 2 {
                        return Err(Error::shape(format!("rnn needs a [T, X] input, got {shape:?}")));
                    }
                    charge(&[*hidden, hidden + shape[1] + outputs + 1])?;
                    Layer::Rnn(RnnCell::init(*hidden, shape[1], *outputs, Activation::Tanh, rng)?)
                }
                SpecItem::Dropout(r) => Layer::Dropout(DropoutLayer::new(*r)?),
                SpecItem::Flatten => Layer::Flatten,
                SpecItem::Act(a) => Layer::Activation(*a),
            };
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        Sequential::new(&self.input, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CountMode;

    #[test]
    fn square_kernel_lifts_plain_image() {
        let spec: ModelSpec = "input=28x28;conv=8x3x3;pool=2x2;fc=5".parse().unwrap();
        let m = spec.build(&mut RngStream::new(0)).unwrap();
        assert_eq!(m.shapes()[1], vec![1, 28, 28]);
        assert_eq!(m.total_macs(CountMode::Formula), 8 * 9 * 784 + 169 + 8 * 13 * 13 * 5);
    }

    #[test]
    fn toy_cnn_totals() {
        let spec: ModelSpec = "input=1x28x28;conv=8x3;pool=2;fc=5".parse().unwrap();
        let m = spec.build(&mut RngStream::new(0)).unwrap();
        let formula = m.total_macs(CountMode::Formula);
        // conv 8·9·28², pool 26²/2² (one map, true conv output extent), fc 8·13·13·5
        assert_eq!(formula, 8 * 9 * 784 + 169 + 8 * 13 * 13 * 5);
        let exact = m.total_macs(CountMode::Exact);
        assert_eq!(exact, 8 * 9 * 26 * 26 + 8 * 13 * 13 + 8 * 13 * 13 * 5);
        // documented padding delta on the convolution
        let delta = 8 * 9 * (28 * 28 - 26 * 26);
        assert_eq!(
            m.layer_costs(CountMode::Formula)[0].macs - m.layer_costs(CountMode::Exact)[0].macs,
            delta
        );
    }

    #[test]
    fn display_round_trip() {
        for s in [
            "input=187;conv=8x5;relu;pool=2;flatten;fc=5;softmax",
            "input=17x11;lstm=4;rnn=3x5;dropout=0.25",
            "input=2x6x6;conv=3x2x3;pool=2x1;fc=2;tanh;sigmoid",
        ] {
            let spec: ModelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
            spec.build(&mut RngStream::new(1)).unwrap();
        }
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "conv=8x3", "input=0", "input=4;conv=8", "input=4;blah=1", "input=4;relu=3", "input=2x2x2x2", "input=4;fc=-1", "input=4;dropout=1.5"] {
            assert!(s.parse::<ModelSpec>().is_err(), "{s}");
        }
        let too_big: ModelSpec = "input=65536;fc=65536".parse().unwrap();
        assert!(too_big.build(&mut RngStream::new(0)).is_err());
        let mismatch: ModelSpec = "input=4x4;conv=2x5".parse().unwrap();
        assert!(mismatch.build(&mut RngStream::new(0)).is_err());
    }
}
