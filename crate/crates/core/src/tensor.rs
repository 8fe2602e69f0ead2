//! Dense row-major tensors of `f64` and the seeded random stream used by
//! every stochastic operation in the crate.
//!
//! Element `(i0, i1, ..., ik)` of a tensor with shape `[d0, d1, ..., dk]`
//! lives at flat offset `((i0 * d1 + i1) * d2 + i2) ... * dk + ik`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y = f(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("empty shape list"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = check_shape(shape)?;
        if data.len() != n {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Rank-1 tensor from a slice. Panics on an empty slice.
    pub fn vector(values: &[f64]) -> Self {
        Self::from_vec(&[values.len()], values.to_vec()).expect("non-empty vector")
    }

    /// Rank-2 tensor from nested rows. Panics on ragged or empty input.
    pub fn matrix(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(&[rows.len(), cols], data).expect("non-empty matrix")
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op}: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn subtract(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "subtract", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_elementwise(&self, activation: Activation) -> Self {
        self.map(|v| activation.apply(v))
    }

    /// Like [`Tensor::map_elementwise`] but keyed by name (`sigmoid`, `tanh`, `relu`).
    pub fn map_named(&self, fn_id: &str) -> Result<Self> {
        Ok(self.map_elementwise(Activation::from_id(fn_id)?))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    fn dims2(&self, op: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(format!("{op}: expected rank-2, got {s:?}"))),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimension mismatch: [{m},{k}] x [{k2},{n}]"
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Self::from_vec(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::from_vec(&[c, r], out)
    }

    /// Stack along the leading axis. All inputs must share trailing dims.
    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows of nothing"))?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::shape(format!(
                    "concat_rows: trailing dims {:?} vs {:?}",
                    &p.shape[1..],
                    tail
                )));
            }
            lead += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(tail);
        Self::from_vec(&shape, data)
    }

    /// Rows `start..end` along the leading axis.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let lead = self.shape[0];
        if start >= end || end > lead {
            return Err(Error::shape(format!(
                "slice {start}..{end} out of range for leading dim {lead}"
            )));
        }
        let stride = self.data.len() / lead;
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Self::from_vec(&shape, self.data[start * stride..end * stride].to_vec())
    }

    /// Row `i` of a rank-2 tensor, as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.data.len() / self.shape[0];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Index of the largest element of each row (first one on ties).
    pub fn argmax_row(&self) -> Result<Vec<usize>> {
        let (r, _) = match self.rank() {
            1 => (1, self.shape[0]),
            _ => self.dims2("argmax_row")?,
        };
        Ok((0..r).map(|i| argmax(self.row(i))).collect())
    }

    pub fn random_normal(shape: &[usize], mean: f64, stddev: f64, rng: &mut RngStream) -> Result<Self> {
        if !(stddev >= 0.0) {
            return Err(Error::invalid(format!("negative stddev {stddev}")));
        }
        let n = check_shape(shape)?;
        let data = (0..n).map(|_| mean + stddev * rng.normal()).collect();
        Self::from_vec(shape, data)
    }

    pub fn random_uniform(shape: &[usize], low: f64, high: f64, rng: &mut RngStream) -> Result<Self> {
        let n = check_shape(shape)?;
        let data = (0..n).map(|_| low + (high - low) * rng.uniform()).collect();
        Self::from_vec(shape, data)
    }

    /// Glorot-uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Result<Self> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::random_uniform(shape, -limit, limit, rng)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Seeded pseudo-random stream.
///
/// Backed by ChaCha8 (`rand_chacha`). Uniform draws take the top 53 bits of a
/// 64-bit output; normal draws use the Box-Muller transform on two uniforms,
/// consuming both outputs of each transform in order.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngStream {
    pub const ALGORITHM_ID: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm_id(&self) -> &'static str {
        Self::ALGORITHM_ID
    }

    /// Independent child stream derived from this stream's seed and a tag.
    pub fn fork(&self, tag: u64) -> Self {
        Self::new(derive_seed(self.seed, tag))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Unbiased integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// SplitMix64 finalizer over `seed ^ tag`, used to derive sub-seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `out += W · x` for row-major `W` of shape `[out.len(), x.len()]`.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += Wᵀ · g` for row-major `W` of shape `[g.len(), out.len()]`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), g.len() * cols);
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// `dw += g ⊗ x`.
#[inline]
pub(crate) fn outer_acc(g: &[f64], x: &[f64], dw: &mut [f64]) {
    let cols = x.len();
    for (&gi, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if gi == 0.0 {
            continue;
        }
        for (d, b) in row.iter_mut().zip(x) {
            *d += gi * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_shapes() {
        let t = Tensor::zeros(&[2, 2]).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        assert_eq!(Tensor::zeros(&[1]).unwrap().data(), &[0.0]);
        let t = Tensor::zeros(&[3, 1, 2]).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.len(), 6);
        assert!(Tensor::zeros(&[]).is_err());
        assert!(Tensor::zeros(&[2, 0]).is_err());
    }

    #[test]
    fn matmul_examples() {
        let m = Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(Tensor::identity(2).unwrap().matmul(&m).unwrap(), m);
        let v = Tensor::matrix(&[&[5.0], &[6.0]]);
        assert_eq!(m.matmul(&v).unwrap().data(), &[17.0, 39.0]);
        assert!(v.matmul(&m).is_err());
    }

    #[test]
    fn activations() {
        let t = Tensor::vector(&[0.0]);
        assert_eq!(t.map_named("sigmoid").unwrap().data(), &[0.5]);
        assert_eq!(t.map_named("tanh").unwrap().data(), &[0.0]);
        let r = Tensor::vector(&[-3.0, 3.0]).map_named("relu").unwrap();
        assert_eq!(r.data(), &[0.0, 3.0]);
        assert!(t.map_named("gelu").is_err());
    }

    #[test]
    fn random_normal_contract() {
        let mut rng = RngStream::new(1);
        let z = Tensor::random_normal(&[4], 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        let a = Tensor::random_normal(&[16], 0.0, 1.0, &mut RngStream::new(9)).unwrap();
        let b = Tensor::random_normal(&[16], 0.0, 1.0, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(Tensor::random_normal(&[2], 0.0, -1.0, &mut rng).is_err());

        let s = Tensor::random_normal(&[10_000], 0.0, 1.0, &mut RngStream::new(42)).unwrap();
        let mean = s.mean();
        let sd = (s.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10_000.0).sqrt();
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
    }

    #[test]
    fn plumbing_ops() {
        let a = Tensor::matrix(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let t = a.transpose().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let c = Tensor::concat_rows(&[&a, &a]).unwrap();
        assert_eq!(c.shape(), &[4, 3]);
        assert_eq!(c.slice(2, 3).unwrap().data(), &[1.0, 2.0, 3.0]);
        assert_eq!(a.argmax_row().unwrap(), vec![2, 2]);
        assert_eq!(a.sum(), 21.0);
        assert_eq!(a.hadamard(&a).unwrap().data()[5], 36.0);
        assert!(a.reshape(&[4]).is_err());
        assert_eq!(a.reshape(&[6]).unwrap().shape(), &[6]);
        assert_eq!(a.get(&[1, 2]), 6.0);
    }

    #[test]
    fn rng_streams_are_reproducible() {
        let mut a = RngStream::new(5);
        let mut b = RngStream::new(5);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.algorithm_id(), "chacha8");
        let mut c = RngStream::new(6);
        assert_ne!(RngStream::new(5).next_u64(), c.next_u64());
    }

    fn mat(r: usize, c: usize) -> impl Strategy<Value = Tensor> {
        proptest::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |d| Tensor::from_vec(&[r, c], d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(a in mat(3, 4), b in mat(4, 2), c in mat(2, 5)) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data()) {
                // Products reach ~1e4 in magnitude; absolute rounding stays far below 1e-9.
                prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y);
            }
        }

        #[test]
        // Open-interval bounds hold until f64 saturation (|x| ~ 36 for sigmoid, ~19 for tanh).
        fn activation_ranges(x in -15.0f64..15.0) {
            let s = Activation::Sigmoid.apply(x);
            prop_assert!(s > 0.0 && s < 1.0);
            let t = Activation::Tanh.apply(x);
            prop_assert!(t > -1.0 && t < 1.0);
            prop_assert!(Activation::Relu.apply(x) >= 0.0);
        }
    }
}
