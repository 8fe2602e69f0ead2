//! Binary restricted Boltzmann machines, contrastive divergence, and deep
//! belief networks built from stacked RBMs with a softmax head.
//!
//! Energy: `E(v, h) = −Σ_ij w_ij v_i h_j − Σ_i a_i v_i − Σ_j b_j h_j`.
//! Conditionals: `p(h_j = 1 | v) = σ(b_j + Σ_i w_ij v_i)` and
//! `p(v_i = 1 | h) = σ(a_i + Σ_j w_ij h_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{DenseActivation, DenseLayer};
use crate::tensor::{sigmoid, RngStream, Tensor};

/// Largest `n_visible + n_hidden` for which exact enumeration is allowed.
pub const MAX_ENUMERATION_UNITS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rbm {
    /// `[n_visible, n_hidden]`
    pub weights: Tensor,
    /// Visible biases `a`, `[n_visible]`.
    pub visible_bias: Tensor,
    /// Hidden biases `b`, `[n_hidden]`.
    pub hidden_bias: Tensor,
}

/// Parameter changes applied by one contrastive-divergence update.
#[derive(Debug, Clone, PartialEq)]
pub struct CdDeltas {
    pub weights: Tensor,
    pub visible_bias: Tensor,
    pub hidden_bias: Tensor,
}

impl CdDeltas {
    pub fn is_zero(&self) -> bool {
        [&self.weights, &self.visible_bias, &self.hidden_bias]
            .iter()
            .all(|t| t.data().iter().all(|&v| v == 0.0))
    }
}

fn check_binary(name: &str, x: &Tensor) -> Result<()> {
    if x.data().iter().all(|&v| v == 0.0 || v == 1.0) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be binary")))
    }
}

impl Rbm {
    pub fn new(weights: Tensor, visible_bias: Tensor, hidden_bias: Tensor) -> Result<Self> {
        let ok = weights.rank() == 2
            && visible_bias.shape() == [weights.shape()[0]]
            && hidden_bias.shape() == [weights.shape()[1]];
        if !ok {
            return Err(Error::shape(format!(
                "rbm weights {:?}, a {:?}, b {:?} inconsistent",
                weights.shape(),
                visible_bias.shape(),
                hidden_bias.shape()
            )));
        }
        Ok(Self { weights, visible_bias, hidden_bias })
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Result<Self> {
        Self::new(
            Tensor::zeros(&[n_visible, n_hidden])?,
            Tensor::zeros(&[n_visible])?,
            Tensor::zeros(&[n_hidden])?,
        )
    }

    /// Small Gaussian weights (σ = 0.01), zero biases.
    pub fn init(n_visible: usize, n_hidden: usize, rng: &mut RngStream) -> Result<Self> {
        Self::new(
            Tensor::random_normal(&[n_visible, n_hidden], 0.0, 0.01, rng)?,
            Tensor::zeros(&[n_visible])?,
            Tensor::zeros(&[n_hidden])?,
        )
    }

    pub fn n_visible(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.shape()[1]
    }

    fn check_lengths(&self, v: &Tensor, h: &Tensor) -> Result<()> {
        if v.len() != self.n_visible() || h.len() != self.n_hidden() {
            return Err(Error::shape(format!(
                "rbm expects v[{}], h[{}], got v[{}], h[{}]",
                self.n_visible(),
                self.n_hidden(),
                v.len(),
                h.len()
            )));
        }
        Ok(())
    }

    fn energy_raw(&self, v: &[f64], h: &[f64]) -> f64 {
        let nh = self.n_hidden();
        let w = self.weights.data();
        let mut e = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &w[i * nh..(i + 1) * nh];
            e -= vi * row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
            e -= self.visible_bias.data()[i] * vi;
        }
        e - self.hidden_bias.data().iter().zip(h).map(|(b, hj)| b * hj).sum::<f64>()
    }

    pub fn energy(&self, v: &Tensor, h: &Tensor) -> Result<f64> {
        self.check_lengths(v, h)?;
        check_binary("visible state", v)?;
        check_binary("hidden state", h)?;
        Ok(self.energy_raw(v.data(), h.data()))
    }

    fn enumeration_units(&self) -> Result<usize> {
        let units = self.n_visible() + self.n_hidden();
        if units > MAX_ENUMERATION_UNITS {
            return Err(Error::invalid(format!(
                "{units} units exceed the exhaustive enumeration bound of {MAX_ENUMERATION_UNITS}"
            )));
        }
        Ok(units)
    }

    /// `ln Z` by exhaustive enumeration, accumulated with log-sum-exp.
    pub fn log_partition_function(&self) -> Result<f64> {
        self.enumeration_units()?;
        let (nv, nh) = (self.n_visible(), self.n_hidden());
        let mut neg_e = Vec::with_capacity(1 << (nv + nh));
        for vm in 0..(1u64 << nv) {
            let v = bits(vm, nv);
            for hm in 0..(1u64 << nh) {
                neg_e.push(-self.energy_raw(&v, &bits(hm, nh)));
            }
        }
        let max = neg_e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + neg_e.iter().map(|x| (x - max).exp()).sum::<f64>().ln())
    }

    pub fn partition_function(&self) -> Result<f64> {
        Ok(self.log_partition_function()?.exp())
    }

    pub fn joint_probability(&self, v: &Tensor, h: &Tensor) -> Result<f64> {
        let e = self.energy(v, h)?;
        Ok((-e - self.log_partition_function()?).exp())
    }

    /// `p(h = 1 | v)` for any `v` with entries in `[0, 1]`.
    pub fn hidden_probs(&self, v: &[f64]) -> Vec<f64> {
        let nh = self.n_hidden();
        let mut z = self.hidden_bias.data().to_vec();
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = &self.weights.data()[i * nh..(i + 1) * nh];
            z.iter_mut().zip(row).for_each(|(a, w)| *a += vi * w);
        }
        z.into_iter().map(sigmoid).collect()
    }

    /// `p(v = 1 | h)` for any `h` with entries in `[0, 1]`.
    pub fn visible_probs(&self, h: &[f64]) -> Vec<f64> {
        let nh = self.n_hidden();
        self.visible_bias
            .data()
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let row = &self.weights.data()[i * nh..(i + 1) * nh];
                sigmoid(a + row.iter().zip(h).map(|(w, hj)| w * hj).sum::<f64>())
            })
            .collect()
    }

    pub fn hidden_given_visible(&self, v: &Tensor) -> Result<Tensor> {
        if v.len() != self.n_visible() {
            return Err(Error::shape(format!("expected {} visible units, got {}", self.n_visible(), v.len())));
        }
        check_binary("visible state", v)?;
        Tensor::from_vec(&[self.n_hidden()], self.hidden_probs(v.data()))
    }

    pub fn visible_given_hidden(&self, h: &Tensor) -> Result<Tensor> {
        if h.len() != self.n_hidden() {
            return Err(Error::shape(format!("expected {} hidden units, got {}", self.n_hidden(), h.len())));
        }
        check_binary("hidden state", h)?;
        Tensor::from_vec(&[self.n_visible()], self.visible_probs(h.data()))
    }

    pub fn cd1_update(&mut self, v0: &Tensor, learning_rate: f64, rng: &mut RngStream) -> Result<CdDeltas> {
        self.cd_update(v0, learning_rate, 1, rng, CdHook::default())
    }

    /// Contrastive divergence with `k` Gibbs steps. Hidden units are sampled
    /// on every step except the last, whose statistics use probabilities.
    /// Parameters are updated in place and the applied deltas returned.
    pub fn cd_update(
        &mut self,
        v0: &Tensor,
        learning_rate: f64,
        k: usize,
        rng: &mut RngStream,
        hook: CdHook,
    ) -> Result<CdDeltas> {
        if !(learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        if k == 0 {
            return Err(Error::invalid("CD-k needs k >= 1"));
        }
        if v0.len() != self.n_visible() {
            return Err(Error::shape(format!("expected {} visible units, got {}", self.n_visible(), v0.len())));
        }
        check_binary("v0", v0)?;
        let v0 = v0.data();
        let ph0 = self.hidden_probs(v0);
        let mut vk = v0.to_vec();
        let mut phk = ph0.clone();
        for _ in 0..k {
            let h: Vec<f64> = phk.iter().map(|&p| f64::from(rng.bernoulli(p))).collect();
            vk = if hook.clamp_reconstruction {
                v0.to_vec()
            } else {
                self.visible_probs(&h).iter().map(|&p| f64::from(rng.bernoulli(p))).collect()
            };
            phk = self.hidden_probs(&vk);
        }
        let (nv, nh) = (self.n_visible(), self.n_hidden());
        let mut dw = vec![0.0; nv * nh];
        for i in 0..nv {
            for j in 0..nh {
                dw[i * nh + j] = learning_rate * (v0[i] * ph0[j] - vk[i] * phk[j]);
            }
        }
        let da: Vec<f64> = v0.iter().zip(&vk).map(|(a, b)| learning_rate * (a - b)).collect();
        let db: Vec<f64> = ph0.iter().zip(&phk).map(|(a, b)| learning_rate * (a - b)).collect();
        add_into(&mut self.weights, &dw);
        add_into(&mut self.visible_bias, &da);
        add_into(&mut self.hidden_bias, &db);
        Ok(CdDeltas {
            weights: Tensor::from_vec(&[nv, nh], dw)?,
            visible_bias: Tensor::from_vec(&[nv], da)?,
            hidden_bias: Tensor::from_vec(&[nh], db)?,
        })
    }

    /// Mean binary cross-entropy between each row and its deterministic
    /// mean-field reconstruction `p(v | p(h | v))`.
    pub fn reconstruction_cross_entropy(&self, data: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for v in data {
            let r = self.visible_probs(&self.hidden_probs(v));
            total -= v
                .iter()
                .zip(&r)
                .map(|(&x, &p)| {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    x * p.ln() + (1.0 - x) * (1.0 - p).ln()
                })
                .sum::<f64>()
                / v.len() as f64;
        }
        total / data.len() as f64
    }
}

/// Test hooks for [`Rbm::cd_update`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CdHook {
    /// Force the reconstruction `v_k` to equal the data `v0`.
    pub clamp_reconstruction: bool,
}

fn add_into(t: &mut Tensor, delta: &[f64]) {
    t.data_mut().iter_mut().zip(delta).for_each(|(a, d)| *a += d);
}

/// Bits of `mask` as a 0/1 vector, least significant bit first.
pub fn bits(mask: u64, n: usize) -> Vec<f64> {
    (0..n).map(|i| ((mask >> i) & 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dbn {
    pub layers: Vec<Rbm>,
    pub head: DenseLayer,
}

impl Dbn {
    pub fn new(layers: Vec<Rbm>, head: DenseLayer) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("DBN needs at least one RBM"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].n_hidden() != pair[1].n_visible() {
                return Err(Error::shape(format!(
                    "RBM {k} has {} hidden units but RBM {} has {} visible units",
                    pair[0].n_hidden(),
                    k + 1,
                    pair[1].n_visible()
                )));
            }
        }
        let top = layers.last().expect("non-empty").n_hidden();
        if head.inputs() != top || head.activation != DenseActivation::Softmax {
            return Err(Error::shape("DBN head must be a softmax layer over the top hidden units"));
        }
        Ok(Self { layers, head })
    }

    /// RBM stack with sizes `[n_visible, h1, h2, ...]` plus a softmax head.
    pub fn init(sizes: &[usize], classes: usize, rng: &mut RngStream) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("DBN sizes need a visible and at least one hidden layer"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Rbm::init(w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        let head = DenseLayer::init(*sizes.last().expect("len >= 2"), classes, DenseActivation::Softmax, rng)?;
        Self::new(layers, head)
    }

    pub fn n_visible(&self) -> usize {
        self.layers[0].n_visible()
    }

    /// Deterministic upward pass of hidden probabilities.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.layers.iter().fold(x.to_vec(), |acc, rbm| rbm.hidden_probs(&acc))
    }

    pub fn dbn_forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.n_visible() {
            return Err(Error::shape(format!("DBN expects {} inputs, got {}", self.n_visible(), x.len())));
        }
        self.head.dense_forward(&Tensor::vector(&self.features(x.data())))
    }

    /// Greedy bottom-up CD-1 pretraining. Each layer sees the hidden
    /// probabilities of the layer below, thresholded at 0.5 to binary
    /// states. Rows are visited in a freshly shuffled order every epoch.
    pub fn pretrain_layerwise(&mut self, data: &Tensor, epochs: usize, lr: f64, rng: &mut RngStream) -> Result<()> {
        let (n, width) = match data.shape() {
            [n, w] => (*n, *w),
            s => return Err(Error::shape(format!("pretraining data must be [N, n_v], got {s:?}"))),
        };
        if width != self.n_visible() {
            return Err(Error::shape(format!(
                "pretraining data has {width} columns, DBN expects {}",
                self.n_visible()
            )));
        }
        if data.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pretraining data must lie in [0, 1]"));
        }
        let mut inputs: Vec<Vec<f64>> = (0..n).map(|i| data.row(i).to_vec()).collect();
        for rbm in self.layers.iter_mut() {
            let binary: Vec<Tensor> = inputs
                .iter()
                .map(|row| Tensor::vector(&row.iter().map(|&p| f64::from(p >= 0.5)).collect::<Vec<_>>()))
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..epochs {
                rng.shuffle(&mut order);
                for &i in &order {
                    rbm.cd1_update(&binary[i], lr, rng)?;
                }
            }
            inputs = inputs.iter().map(|row| rbm.hidden_probs(row)).collect();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_rbm(w: f64, a: f64, b: f64) -> Rbm {
        Rbm::new(Tensor::matrix(&[&[w]]), Tensor::vector(&[a]), Tensor::vector(&[b])).unwrap()
    }

    fn random_rbm(nv: usize, nh: usize, seed: u64) -> Rbm {
        let mut rng = RngStream::new(seed);
        Rbm::new(
            Tensor::random_normal(&[nv, nh], 0.0, 1.0, &mut rng).unwrap(),
            Tensor::random_normal(&[nv], 0.0, 1.0, &mut rng).unwrap(),
            Tensor::random_normal(&[nh], 0.0, 1.0, &mut rng).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn energy_examples() {
        let zero = Rbm::zeros(3, 2).unwrap();
        assert_eq!(zero.energy(&Tensor::vector(&[1.0, 0.0, 1.0]), &Tensor::vector(&[1.0, 1.0])).unwrap(), 0.0);

        let r = random_rbm(3, 2, 5);
        let h = Tensor::vector(&[1.0, 0.0]);
        let e = r.energy(&Tensor::zeros(&[3]).unwrap(), &h).unwrap();
        assert_eq!(e, -r.hidden_bias.data()[0]);

        let s = scalar_rbm(2.0, 0.5, -1.0);
        assert_eq!(s.energy(&Tensor::vector(&[1.0]), &Tensor::vector(&[1.0])).unwrap(), -1.5);
        assert!(s.energy(&Tensor::vector(&[0.5]), &Tensor::vector(&[1.0])).is_err());
    }

    #[test]
    fn partition_examples() {
        assert!((Rbm::zeros(2, 1).unwrap().partition_function().unwrap() - 8.0).abs() < 1e-12);
        assert!((Rbm::zeros(4, 3).unwrap().partition_function().unwrap() - 128.0).abs() < 1e-10);
        let s = scalar_rbm(2.0, 0.5, -1.0);
        // states (v,h): (0,0) E=0, (1,0) E=-0.5, (0,1) E=1, (1,1) E=-1.5
        let expected = 1.0 + 0.5f64.exp() + (-1.0f64).exp() + 1.5f64.exp();
        assert!((s.partition_function().unwrap() - expected).abs() < 1e-12);
        assert!(Rbm::zeros(12, 9).unwrap().partition_function().is_err());
    }

    #[test]
    fn joint_probability_examples() {
        let zero = Rbm::zeros(2, 2).unwrap();
        let p = zero.joint_probability(&Tensor::vector(&[1.0, 0.0]), &Tensor::vector(&[0.0, 1.0])).unwrap();
        assert!((p - 1.0 / 16.0).abs() < 1e-15);

        let strong = Rbm::new(Tensor::filled(&[2, 2], 4.0).unwrap(), Tensor::zeros(&[2]).unwrap(), Tensor::zeros(&[2]).unwrap()).unwrap();
        let ones = Tensor::vector(&[1.0, 1.0]);
        let best = strong.joint_probability(&ones, &ones).unwrap();
        for vm in 0..4 {
            for hm in 0..4 {
                let p = strong
                    .joint_probability(&Tensor::vector(&bits(vm, 2)), &Tensor::vector(&bits(hm, 2)))
                    .unwrap();
                assert!(p <= best);
            }
        }
    }

    #[test]
    fn conditional_examples() {
        let zero = Rbm::zeros(3, 2).unwrap();
        let p = zero.hidden_given_visible(&Tensor::vector(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        let q = zero.visible_given_hidden(&Tensor::vector(&[1.0, 0.0])).unwrap();
        assert_eq!(q.data(), &[0.5; 3]);

        let mut r = Rbm::zeros(2, 2).unwrap();
        r.hidden_bias = Tensor::vector(&[-50.0, 0.0]);
        r.visible_bias = Tensor::vector(&[0.0, -50.0]);
        assert!(r.hidden_given_visible(&Tensor::vector(&[1.0, 1.0])).unwrap().data()[0] < 1e-20);
        assert!(r.visible_given_hidden(&Tensor::vector(&[1.0, 1.0])).unwrap().data()[1] < 1e-20);
        assert!(r.hidden_given_visible(&Tensor::vector(&[0.3, 1.0])).is_err());
    }

    #[test]
    fn conditionals_match_enumeration() {
        let r = random_rbm(3, 3, 77);
        for vm in 0..8u64 {
            let v = Tensor::vector(&bits(vm, 3));
            let closed = r.hidden_given_visible(&v).unwrap();
            for j in 0..3 {
                let (mut num, mut den) = (0.0, 0.0);
                for hm in 0..8u64 {
                    let h = Tensor::vector(&bits(hm, 3));
                    let p = r.joint_probability(&v, &h).unwrap();
                    den += p;
                    if h.data()[j] == 1.0 {
                        num += p;
                    }
                }
                assert!((closed.data()[j] - num / den).abs() < 1e-9);
            }
        }
        for hm in 0..8u64 {
            let h = Tensor::vector(&bits(hm, 3));
            let closed = r.visible_given_hidden(&h).unwrap();
            for i in 0..3 {
                let (mut num, mut den) = (0.0, 0.0);
                for vm in 0..8u64 {
                    let v = Tensor::vector(&bits(vm, 3));
                    let p = r.joint_probability(&v, &h).unwrap();
                    den += p;
                    if v.data()[i] == 1.0 {
                        num += p;
                    }
                }
                assert!((closed.data()[i] - num / den).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn energy_invariant_under_hidden_permutation() {
        let r = random_rbm(3, 4, 12);
        let perm = [2usize, 0, 3, 1];
        let mut w = Tensor::zeros(&[3, 4]).unwrap();
        let mut b = Tensor::zeros(&[4]).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            for i in 0..3 {
                w.set(&[i, new], r.weights.get(&[i, old]));
            }
            b.data_mut()[new] = r.hidden_bias.data()[old];
        }
        let p = Rbm::new(w, r.visible_bias.clone(), b).unwrap();
        for vm in 0..8u64 {
            for hm in 0..16u64 {
                let v = Tensor::vector(&bits(vm, 3));
                let h = bits(hm, 4);
                let hp: Vec<f64> = perm.iter().map(|&old| h[old]).collect();
                let e1 = r.energy(&v, &Tensor::vector(&h)).unwrap();
                let e2 = p.energy(&v, &Tensor::vector(&hp)).unwrap();
                assert!((e1 - e2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cd_fixed_point_and_determinism() {
        let mut r = random_rbm(4, 3, 3);
        let v0 = Tensor::vector(&[1.0, 0.0, 1.0, 1.0]);
        let d = r
            .cd_update(&v0, 0.1, 1, &mut RngStream::new(1), CdHook { clamp_reconstruction: true })
            .unwrap();
        assert!(d.is_zero());

        let base = random_rbm(4, 3, 3);
        let (mut a, mut b) = (base.clone(), base);
        let da = a.cd1_update(&v0, 0.1, &mut RngStream::new(5)).unwrap();
        let db = b.cd1_update(&v0, 0.1, &mut RngStream::new(5)).unwrap();
        assert_eq!(da, db);
        assert_eq!(a, b);
        assert!(a.cd1_update(&v0, 0.0, &mut RngStream::new(5)).is_err());
    }

    #[test]
    fn cd_training_lowers_reconstruction_error() {
        let data = vec![vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]];
        let mut rng = RngStream::new(2024);
        let mut r = Rbm::init(4, 2, &mut rng).unwrap();
        let before = r.reconstruction_cross_entropy(&data);
        for _ in 0..500 {
            for row in &data {
                r.cd1_update(&Tensor::vector(row), 0.1, &mut rng).unwrap();
            }
        }
        let after = r.reconstruction_cross_entropy(&data);
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn dbn_shapes_and_pretraining() {
        let mut rng = RngStream::new(6);
        assert!(Dbn::new(vec![Rbm::zeros(4, 3).unwrap(), Rbm::zeros(2, 2).unwrap()], DenseLayer::init(2, 2, DenseActivation::Softmax, &mut rng).unwrap()).is_err());

        let mut dbn = Dbn::init(&[8, 6, 4], 2, &mut rng).unwrap();
        assert_eq!(dbn.layers[1].n_visible(), dbn.layers[0].n_hidden());
        let data = Tensor::random_uniform(&[10, 8], 0.0, 1.0, &mut rng).unwrap();
        let frozen = dbn.clone();
        dbn.pretrain_layerwise(&data, 0, 0.1, &mut rng).unwrap();
        assert_eq!(dbn, frozen);
        dbn.pretrain_layerwise(&data, 2, 0.1, &mut rng).unwrap();
        assert_ne!(dbn.layers[1], frozen.layers[1]);
        assert!(dbn.pretrain_layerwise(&Tensor::zeros(&[3, 5]).unwrap(), 1, 0.1, &mut rng).is_err());
    }

    #[test]
    fn single_layer_pretraining_is_cd1() {
        let mut rng = RngStream::new(31);
        let dbn = Dbn::init(&[4, 3], 2, &mut rng).unwrap();
        let data = Tensor::matrix(&[&[1.0, 0.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 1.0]]);
        let mut via_dbn = dbn.clone();
        via_dbn.pretrain_layerwise(&data, 3, 0.05, &mut RngStream::new(8)).unwrap();

        let mut rbm = dbn.layers[0].clone();
        let mut r = RngStream::new(8);
        let mut order = vec![0usize, 1];
        for _ in 0..3 {
            r.shuffle(&mut order);
            for &i in &order {
                rbm.cd1_update(&Tensor::vector(data.row(i)), 0.05, &mut r).unwrap();
            }
        }
        assert_eq!(via_dbn.layers[0], rbm);
    }

    #[test]
    fn dbn_forward_normalized() {
        let dbn = Dbn::new(
            vec![Rbm::zeros(6, 4).unwrap()],
            DenseLayer::new(Tensor::zeros(&[5, 4]).unwrap(), Tensor::zeros(&[5]).unwrap(), DenseActivation::Softmax).unwrap(),
        )
        .unwrap();
        let p = dbn.dbn_forward(&Tensor::vector(&[0.2, 0.9, 0.0, 1.0, 0.5, 0.3])).unwrap();
        assert!(p.data().iter().all(|&x| (x - 0.2).abs() < 1e-15));

        let mut rng = RngStream::new(4);
        let dbn = Dbn::init(&[6, 5, 3], 4, &mut rng).unwrap();
        for _ in 0..20 {
            let x = Tensor::random_uniform(&[6], 0.0, 1.0, &mut rng).unwrap();
            assert!((dbn.dbn_forward(&x).unwrap().sum() - 1.0).abs() < 1e-9);
        }
        assert!(dbn.dbn_forward(&Tensor::zeros(&[5]).unwrap()).is_err());
    }
}
