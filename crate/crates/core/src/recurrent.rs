//! LSTM and vanilla RNN cells, a bidirectional LSTM wrapper, and their
//! backpropagation-through-time gradients.
//!
//! Gate weights act on the concatenation `[h_{t-1}, x_t]`: the first `H`
//! columns of each `[H, H+X]` matrix multiply the previous hidden state and
//! the remaining `X` columns multiply the input.

use serde::{Deserialize, Serialize};

use crate::cost::MacSink;
use crate::error::{Error, Result};
use crate::tensor::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, Activation, RngStream, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Result<Self> {
        Ok(Self { h: Tensor::zeros(&[hidden])?, c: Tensor::zeros(&[hidden])? })
    }
}

/// Gate activations of one step, kept for inspection and backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGates {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
}

/// Test hook pinning the forget and/or input gates to constants.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GateOverride {
    pub forget: Option<f64>,
    pub input: Option<f64>,
}

impl LstmCell {
    pub fn zeros(hidden: usize, input: usize) -> Result<Self> {
        let w = Tensor::zeros(&[hidden, hidden + input])?;
        let b = Tensor::zeros(&[hidden])?;
        Ok(Self {
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(hidden: usize, input: usize, rng: &mut RngStream) -> Result<Self> {
        let mut cell = Self::zeros(hidden, input)?;
        for w in [&mut cell.w_f, &mut cell.w_i, &mut cell.w_c, &mut cell.w_o] {
            *w = Tensor::glorot(&[hidden, hidden + input], hidden + input, hidden, rng)?;
        }
        Ok(cell)
    }

    pub fn from_parts(weights: [Tensor; 4], biases: [Tensor; 4]) -> Result<Self> {
        let [w_f, w_i, w_c, w_o] = weights;
        let [b_f, b_i, b_c, b_o] = biases;
        let cell = Self { w_f, w_i, w_c, w_o, b_f, b_i, b_c, b_o };
        cell.validate()?;
        Ok(cell)
    }

    fn validate(&self) -> Result<()> {
        let s = self.w_f.shape();
        if s.len() != 2 || s[1] <= s[0] {
            return Err(Error::shape(format!("LSTM weight shape {s:?} is not [H, H+X]")));
        }
        let h = s[0];
        for w in [&self.w_i, &self.w_c, &self.w_o] {
            if w.shape() != s {
                return Err(Error::shape("LSTM gate weights differ in shape"));
            }
        }
        for b in [&self.b_f, &self.b_i, &self.b_c, &self.b_o] {
            if b.shape() != [h] {
                return Err(Error::shape("LSTM bias length differs from hidden size"));
            }
        }
        Ok(())
    }

    pub fn hidden_size(&self) -> usize {
        self.w_f.shape()[0]
    }

    pub fn input_size(&self) -> usize {
        self.w_f.shape()[1] - self.hidden_size()
    }

    pub fn params(&self) -> [&Tensor; 8] {
        [&self.w_f, &self.w_i, &self.w_c, &self.w_o, &self.b_f, &self.b_i, &self.b_c, &self.b_o]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_f,
            &mut self.w_i,
            &mut self.w_c,
            &mut self.w_o,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_c,
            &mut self.b_o,
        ]
    }

    fn check_step(&self, h: &[f64], c: &[f64], x: &[f64]) -> Result<()> {
        let hs = self.hidden_size();
        if h.len() != hs || c.len() != hs || x.len() != self.input_size() {
            return Err(Error::shape(format!(
                "lstm step: state {}/{} and input {} vs H={hs}, X={}",
                h.len(),
                c.len(),
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    pub fn lstm_step(&self, state: &LstmState, x_t: &Tensor) -> Result<LstmState> {
        Ok(self.step_detailed(state, x_t, GateOverride::default(), &mut ())?.0)
    }

    /// One step returning the new state and the gate activations.
    pub fn step_detailed<S: MacSink>(
        &self,
        state: &LstmState,
        x_t: &Tensor,
        hook: GateOverride,
        sink: &mut S,
    ) -> Result<(LstmState, LstmGates)> {
        self.check_step(state.h.data(), state.c.data(), x_t.data())?;
        let mut concat = state.h.data().to_vec();
        concat.extend_from_slice(x_t.data());
        let raw = self.step_raw(&concat, state.c.data(), hook, sink);
        let hs = self.hidden_size();
        Ok((
            LstmState { h: Tensor::from_vec(&[hs], raw.h)?, c: Tensor::from_vec(&[hs], raw.c)? },
            raw.gates,
        ))
    }

    fn step_raw<S: MacSink>(&self, concat: &[f64], c_prev: &[f64], hook: GateOverride, sink: &mut S) -> RawStep {
        let hs = self.hidden_size();
        let gate = |w: &Tensor, b: &Tensor, act: fn(f64) -> f64| {
            let mut z = b.data().to_vec();
            matvec_acc(w.data(), concat, &mut z);
            z.iter_mut().for_each(|v| *v = act(*v));
            z
        };
        let mut forget = gate(&self.w_f, &self.b_f, sigmoid);
        let mut input = gate(&self.w_i, &self.b_i, sigmoid);
        let candidate = gate(&self.w_c, &self.b_c, f64::tanh);
        let output = gate(&self.w_o, &self.b_o, sigmoid);
        sink.add((4 * hs * concat.len()) as u64);
        if let Some(v) = hook.forget {
            forget.fill(v);
        }
        if let Some(v) = hook.input {
            input.fill(v);
        }
        let c: Vec<f64> = (0..hs).map(|k| forget[k] * c_prev[k] + input[k] * candidate[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hs).map(|k| output[k] * tanh_c[k]).collect();
        sink.add((3 * hs) as u64);
        RawStep { h, c, tanh_c, gates: LstmGates { forget, input, candidate, output } }
    }

    /// Hidden outputs `[T, H]` of a full pass from `initial`.
    pub fn lstm_sequence(&self, x_seq: &Tensor, initial: &LstmState) -> Result<Tensor> {
        let trace = self.run(x_seq, initial, &mut ())?;
        trace.hidden_tensor()
    }

    /// Forward pass keeping everything needed for backprop.
    pub fn run<S: MacSink>(&self, x_seq: &Tensor, initial: &LstmState, sink: &mut S) -> Result<LstmTrace> {
        let (t_len, x_len) = seq_dims(x_seq)?;
        if x_len != self.input_size() {
            return Err(Error::shape(format!("lstm expects input width {}, got {x_len}", self.input_size())));
        }
        self.check_step(initial.h.data(), initial.c.data(), &vec![0.0; x_len])?;
        let mut h = initial.h.data().to_vec();
        let mut c = initial.c.data().to_vec();
        let mut steps = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut concat = h.clone();
            concat.extend_from_slice(x_seq.row(t));
            let raw = self.step_raw(&concat, &c, GateOverride::default(), sink);
            h = raw.h.clone();
            let c_prev = std::mem::replace(&mut c, raw.c.clone());
            steps.push(TraceStep { concat, c_prev, raw });
        }
        Ok(LstmTrace { hidden: self.hidden_size(), steps })
    }

    /// Backprop through time. `grad_h[t]` is the loss gradient with respect
    /// to `h_t` arriving from above. Returns `(d_x_seq, d_params)` with the
    /// parameter gradients ordered as [`LstmCell::params`].
    pub fn backward(&self, trace: &LstmTrace, grad_h: &[Vec<f64>]) -> Result<(Tensor, Vec<Tensor>)> {
        let hs = self.hidden_size();
        let xs = self.input_size();
        let t_len = trace.steps.len();
        if grad_h.len() != t_len {
            return Err(Error::shape("lstm backward: gradient length differs from sequence"));
        }
        let width = hs + xs;
        let mut dw = vec![vec![0.0; hs * width]; 4];
        let mut db = vec![vec![0.0; hs]; 4];
        let mut dx = vec![0.0; t_len * xs];
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        let weights = [&self.w_f, &self.w_i, &self.w_c, &self.w_o];
        for t in (0..t_len).rev() {
            let s = &trace.steps[t];
            let g = &s.raw.gates;
            let mut dz = [vec![0.0; hs], vec![0.0; hs], vec![0.0; hs], vec![0.0; hs]];
            for k in 0..hs {
                let dh = grad_h[t][k] + dh_next[k];
                let tc = s.raw.tanh_c[k];
                let d_out = dh * tc;
                let dc = dc_next[k] + dh * g.output[k] * (1.0 - tc * tc);
                let d_f = dc * s.c_prev[k];
                let d_i = dc * g.candidate[k];
                let d_g = dc * g.input[k];
                dc_next[k] = dc * g.forget[k];
                dz[0][k] = d_f * g.forget[k] * (1.0 - g.forget[k]);
                dz[1][k] = d_i * g.input[k] * (1.0 - g.input[k]);
                dz[2][k] = d_g * (1.0 - g.candidate[k] * g.candidate[k]);
                dz[3][k] = d_out * g.output[k] * (1.0 - g.output[k]);
            }
            let mut dconcat = vec![0.0; width];
            for gate in 0..4 {
                outer_acc(&dz[gate], &s.concat, &mut dw[gate]);
                db[gate].iter_mut().zip(&dz[gate]).for_each(|(a, b)| *a += b);
                matvec_t_acc(weights[gate].data(), &dz[gate], &mut dconcat);
            }
            dh_next.copy_from_slice(&dconcat[..hs]);
            dx[t * xs..(t + 1) * xs].copy_from_slice(&dconcat[hs..]);
        }
        let mut grads = Vec::with_capacity(8);
        for w in dw {
            grads.push(Tensor::from_vec(&[hs, width], w)?);
        }
        for b in db {
            grads.push(Tensor::from_vec(&[hs], b)?);
        }
        Ok((Tensor::from_vec(&[t_len, xs], dx)?, grads))
    }
}

struct RawStep {
    h: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    gates: LstmGates,
}

struct TraceStep {
    concat: Vec<f64>,
    c_prev: Vec<f64>,
    raw: RawStep,
}

/// Per-step record of an LSTM forward pass.
pub struct LstmTrace {
    hidden: usize,
    steps: Vec<TraceStep>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn hidden_at(&self, t: usize) -> &[f64] {
        &self.steps[t].raw.h
    }

    pub fn gates_at(&self, t: usize) -> &LstmGates {
        &self.steps[t].raw.gates
    }

    pub fn hidden_tensor(&self) -> Result<Tensor> {
        let data = self.steps.iter().flat_map(|s| s.raw.h.iter().copied()).collect();
        Tensor::from_vec(&[self.steps.len(), self.hidden], data)
    }
}

fn seq_dims(x_seq: &Tensor) -> Result<(usize, usize)> {
    match x_seq.shape() {
        [t, x] => Ok((*t, *x)),
        s => Err(Error::shape(format!("sequence must be [T, X], got {s:?}"))),
    }
}

/// `h_t = act(W_h·h_{t-1} + U_x·x_t + b_h)`, `y_t = V·h_t + b_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnCell {
    /// `[H, H]`
    pub w_h: Tensor,
    /// `[H, X]`
    pub u_x: Tensor,
    /// `[H]`
    pub b_h: Tensor,
    /// `[Y, H]`
    pub v: Tensor,
    /// `[Y]`
    pub b_y: Tensor,
    pub activation: Activation,
}

/// Hidden states `h_0..h_T` of an RNN pass (`h_0` is the initial state).
pub struct RnnTrace {
    pub hidden: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
}

impl RnnCell {
    pub fn new(w_h: Tensor, u_x: Tensor, b_h: Tensor, v: Tensor, b_y: Tensor, activation: Activation) -> Result<Self> {
        let cell = Self { w_h, u_x, b_h, v, b_y, activation };
        let h = cell.hidden_size();
        let ok = cell.w_h.shape() == [h, h]
            && cell.u_x.rank() == 2
            && cell.u_x.shape()[0] == h
            && cell.b_h.shape() == [h]
            && cell.v.rank() == 2
            && cell.v.shape()[1] == h
            && cell.b_y.shape() == [cell.v.shape()[0]];
        if !ok || activation == Activation::Sigmoid {
            return Err(Error::shape("inconsistent RNN cell shapes or activation"));
        }
        Ok(cell)
    }

    pub fn init(hidden: usize, input: usize, outputs: usize, activation: Activation, rng: &mut RngStream) -> Result<Self> {
        Self::new(
            Tensor::glorot(&[hidden, hidden], hidden, hidden, rng)?,
            Tensor::glorot(&[hidden, input], input, hidden, rng)?,
            Tensor::zeros(&[hidden])?,
            Tensor::glorot(&[outputs, hidden], hidden, outputs, rng)?,
            Tensor::zeros(&[outputs])?,
            activation,
        )
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.shape()[0]
    }

    pub fn input_size(&self) -> usize {
        self.u_x.shape()[1]
    }

    pub fn output_size(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn params(&self) -> [&Tensor; 5] {
        [&self.w_h, &self.u_x, &self.b_h, &self.v, &self.b_y]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 5] {
        [&mut self.w_h, &mut self.u_x, &mut self.b_h, &mut self.v, &mut self.b_y]
    }

    fn step_raw<S: MacSink>(&self, h_prev: &[f64], x: &[f64], sink: &mut S) -> Vec<f64> {
        let mut z = self.b_h.data().to_vec();
        matvec_acc(self.w_h.data(), h_prev, &mut z);
        matvec_acc(self.u_x.data(), x, &mut z);
        sink.add((self.hidden_size() * (self.hidden_size() + self.input_size())) as u64);
        z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        z
    }

    pub fn rnn_step(&self, h_prev: &Tensor, x_t: &Tensor) -> Result<Tensor> {
        self.rnn_step_counted(h_prev, x_t, &mut ())
    }

    pub fn rnn_step_counted<S: MacSink>(&self, h_prev: &Tensor, x_t: &Tensor, sink: &mut S) -> Result<Tensor> {
        if h_prev.len() != self.hidden_size() || x_t.len() != self.input_size() {
            return Err(Error::shape(format!(
                "rnn step: h {} / x {} vs H={}, X={}",
                h_prev.len(),
                x_t.len(),
                self.hidden_size(),
                self.input_size()
            )));
        }
        Tensor::from_vec(&[self.hidden_size()], self.step_raw(h_prev.data(), x_t.data(), sink))
    }

    /// Output head; no activation.
    pub fn rnn_output(&self, h_t: &Tensor) -> Result<Tensor> {
        self.output_counted(h_t, &mut ())
    }

    pub fn output_counted<S: MacSink>(&self, h_t: &Tensor, sink: &mut S) -> Result<Tensor> {
        if h_t.len() != self.hidden_size() {
            return Err(Error::shape(format!("rnn output: h {} vs H={}", h_t.len(), self.hidden_size())));
        }
        let mut y = self.b_y.data().to_vec();
        matvec_acc(self.v.data(), h_t.data(), &mut y);
        sink.add((self.output_size() * self.hidden_size()) as u64);
        Tensor::from_vec(&[self.output_size()], y)
    }

    /// Hidden-state recurrence over `[T, X]` from a zero state.
    pub fn run<S: MacSink>(&self, x_seq: &Tensor, sink: &mut S) -> Result<RnnTrace> {
        let (t_len, x_len) = seq_dims(x_seq)?;
        if x_len != self.input_size() {
            return Err(Error::shape(format!("rnn expects input width {}, got {x_len}", self.input_size())));
        }
        let mut hidden = vec![vec![0.0; self.hidden_size()]];
        let mut inputs = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let x = x_seq.row(t).to_vec();
            let h = self.step_raw(&hidden[t], &x, sink);
            hidden.push(h);
            inputs.push(x);
        }
        Ok(RnnTrace { hidden, inputs })
    }

    /// Sequence classifier: the output head applied to the final hidden state.
    pub fn classify_sequence(&self, x_seq: &Tensor) -> Result<Tensor> {
        let trace = self.run(x_seq, &mut ())?;
        let last = trace.hidden.last().expect("initial state present");
        self.rnn_output(&Tensor::vector(last))
    }

    /// Gradients for [`RnnCell::classify_sequence`] given `dL/dy_T`.
    /// Parameter gradients follow [`RnnCell::params`].
    pub fn backward(&self, trace: &RnnTrace, grad_y: &[f64]) -> Result<(Tensor, Vec<Tensor>)> {
        let hs = self.hidden_size();
        let xs = self.input_size();
        let t_len = trace.inputs.len();
        let last = &trace.hidden[t_len];
        let mut dv = vec![0.0; self.v.len()];
        outer_acc(grad_y, last, &mut dv);
        let mut dh = vec![0.0; hs];
        matvec_t_acc(self.v.data(), grad_y, &mut dh);
        let mut dwh = vec![0.0; hs * hs];
        let mut dux = vec![0.0; hs * xs];
        let mut dbh = vec![0.0; hs];
        let mut dx = vec![0.0; t_len * xs];
        for t in (0..t_len).rev() {
            let h = &trace.hidden[t + 1];
            let dpre: Vec<f64> = dh
                .iter()
                .zip(h)
                .map(|(g, &y)| g * self.activation.derivative_from_output(y))
                .collect();
            outer_acc(&dpre, &trace.hidden[t], &mut dwh);
            outer_acc(&dpre, &trace.inputs[t], &mut dux);
            dbh.iter_mut().zip(&dpre).for_each(|(a, b)| *a += b);
            let mut dh_prev = vec![0.0; hs];
            matvec_t_acc(self.w_h.data(), &dpre, &mut dh_prev);
            matvec_t_acc(self.u_x.data(), &dpre, &mut dx[t * xs..(t + 1) * xs]);
            dh = dh_prev;
        }
        Ok((
            Tensor::from_vec(&[t_len, xs], dx)?,
            vec![
                Tensor::from_vec(&[hs, hs], dwh)?,
                Tensor::from_vec(&[hs, xs], dux)?,
                Tensor::from_vec(&[hs], dbh)?,
                Tensor::from_vec(self.v.shape(), dv)?,
                Tensor::from_vec(&[self.output_size()], grad_y.to_vec())?,
            ],
        ))
    }
}

/// Forward and time-reversed LSTMs whose outputs are concatenated per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward_cell: LstmCell,
    pub backward_cell: LstmCell,
}

pub struct BiLstmTrace {
    pub forward: LstmTrace,
    pub backward: LstmTrace,
}

fn reverse_rows(x: &Tensor) -> Result<Tensor> {
    let (t_len, w) = seq_dims(x)?;
    let mut data = Vec::with_capacity(x.len());
    for t in (0..t_len).rev() {
        data.extend_from_slice(&x.data()[t * w..(t + 1) * w]);
    }
    Tensor::from_vec(x.shape(), data)
}

impl BiLstm {
    pub fn new(forward_cell: LstmCell, backward_cell: LstmCell) -> Result<Self> {
        if forward_cell.input_size() != backward_cell.input_size() {
            return Err(Error::shape("bidirectional cells must share input width"));
        }
        Ok(Self { forward_cell, backward_cell })
    }

    pub fn output_width(&self) -> usize {
        self.forward_cell.hidden_size() + self.backward_cell.hidden_size()
    }

    pub fn bilstm_sequence(&self, x_seq: &Tensor) -> Result<Tensor> {
        let trace = self.run(x_seq, &mut ())?;
        self.output(&trace)
    }

    pub fn run<S: MacSink>(&self, x_seq: &Tensor, sink: &mut S) -> Result<BiLstmTrace> {
        let fwd = self.forward_cell.run(x_seq, &LstmState::zeros(self.forward_cell.hidden_size())?, sink)?;
        let bwd = self.backward_cell.run(
            &reverse_rows(x_seq)?,
            &LstmState::zeros(self.backward_cell.hidden_size())?,
            sink,
        )?;
        Ok(BiLstmTrace { forward: fwd, backward: bwd })
    }

    /// `[T, H_f + H_b]` with row `t` = `[h_fwd(t), h_bwd(t)]`.
    pub fn output(&self, trace: &BiLstmTrace) -> Result<Tensor> {
        let t_len = trace.forward.len();
        let mut data = Vec::with_capacity(t_len * self.output_width());
        for t in 0..t_len {
            data.extend_from_slice(trace.forward.hidden_at(t));
            data.extend_from_slice(trace.backward.hidden_at(t_len - 1 - t));
        }
        Tensor::from_vec(&[t_len, self.output_width()], data)
    }

    /// `grad_out[t]` has width `H_f + H_b`. Returns `(d_x, forward grads ++ backward grads)`.
    pub fn backward(&self, trace: &BiLstmTrace, grad_out: &[Vec<f64>]) -> Result<(Tensor, Vec<Tensor>)> {
        let hf = self.forward_cell.hidden_size();
        let t_len = grad_out.len();
        let gf: Vec<Vec<f64>> = grad_out.iter().map(|g| g[..hf].to_vec()).collect();
        let gb: Vec<Vec<f64>> = (0..t_len).rev().map(|t| grad_out[t][hf..].to_vec()).collect();
        let (dx_f, mut grads) = self.forward_cell.backward(&trace.forward, &gf)?;
        let (dx_b, grads_b) = self.backward_cell.backward(&trace.backward, &gb)?;
        grads.extend(grads_b);
        let dx = dx_f.add(&reverse_rows(&dx_b)?)?;
        Ok((dx, grads))
    }
}
