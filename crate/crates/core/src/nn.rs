//! Recurrent building blocks shared by the generator and the neural style
//! classifier. Forward passes here are plain functions over a
//! [`ParamStore`]; the differentiable versions live in [`crate::graph`] and
//! reuse [`GruCell::step`] and [`GruCell::backward`].

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::tensor::{Grads, ParamId, ParamStore, Tensor};

/// Recurrent cell family. Only the gated recurrent unit is implemented; the
/// enum exists so checkpoints record which cell produced them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    #[default]
    Gru,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn log_softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| x - lse).collect()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

/// Intermediate activations of one GRU step, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GruStep {
    pub h: Vec<f64>,
    pub update: Vec<f64>,
    pub reset: Vec<f64>,
    pub candidate: Vec<f64>,
    /// `U_n h + b_hn`, the recurrent part of the candidate pre-activation.
    pub recurrent_candidate: Vec<f64>,
}

/// One gated recurrent layer:
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// n  = tanh(W_n x + b_n + r * (U_n h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    w_z: ParamId,
    w_r: ParamId,
    w_n: ParamId,
    u_z: ParamId,
    u_r: ParamId,
    u_n: ParamId,
    b_z: ParamId,
    b_r: ParamId,
    b_n: ParamId,
    b_hn: ParamId,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        let mut mat = |name: &str, cols: usize, store: &mut ParamStore| {
            store.add(format!("{prefix}.{name}"), Tensor::uniform(hidden, cols, scale, rng))
        };
        let w_z = mat("w_z", input, store);
        let w_r = mat("w_r", input, store);
        let w_n = mat("w_n", input, store);
        let u_z = mat("u_z", hidden, store);
        let u_r = mat("u_r", hidden, store);
        let u_n = mat("u_n", hidden, store);
        let b_z = mat("b_z", 1, store);
        let b_r = mat("b_r", 1, store);
        let b_n = mat("b_n", 1, store);
        let b_hn = mat("b_hn", 1, store);
        GruCell {
            input,
            hidden,
            w_z,
            w_r,
            w_n,
            u_z,
            u_r,
            u_n,
            b_z,
            b_r,
            b_n,
            b_hn,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 10] {
        [
            self.w_z, self.w_r, self.w_n, self.u_z, self.u_r, self.u_n, self.b_z, self.b_r, self.b_n, self.b_hn,
        ]
    }

    pub fn step(&self, store: &ParamStore, x: &[f64], h: &[f64]) -> GruStep {
        let gate = |w: ParamId, u: ParamId, b: ParamId| -> Vec<f64> {
            let mut a = store.get(w).matvec(x);
            let uh = store.get(u).matvec(h);
            for ((ai, ui), bi) in a.iter_mut().zip(&uh).zip(&store.get(b).data) {
                *ai = sigmoid(*ai + ui + bi);
            }
            a
        };
        let update = gate(self.w_z, self.u_z, self.b_z);
        let reset = gate(self.w_r, self.u_r, self.b_r);

        let mut recurrent_candidate = store.get(self.u_n).matvec(h);
        for (q, b) in recurrent_candidate.iter_mut().zip(&store.get(self.b_hn).data) {
            *q += b;
        }
        let mut candidate = store.get(self.w_n).matvec(x);
        let b_n = &store.get(self.b_n).data;
        for i in 0..self.hidden {
            candidate[i] = (candidate[i] + b_n[i] + reset[i] * recurrent_candidate[i]).tanh();
        }
        let h_new = (0..self.hidden)
            .map(|i| (1.0 - update[i]) * candidate[i] + update[i] * h[i])
            .collect();
        GruStep {
            h: h_new,
            update,
            reset,
            candidate,
            recurrent_candidate,
        }
    }

    /// Accumulates parameter gradients for one step and returns
    /// `(d_input, d_prev_hidden)`.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: &[f64],
        h: &[f64],
        step: &GruStep,
        d_out: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hid = self.hidden;
        let mut d_h = vec![0.0; hid];
        let mut da_z = vec![0.0; hid];
        let mut da_r = vec![0.0; hid];
        let mut da_n = vec![0.0; hid];
        let mut d_q = vec![0.0; hid];
        for i in 0..hid {
            let (z, r, n, q) = (
                step.update[i],
                step.reset[i],
                step.candidate[i],
                step.recurrent_candidate[i],
            );
            let g = d_out[i];
            d_h[i] = g * z;
            let dn = g * (1.0 - z);
            let dz = g * (h[i] - n);
            da_n[i] = dn * (1.0 - n * n);
            let dr = da_n[i] * q;
            d_q[i] = da_n[i] * r;
            da_z[i] = dz * z * (1.0 - z);
            da_r[i] = dr * r * (1.0 - r);
        }

        grads.get_mut(self.w_z).outer_acc(&da_z, x);
        grads.get_mut(self.w_r).outer_acc(&da_r, x);
        grads.get_mut(self.w_n).outer_acc(&da_n, x);
        grads.get_mut(self.u_z).outer_acc(&da_z, h);
        grads.get_mut(self.u_r).outer_acc(&da_r, h);
        grads.get_mut(self.u_n).outer_acc(&d_q, h);
        for (id, g) in [
            (self.b_z, &da_z),
            (self.b_r, &da_r),
            (self.b_n, &da_n),
            (self.b_hn, &d_q),
        ] {
            for (acc, v) in grads.get_mut(id).data.iter_mut().zip(g) {
                *acc += v;
            }
        }

        let mut d_x = vec![0.0; self.input];
        store.get(self.w_z).matvec_t_acc(&da_z, &mut d_x);
        store.get(self.w_r).matvec_t_acc(&da_r, &mut d_x);
        store.get(self.w_n).matvec_t_acc(&da_n, &mut d_x);
        store.get(self.u_z).matvec_t_acc(&da_z, &mut d_h);
        store.get(self.u_r).matvec_t_acc(&da_r, &mut d_h);
        store.get(self.u_n).matvec_t_acc(&d_q, &mut d_h);
        (d_x, d_h)
    }
}

/// Stacked recurrent layers of equal width. Layer 0 reads the input
/// embedding, layer `k` reads the output of layer `k - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackedGru {
    pub layers: Vec<GruCell>,
}

impl StackedGru {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, depth: usize, rng: &mut Rng) -> Self {
        let layers = (0..depth)
            .map(|k| {
                let inp = if k == 0 { input } else { hidden };
                GruCell::new(store, &format!("{prefix}.layer{k}"), inp, hidden, rng)
            })
            .collect();
        StackedGru { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Advances every layer by one step, in place.
    pub fn step(&self, store: &ParamStore, input: &[f64], states: &mut [Vec<f64>]) {
        let mut x = input.to_vec();
        for (cell, state) in self.layers.iter().zip(states.iter_mut()) {
            let out = cell.step(store, &x, state);
            *state = out.h;
            x = state.clone();
        }
    }
}

/// Vocabulary projection `W h + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl OutputLayer {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let scale = 1.0 / (input as f64).sqrt();
        let w = store.add(format!("{prefix}.w"), Tensor::uniform(output, input, scale, rng));
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(output, 1));
        OutputLayer { w, b }
    }

    pub fn logits(&self, store: &ParamStore, h: &[f64]) -> Vec<f64> {
        let mut out = store.get(self.w).matvec(h);
        for (o, b) in out.iter_mut().zip(&store.get(self.b).data) {
            *o += b;
        }
        out
    }
}
