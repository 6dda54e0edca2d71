//! Backpropagation through time for all three model kinds, and a central
//! finite-difference oracle.

use serde::{Deserialize, Serialize};

use crate::dynamics::{log_likelihood, ModelKind, ModelParams, ParamSet, Runner, Tape};
use crate::error::Result;
use crate::seqdata::SymbolSequence;

#[derive(Debug, Clone)]
pub struct BackwardPass {
    pub steps: usize,
    pub n1: usize,
    /// `b[t * n1 + i] = d log Pr / d V_i^t` for `t <= steps`; row `steps` is 0.
    pub b: Vec<f64>,
    /// Derivatives laid out like the parameters. `grad.v0` is `B^0`
    /// for GLNNs and zero otherwise.
    pub grad: ParamSet,
}

impl BackwardPass {
    #[inline]
    pub fn b_at(&self, t: usize) -> &[f64] {
        &self.b[t * self.n1..(t + 1) * self.n1]
    }
}

/// `sum_y pi(y) w_iy` for every unit.
fn mean_writing(params: &ModelParams, pi: &[f64], out: &mut [f64]) {
    let na = params.alphabet_size();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &params.w[i * na..(i + 1) * na];
        *o = row.iter().zip(pi).map(|(w, p)| w * p).sum();
    }
}

#[inline]
fn accumulate_writing(tape: &Tape, seq: &SymbolSequence, t: usize, w_grad: &mut [f64]) {
    if !seq.mask()[t] {
        return;
    }
    let na = tape.alphabet_size;
    let x = seq.tokens()[t];
    let pi = tape.pi_at(t);
    for (i, &ai) in tape.a_at(t).iter().enumerate() {
        let row = &mut w_grad[i * na..(i + 1) * na];
        for y in 0..na {
            let ind = if y == x { 1.0 } else { 0.0 };
            row[y] += ai * (ind - pi[y]);
        }
    }
}

#[inline]
fn accumulate_transition(
    params: &ModelParams,
    tape: &Tape,
    seq: &SymbolSequence,
    t: usize,
    b_next: &[f64],
    grad: &mut ParamSet,
) {
    let x = seq.tokens()[t];
    let a = tape.a_at(t);
    let topo = params.topology();
    for j in 1..=topo.n_units() {
        let bj = b_next[j];
        if bj == 0.0 {
            continue;
        }
        let base = params.tau_block(j, x);
        for (k, &i) in topo.incoming(j).iter().enumerate() {
            grad.tau[base + k] += a[i] * bj;
        }
        if params.kind() == ModelKind::Rnn {
            grad.rho[params.rho_index(j, x)] += bj;
        }
    }
}

/// Single backward sweep computing `B`, `W`, `G` (and `rho`, `V^0` grads).
pub fn backward(params: &ModelParams, tape: &Tape, seq: &SymbolSequence) -> BackwardPass {
    let steps = tape.steps;
    let n1 = tape.n1;
    let act = params.activation();
    let topo = params.topology();
    let leaky = params.kind().is_leaky();
    let na = params.alphabet_size();
    let mut b = vec![0.0; (steps + 1) * n1];
    let mut grad = params.zeros_like();
    let mut mean_w = vec![0.0; n1];
    let mut back = vec![0.0; n1];

    for t in (0..steps).rev() {
        let x = seq.tokens()[t];
        let chi = seq.chi(t);
        let (head, tail) = b.split_at_mut((t + 1) * n1);
        let b_next = &tail[..n1];
        let b_now = &mut head[t * n1..];

        accumulate_writing(tape, seq, t, &mut grad.w);
        accumulate_transition(params, tape, seq, t, b_next, &mut grad);

        back.iter_mut().for_each(|v| *v = 0.0);
        for j in 1..=topo.n_units() {
            let bj = b_next[j];
            if bj == 0.0 {
                continue;
            }
            let base = params.tau_block(j, x);
            for (k, &i) in topo.incoming(j).iter().enumerate().skip(1) {
                back[i] += params.tau[base + k] * bj;
            }
        }
        if chi != 0.0 {
            mean_writing(params, tape.pi_at(t), &mut mean_w);
        }
        let v = tape.v_at(t);
        for i in 1..n1 {
            let src = if chi != 0.0 {
                chi * (params.w[i * na + x] - mean_w[i])
            } else {
                0.0
            };
            let carry = if leaky { b_next[i] } else { 0.0 };
            b_now[i] = carry + act.deriv(v[i]) * (src + back[i]);
        }
    }
    if leaky {
        grad.v0[1..].copy_from_slice(&b[1..n1]);
    }
    BackwardPass { steps, n1, b, grad }
}

/// `W_iy = sum_t chi_t a_i^t (1[x_t = y] - pi_t(y))`, accumulated from the
/// last step down.
pub fn writing_grad(tape: &Tape, seq: &SymbolSequence) -> Vec<f64> {
    let mut w = vec![0.0; tape.n1 * tape.alphabet_size];
    for t in (0..tape.steps).rev() {
        accumulate_writing(tape, seq, t, &mut w);
    }
    w
}

/// `G_{ijy} = sum_t 1[x_t = y] a_i^t B_j^{t+1}` (RNN: summed over `y`, plus
/// the `rho` derivatives). Returns a set with only `tau` and `rho` filled.
pub fn transition_grad(
    params: &ModelParams,
    tape: &Tape,
    bp: &BackwardPass,
    seq: &SymbolSequence,
) -> ParamSet {
    let mut g = params.zeros_like();
    for t in (0..tape.steps).rev() {
        accumulate_transition(params, tape, seq, t, bp.b_at(t + 1), &mut g);
    }
    g
}

/// A single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamCoord {
    W { i: usize, y: usize },
    /// `y` is ignored for RNNs.
    Tau { i: usize, j: usize, y: usize },
    Rho { j: usize, y: usize },
    V0 { j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    W,
    Tau,
    Rho,
    V0,
}

impl ParamCoord {
    pub fn family(self) -> Family {
        match self {
            ParamCoord::W { .. } => Family::W,
            ParamCoord::Tau { .. } => Family::Tau,
            ParamCoord::Rho { .. } => Family::Rho,
            ParamCoord::V0 { .. } => Family::V0,
        }
    }

    fn index(self, p: &ModelParams) -> usize {
        match self {
            ParamCoord::W { i, y } => p.w_index(i, y),
            ParamCoord::Tau { i, j, y } => p
                .tau_index(i, j, y)
                .unwrap_or_else(|| panic!("no edge {i} -> {j}")),
            ParamCoord::Rho { j, y } => p.rho_index(j, y),
            ParamCoord::V0 { j } => j,
        }
    }

    pub fn get(self, p: &ModelParams) -> f64 {
        let k = self.index(p);
        match self.family() {
            Family::W => p.w[k],
            Family::Tau => p.tau[k],
            Family::Rho => p.rho[k],
            Family::V0 => p.v0[k],
        }
    }

    pub fn set(self, p: &mut ModelParams, value: f64) {
        let k = self.index(p);
        match self.family() {
            Family::W => p.w[k] = value,
            Family::Tau => p.tau[k] = value,
            Family::Rho => p.rho[k] = value,
            Family::V0 => p.v0[k] = value,
        }
    }

    /// Component of a gradient/direction set.
    pub fn read(self, p: &ModelParams, set: &ParamSet) -> f64 {
        let k = self.index(p);
        match self.family() {
            Family::W => set.w[k],
            Family::Tau => set.tau[k],
            Family::Rho => set.rho[k],
            Family::V0 => set.v0[k],
        }
    }
}

/// Every trainable coordinate of `p`.
pub fn all_coords(p: &ModelParams) -> Vec<ParamCoord> {
    let n = p.n_units();
    let na = p.alphabet_size();
    let mut out = Vec::with_capacity(p.parameter_count());
    for i in 0..=n {
        for y in 0..na {
            out.push(ParamCoord::W { i, y });
        }
    }
    let ys = if p.kind().is_gated() { na } else { 1 };
    for j in 1..=n {
        for y in 0..ys {
            for &i in p.topology().incoming(j) {
                out.push(ParamCoord::Tau { i, j, y });
            }
        }
    }
    if p.kind() == ModelKind::Rnn {
        for j in 1..=n {
            for y in 0..na {
                out.push(ParamCoord::Rho { j, y });
            }
        }
    }
    if p.kind().is_leaky() {
        for j in 1..=n {
            out.push(ParamCoord::V0 { j });
        }
    }
    out
}

/// Analytic derivative of `coord` read from a backward pass.
pub fn analytic(p: &ModelParams, bp: &BackwardPass, coord: ParamCoord) -> f64 {
    coord.read(p, &bp.grad)
}

/// `(f(x + h) - f(x - h)) / 2h`.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central difference of the masked log-likelihood (nats) along `coord`.
pub fn finite_diff_oracle(
    params: &ModelParams,
    seq: &SymbolSequence,
    coord: ParamCoord,
    h: f64,
) -> Result<f64> {
    let x0 = coord.get(params);
    let mut p = params.clone();
    coord.set(&mut p, x0 + h);
    let up = log_likelihood(&p, seq)?;
    coord.set(&mut p, x0 - h);
    let down = log_likelihood(&p, seq)?;
    Ok((up - down) / (2.0 * h))
}

/// Masked log-likelihood with `delta` added to `V_i^t` before step `t` is
/// emitted. Lets tests probe `B_i^t` directly.
pub fn log_likelihood_perturbed(
    params: &ModelParams,
    seq: &SymbolSequence,
    t_star: usize,
    i: usize,
    delta: f64,
) -> f64 {
    let n1 = params.n_units() + 1;
    let act = params.activation();
    let mut v: Vec<f64> = Runner::new(params).v().to_vec();
    let mut ll = 0.0;
    let tokens = seq.tokens();
    let mut pi = vec![0.0; params.alphabet_size()];
    let mut a = vec![1.0; n1];
    let mut next = vec![0.0; n1];
    for t in 0..tokens.len() {
        if t == t_star {
            v[i] += delta;
        }
        for j in 1..n1 {
            a[j] = act.value(v[j]);
        }
        if seq.mask()[t] {
            let (m, lz) = crate::dynamics::softmax_output(&a, &params.w, params.alphabet_size(), &mut pi);
            let x = tokens[t];
            let mut e = 0.0;
            for (k, &ak) in a.iter().enumerate() {
                e += ak * params.w[params.w_index(k, x)];
            }
            ll += e - m - lz;
        }
        match params.kind() {
            ModelKind::Glnn => crate::dynamics::step_glnn(params, &v, &a, tokens[t], &mut next),
            ModelKind::Gnn => crate::dynamics::step_gnn(params, &a, tokens[t], &mut next),
            ModelKind::Rnn => crate::dynamics::step_rnn(params, &a, tokens[t], &mut next),
        }
        std::mem::swap(&mut v, &mut next);
    }
    ll
}
