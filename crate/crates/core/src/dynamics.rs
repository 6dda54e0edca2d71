//! Forward evolution of RNN, GNN and GLNN states and the softmax output.
//!
//! State vectors have length `N + 1`; slot 0 is the bias unit with
//! activity fixed to 1 (its pre-activation slot is unused and kept at 0).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GlnnError, Result};
use crate::seqdata::SymbolSequence;
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Logistic,
}

impl Activation {
    #[inline]
    pub fn value(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-v).exp()),
        }
    }

    #[inline]
    pub fn deriv(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
            Activation::Logistic => {
                let s = 1.0 / (1.0 + (-v).exp());
                s * (1.0 - s)
            }
        }
    }

    pub fn inverse(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.atanh(),
            Activation::Logistic => (a / (1.0 - a)).ln(),
        }
    }

    pub fn sup_deriv(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
            Activation::Logistic => 0.25,
        }
    }

    /// Open range of `s`.
    pub fn range(self) -> (f64, f64) {
        match self {
            Activation::Tanh => (-1.0, 1.0),
            Activation::Logistic => (0.0, 1.0),
        }
    }
}

impl FromStr for Activation {
    type Err = GlnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "logistic" => Ok(Activation::Logistic),
            _ => Err(GlnnError::InvalidArgument(format!("unknown activation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rnn,
    Gnn,
    Glnn,
}

impl ModelKind {
    /// Transition weights depend on the last symbol.
    pub fn is_gated(self) -> bool {
        !matches!(self, ModelKind::Rnn)
    }

    /// Pre-activations accumulate (`V^{t+1} = V^t + ...`).
    pub fn is_leaky(self) -> bool {
        matches!(self, ModelKind::Glnn)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Gnn => "gnn",
            ModelKind::Glnn => "glnn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = GlnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(ModelKind::Rnn),
            "gnn" => Ok(ModelKind::Gnn),
            "glnn" => Ok(ModelKind::Glnn),
            _ => Err(GlnnError::InvalidArgument(format!("unknown model {s:?}"))),
        }
    }
}

/// A flat vector for every trainable family, laid out like [`ModelParams`].
/// Used for gradients and update directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub w: Vec<f64>,
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
    pub v0: Vec<f64>,
}

impl ParamSet {
    pub fn is_finite(&self) -> bool {
        [&self.w, &self.tau, &self.rho, &self.v0]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        [&self.w, &self.tau, &self.rho, &self.v0]
            .iter()
            .all(|v| v.iter().all(|&x| x == 0.0))
    }
}

/// Model parameters.
///
/// - `w[i * A + y]`: writing weight of unit `i` (0 included) for symbol `y`.
/// - `tau`: per target unit `j`, a block starting at `tau_offset(j)`. Gated
///   models index it `y * s_j + k`, RNNs just `k`, where `k` is the slot of
///   the source in `topology.incoming(j)` and `s_j` its length.
/// - `rho[(j - 1) * A + y]`: RNN input weights (empty otherwise).
/// - `v0[j]`: GLNN startup pre-activations; slot 0 unused. Kept at zero and
///   ignored for RNN/GNN, which start from `a = s(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRecord", into = "ParamsRecord")]
pub struct ModelParams {
    kind: ModelKind,
    activation: Activation,
    topology: NetworkTopology,
    alphabet_size: usize,
    tau_offsets: Vec<usize>,
    pub w: Vec<f64>,
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
    pub v0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsRecord {
    pub kind: ModelKind,
    pub activation: Activation,
    pub alphabet_size: usize,
    pub topology: NetworkTopology,
    pub w: Vec<f64>,
    pub tau: Vec<f64>,
    pub rho: Vec<f64>,
    pub v0: Vec<f64>,
}

impl TryFrom<ParamsRecord> for ModelParams {
    type Error = GlnnError;

    fn try_from(r: ParamsRecord) -> Result<Self> {
        let mut p = ModelParams::zeros(r.kind, r.activation, r.topology, r.alphabet_size)?;
        let check = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(GlnnError::ShapeMismatch(format!("{name}: {got} entries, expected {want}")))
            }
        };
        check("w", r.w.len(), p.w.len())?;
        check("tau", r.tau.len(), p.tau.len())?;
        check("rho", r.rho.len(), p.rho.len())?;
        check("v0", r.v0.len(), p.v0.len())?;
        p.w = r.w;
        p.tau = r.tau;
        p.rho = r.rho;
        p.v0 = r.v0;
        if !p.is_finite() {
            return Err(GlnnError::InvalidArgument("non-finite parameter".into()));
        }
        Ok(p)
    }
}

impl From<ModelParams> for ParamsRecord {
    fn from(p: ModelParams) -> Self {
        ParamsRecord {
            kind: p.kind,
            activation: p.activation,
            alphabet_size: p.alphabet_size,
            topology: p.topology,
            w: p.w,
            tau: p.tau,
            rho: p.rho,
            v0: p.v0,
        }
    }
}

impl ModelParams {
    pub fn zeros(
        kind: ModelKind,
        activation: Activation,
        topology: NetworkTopology,
        alphabet_size: usize,
    ) -> Result<Self> {
        if alphabet_size == 0 {
            return Err(GlnnError::InvalidArgument("empty alphabet".into()));
        }
        let n = topology.n_units();
        let mut tau_offsets = Vec::with_capacity(n);
        let mut off = 0;
        for j in 1..=n {
            tau_offsets.push(off);
            let s = topology.incoming(j).len();
            off += if kind.is_gated() { s * alphabet_size } else { s };
        }
        let rho_len = if kind.is_gated() { 0 } else { n * alphabet_size };
        Ok(Self {
            kind,
            activation,
            alphabet_size,
            tau_offsets,
            w: vec![0.0; (n + 1) * alphabet_size],
            tau: vec![0.0; off],
            rho: vec![0.0; rho_len],
            v0: vec![0.0; n + 1],
            topology,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn n_units(&self) -> usize {
        self.topology.n_units()
    }

    #[inline]
    pub fn w_index(&self, i: usize, y: usize) -> usize {
        i * self.alphabet_size + y
    }

    #[inline]
    pub fn tau_offset(&self, j: usize) -> usize {
        self.tau_offsets[j - 1]
    }

    /// Start of the slice of `tau` used for target `j` when the last symbol
    /// is `y` (ignored for RNNs).
    #[inline]
    pub fn tau_block(&self, j: usize, y: usize) -> usize {
        if self.kind.is_gated() {
            self.tau_offsets[j - 1] + y * self.topology.incoming(j).len()
        } else {
            self.tau_offsets[j - 1]
        }
    }

    /// Index of `tau_{i j y}` for source unit `i` (0 = bias), if the edge exists.
    pub fn tau_index(&self, i: usize, j: usize, y: usize) -> Option<usize> {
        let k = self.topology.incoming(j).iter().position(|&s| s == i)?;
        Some(self.tau_block(j, y) + k)
    }

    #[inline]
    pub fn rho_index(&self, j: usize, y: usize) -> usize {
        (j - 1) * self.alphabet_size + y
    }

    pub fn parameter_count(&self) -> usize {
        let v0 = if self.kind.is_leaky() { self.n_units() } else { 0 };
        self.w.len() + self.tau.len() + self.rho.len() + v0
    }

    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            w: vec![0.0; self.w.len()],
            tau: vec![0.0; self.tau.len()],
            rho: vec![0.0; self.rho.len()],
            v0: vec![0.0; self.v0.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.w, &self.tau, &self.rho, &self.v0]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// `self + eta_w * d.w` on the writing weights only.
    pub fn with_w_step(&self, eta_w: f64, d: &ParamSet) -> Self {
        let mut p = self.clone();
        for (x, dx) in p.w.iter_mut().zip(&d.w) {
            *x += eta_w * dx;
        }
        p
    }

    /// `self + eta * d` on `tau`, `rho` and (GLNN) `v0`.
    pub fn with_transition_step(&self, eta: f64, d: &ParamSet) -> Self {
        let mut p = self.clone();
        for (x, dx) in p.tau.iter_mut().zip(&d.tau) {
            *x += eta * dx;
        }
        for (x, dx) in p.rho.iter_mut().zip(&d.rho) {
            *x += eta * dx;
        }
        if self.kind.is_leaky() {
            for (x, dx) in p.v0.iter_mut().zip(&d.v0).skip(1) {
                *x += eta * dx;
            }
        }
        p
    }

    /// The same model expressed with the other activation function, via
    /// `V_logistic = 2 V_tanh` and `a_tanh = 2 a_logistic - 1`.
    pub fn with_activation(&self, target: Activation) -> Self {
        if target == self.activation {
            return self.clone();
        }
        let to_logistic = target == Activation::Logistic;
        let na = self.alphabet_size;
        let n = self.n_units();
        let mut p = self.clone();
        p.activation = target;
        // writing weights: w'_i = 2 w_i, w'_0 = w_0 - sum_i w_i (and back)
        for y in 0..na {
            let mut sum = 0.0;
            for i in 1..=n {
                let k = i * na + y;
                p.w[k] = if to_logistic { 2.0 * self.w[k] } else { 0.5 * self.w[k] };
                sum += if to_logistic { self.w[k] } else { p.w[k] };
            }
            p.w[y] = if to_logistic { self.w[y] - sum } else { self.w[y] + sum };
        }
        let ys = if self.kind.is_gated() { na } else { 1 };
        for j in 1..=n {
            let inc = self.topology.incoming(j);
            for y in 0..ys {
                let base = self.tau_block(j, y);
                let mut sum = 0.0;
                for k in 1..inc.len() {
                    p.tau[base + k] = if to_logistic {
                        4.0 * self.tau[base + k]
                    } else {
                        0.25 * self.tau[base + k]
                    };
                    sum += if to_logistic { self.tau[base + k] } else { p.tau[base + k] };
                }
                p.tau[base] = if to_logistic {
                    2.0 * (self.tau[base] - sum)
                } else {
                    0.5 * self.tau[base] + sum
                };
            }
        }
        let f = if to_logistic { 2.0 } else { 0.5 };
        p.rho.iter_mut().for_each(|x| *x *= f);
        p.v0.iter_mut().for_each(|x| *x *= f);
        p
    }

    fn check_sequence(&self, seq: &SymbolSequence) -> Result<()> {
        if let Some(&token) = seq.tokens().iter().find(|&&x| x >= self.alphabet_size) {
            return Err(GlnnError::TokenOutOfRange {
                token,
                alphabet_size: self.alphabet_size,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `pi(y) = exp(E_y) / sum exp(E_y')` with `E_y = sum_i a_i w_iy`. Returns
/// `ln sum exp(E - max)` and the max so callers can get exact log-probs.
pub fn softmax_output(a: &[f64], w: &[f64], alphabet_size: usize, pi: &mut [f64]) -> (f64, f64) {
    let na = alphabet_size;
    pi.copy_from_slice(&w[..na]);
    for (i, &ai) in a.iter().enumerate().skip(1) {
        if ai != 0.0 {
            for (e, &wy) in pi.iter_mut().zip(&w[i * na..(i + 1) * na]) {
                *e += ai * wy;
            }
        }
    }
    let max = pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for e in pi.iter_mut() {
        *e = (*e - max).exp();
        z += *e;
    }
    for e in pi.iter_mut() {
        *e /= z;
    }
    (max, z.ln())
}

/// `V'_j = V_j + sum_{i in {0} u in(j)} tau_{ijx} a_i`.
pub fn step_glnn(params: &ModelParams, v: &[f64], a: &[f64], x: usize, v_next: &mut [f64]) {
    let topo = &params.topology;
    for j in 1..=topo.n_units() {
        let base = params.tau_block(j, x);
        let inc = incoming_sum(&params.tau[base..], topo.incoming(j), a);
        v_next[j] = v[j] + inc;
    }
}

/// `V'_j = sum_{i in {0} u in(j)} tau_{ijx} a_i`.
pub fn step_gnn(params: &ModelParams, a: &[f64], x: usize, v_next: &mut [f64]) {
    let topo = &params.topology;
    for j in 1..=topo.n_units() {
        let base = params.tau_block(j, x);
        v_next[j] = incoming_sum(&params.tau[base..], topo.incoming(j), a);
    }
}

/// `V'_j = rho_{jx} + sum_{i in {0} u in(j)} tau_{ij} a_i`.
pub fn step_rnn(params: &ModelParams, a: &[f64], x: usize, v_next: &mut [f64]) {
    let topo = &params.topology;
    for j in 1..=topo.n_units() {
        let base = params.tau_block(j, x);
        let s = incoming_sum(&params.tau[base..], topo.incoming(j), a);
        v_next[j] = params.rho[params.rho_index(j, x)] + s;
    }
}

#[inline]
fn incoming_sum(tau: &[f64], incoming: &[usize], a: &[f64]) -> f64 {
    let mut s = 0.0;
    for (k, &i) in incoming.iter().enumerate() {
        s += tau[k] * a[i];
    }
    s
}

/// Incremental evaluator: owns the current state and produces one output
/// distribution per step.
pub struct Runner<'p> {
    params: &'p ModelParams,
    v: Vec<f64>,
    a: Vec<f64>,
    v_next: Vec<f64>,
    pi: Vec<f64>,
    max_e: f64,
    log_z: f64,
}

impl<'p> Runner<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        let n1 = params.n_units() + 1;
        let mut v = vec![0.0; n1];
        if params.kind.is_leaky() {
            v[1..].copy_from_slice(&params.v0[1..]);
        }
        let mut r = Self {
            params,
            a: vec![1.0; n1],
            v,
            v_next: vec![0.0; n1],
            pi: vec![0.0; params.alphabet_size],
            max_e: 0.0,
            log_z: 0.0,
        };
        r.refresh_activity();
        r
    }

    fn refresh_activity(&mut self) {
        let act = self.params.activation;
        self.a[0] = 1.0;
        for j in 1..self.v.len() {
            self.a[j] = act.value(self.v[j]);
        }
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn state_is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }

    /// Output distribution for the current state.
    pub fn probs(&mut self) -> &[f64] {
        let (m, lz) = softmax_output(&self.a, &self.params.w, self.params.alphabet_size, &mut self.pi);
        self.max_e = m;
        self.log_z = lz;
        &self.pi
    }

    /// `ln pi(x)` for the distribution last computed by [`Runner::probs`].
    pub fn log_prob(&self, x: usize) -> f64 {
        // E_x recovered from pi would lose precision; recompute it.
        let na = self.params.alphabet_size;
        let w = &self.params.w;
        let mut e = w[x];
        for (i, &ai) in self.a.iter().enumerate().skip(1) {
            if ai != 0.0 {
                e += ai * w[i * na + x];
            }
        }
        (e - self.max_e) - self.log_z
    }

    /// Feed symbol `x` and move to the next state.
    pub fn advance(&mut self, x: usize) {
        let p = self.params;
        match p.kind {
            ModelKind::Glnn => step_glnn(p, &self.v, &self.a, x, &mut self.v_next),
            ModelKind::Gnn => step_gnn(p, &self.a, x, &mut self.v_next),
            ModelKind::Rnn => step_rnn(p, &self.a, x, &mut self.v_next),
        }
        std::mem::swap(&mut self.v, &mut self.v_next);
        self.refresh_activity();
    }
}

/// Per-step record of a forward run.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub steps: usize,
    pub n1: usize,
    pub alphabet_size: usize,
    /// `v[t * n1 + i]`, `t < steps`.
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    /// `pi[t * A + y]`.
    pub pi: Vec<f64>,
    /// Unmasked `ln pi_t(x_t)`.
    pub log_prob: Vec<f64>,
}

impl Tape {
    #[inline]
    pub fn v_at(&self, t: usize) -> &[f64] {
        &self.v[t * self.n1..(t + 1) * self.n1]
    }

    #[inline]
    pub fn a_at(&self, t: usize) -> &[f64] {
        &self.a[t * self.n1..(t + 1) * self.n1]
    }

    #[inline]
    pub fn pi_at(&self, t: usize) -> &[f64] {
        &self.pi[t * self.alphabet_size..(t + 1) * self.alphabet_size]
    }

    /// Debug dump: `t, V_1.., a_1.., pi(x_t), logloss`.
    pub fn write_csv<W: Write>(&self, seq: &SymbolSequence, mut out: W) -> Result<()> {
        let n = self.n1 - 1;
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("V{i}")));
        header.extend((1..=n).map(|i| format!("a{i}")));
        header.push("pi_x".into());
        header.push("logloss".into());
        writeln!(out, "{}", header.join(","))?;
        for t in 0..self.steps {
            let x = seq.tokens()[t];
            let mut row = vec![t.to_string()];
            row.extend(self.v_at(t)[1..].iter().map(|v| v.to_string()));
            row.extend(self.a_at(t)[1..].iter().map(|v| v.to_string()));
            row.push(self.pi_at(t)[x].to_string());
            row.push((-self.log_prob[t]).to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub tape: Tape,
    /// `sum_t chi_t ln pi_t(x_t)` in nats.
    pub log_likelihood: f64,
}

impl ForwardPass {
    pub fn bits(&self) -> f64 {
        self.log_likelihood * crate::LOG2_E
    }
}

pub fn forward(params: &ModelParams, seq: &SymbolSequence) -> Result<ForwardPass> {
    params.check_sequence(seq)?;
    let steps = seq.len();
    let n1 = params.n_units() + 1;
    let na = params.alphabet_size;
    let mut tape = Tape {
        steps,
        n1,
        alphabet_size: na,
        v: Vec::with_capacity(steps * n1),
        a: Vec::with_capacity(steps * n1),
        pi: Vec::with_capacity(steps * na),
        log_prob: Vec::with_capacity(steps),
    };
    let mut ll = 0.0;
    let mut r = Runner::new(params);
    for (t, &x) in seq.tokens().iter().enumerate() {
        if !r.state_is_finite() {
            return Err(GlnnError::DivergentDynamics { t });
        }
        tape.v.extend_from_slice(&r.v);
        tape.a.extend_from_slice(&r.a);
        let pi = r.probs();
        tape.pi.extend_from_slice(pi);
        let lp = r.log_prob(x);
        if !lp.is_finite() {
            return Err(GlnnError::DivergentDynamics { t });
        }
        tape.log_prob.push(lp);
        if seq.mask()[t] {
            ll += lp;
        }
        if t + 1 < steps {
            r.advance(x);
        }
    }
    Ok(ForwardPass {
        tape,
        log_likelihood: ll,
    })
}

/// Same value as `forward(..).log_likelihood` without keeping a tape.
pub fn log_likelihood(params: &ModelParams, seq: &SymbolSequence) -> Result<f64> {
    params.check_sequence(seq)?;
    let steps = seq.len();
    let mut ll = 0.0;
    let mut r = Runner::new(params);
    for (t, &x) in seq.tokens().iter().enumerate() {
        if !r.state_is_finite() {
            return Err(GlnnError::DivergentDynamics { t });
        }
        if seq.mask()[t] {
            r.probs();
            let lp = r.log_prob(x);
            if !lp.is_finite() {
                return Err(GlnnError::DivergentDynamics { t });
            }
            ll += lp;
        }
        if t + 1 < steps {
            r.advance(x);
        }
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_random_graph;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(kind: ModelKind, n: usize, d: usize, na: usize, seed: u64) -> ModelParams {
        let topo = build_random_graph(n, d, seed).unwrap();
        let mut p = ModelParams::zeros(kind, Activation::Tanh, topo, na).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for x in p.w.iter_mut().chain(p.tau.iter_mut()).chain(p.rho.iter_mut()) {
            *x = rng.gen_range(-1.0..1.0);
        }
        if kind.is_leaky() {
            for x in p.v0.iter_mut().skip(1) {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        p
    }

    #[test]
    fn activation_derivatives_match_differences() {
        for act in [Activation::Tanh, Activation::Logistic] {
            for k in -40..=40 {
                let v = k as f64 * 0.1;
                let h = 1e-5;
                let fd = (act.value(v + h) - act.value(v - h)) / (2.0 * h);
                assert!((fd - act.deriv(v)).abs() < 1e-8, "{act:?} at {v}");
                assert!((act.inverse(act.value(v)) - v).abs() < 1e-9);
            }
        }
        assert_eq!(Activation::Tanh.sup_deriv(), 1.0);
        assert_eq!(Activation::Logistic.sup_deriv(), 0.25);
        assert_eq!(Activation::Logistic.deriv(0.0), 0.25);
    }

    #[test]
    fn softmax_examples() {
        let a = [1.0, 0.3];
        let mut pi = [0.0; 3];
        softmax_output(&a, &[0.0; 6], 3, &mut pi);
        for p in pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let nu = [0.5, 0.3, 0.2];
        let mut w = vec![0.0; 6];
        for y in 0..3 {
            w[y] = f64::ln(nu[y]);
        }
        softmax_output(&a, &w, 3, &mut pi);
        for y in 0..3 {
            assert!((pi[y] - nu[y]).abs() < 1e-15);
        }
        let mut pi2 = [0.0; 3];
        let shifted: Vec<f64> = w.iter().enumerate().map(|(k, x)| if k < 3 { x + 7.5 } else { *x }).collect();
        softmax_output(&a, &shifted, 3, &mut pi2);
        for y in 0..3 {
            assert!((pi[y] - pi2[y]).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_handles_huge_energies() {
        let mut pi = [0.0; 2];
        softmax_output(&[1.0], &[1e4, 0.0], 2, &mut pi);
        assert_eq!(pi, [1.0, 0.0]);
    }

    #[test]
    fn zero_tau_freezes_glnn() {
        let mut p = random_params(ModelKind::Glnn, 3, 2, 2, 1);
        p.tau.iter_mut().for_each(|x| *x = 0.0);
        let seq = SymbolSequence::unmasked(vec![0, 1, 1, 0, 1], 2).unwrap();
        let f = forward(&p, &seq).unwrap();
        for t in 0..5 {
            assert_eq!(&f.tape.v_at(t)[1..], &p.v0[1..]);
        }
    }

    #[test]
    fn single_unit_fixed_point() {
        let topo = NetworkTopology::fully_connected(1).unwrap();
        let mut p = ModelParams::zeros(ModelKind::Glnn, Activation::Tanh, topo, 2).unwrap();
        for y in 0..2 {
            let k = p.tau_index(1, 1, y).unwrap();
            p.tau[k] = -0.5;
        }
        let v = [0.0, 0.0];
        let a = [1.0, 0.0];
        let mut out = [0.0; 2];
        step_glnn(&p, &v, &a, 1, &mut out);
        assert_eq!(out[1], 0.0);
    }

    #[test]
    fn gnn_and_rnn_trivial_steps() {
        let topo = build_random_graph(3, 2, 4).unwrap();
        let mut p = ModelParams::zeros(ModelKind::Gnn, Activation::Tanh, topo.clone(), 2).unwrap();
        let a = [1.0, 0.3, -0.2, 0.9];
        let mut out = [0.0; 4];
        step_gnn(&p, &a, 1, &mut out);
        assert_eq!(&out[1..], &[0.0; 3]);
        for j in 1..=3 {
            let k = p.tau_index(0, j, 1).unwrap();
            p.tau[k] = 0.7;
        }
        step_gnn(&p, &a, 1, &mut out);
        assert_eq!(&out[1..], &[0.7; 3]);

        let mut r = ModelParams::zeros(ModelKind::Rnn, Activation::Tanh, topo, 2).unwrap();
        for j in 1..=3 {
            let k = r.rho_index(j, 1);
            r.rho[k] = j as f64;
        }
        step_rnn(&r, &a, 1, &mut out);
        assert_eq!(&out[1..], &[1.0, 2.0, 3.0]);
    }

    /// Dense brute-force recurrence over an adjacency matrix.
    fn brute_force_v(p: &ModelParams, tokens: &[usize]) -> Vec<Vec<f64>> {
        let n = p.n_units();
        let act = p.activation();
        let mut v = vec![0.0; n + 1];
        if p.kind().is_leaky() {
            v.copy_from_slice(&p.v0);
        }
        let mut out = vec![v.clone()];
        for &x in &tokens[..tokens.len() - 1] {
            let a: Vec<f64> = (0..=n).map(|i| if i == 0 { 1.0 } else { act.value(v[i]) }).collect();
            let mut nv = vec![0.0; n + 1];
            for j in 1..=n {
                let mut s = 0.0;
                for i in 0..=n {
                    if let Some(k) = p.tau_index(i, j, x) {
                        s += p.tau[k] * a[i];
                    }
                }
                nv[j] = match p.kind() {
                    ModelKind::Glnn => v[j] + s,
                    ModelKind::Gnn => s,
                    ModelKind::Rnn => p.rho[p.rho_index(j, x)] + s,
                };
            }
            v = nv;
            out.push(v.clone());
        }
        out
    }

    #[test]
    fn forward_matches_brute_force() {
        for kind in [ModelKind::Rnn, ModelKind::Gnn, ModelKind::Glnn] {
            let p = random_params(kind, 3, 2, 3, 11);
            let tokens = vec![0, 2, 1, 1, 0, 2, 2, 1];
            let seq = SymbolSequence::unmasked(tokens.clone(), 3).unwrap();
            let f = forward(&p, &seq).unwrap();
            let bf = brute_force_v(&p, &tokens);
            for t in 0..tokens.len() {
                for j in 1..=3 {
                    assert!((f.tape.v_at(t)[j] - bf[t][j]).abs() < 1e-12);
                }
            }
            let ll = log_likelihood(&p, &seq).unwrap();
            assert_eq!(ll, f.log_likelihood);
        }
    }

    #[test]
    fn probabilities_normalized_and_single_step() {
        let p = random_params(ModelKind::Glnn, 4, 3, 4, 2);
        let seq = SymbolSequence::new(vec![3, 1, 0, 2, 1], vec![true, false, true, true, false], 4).unwrap();
        let f = forward(&p, &seq).unwrap();
        for t in 0..5 {
            let s: f64 = f.tape.pi_at(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for j in 1..=4 {
                assert_eq!(f.tape.a_at(t)[j], p.activation().value(f.tape.v_at(t)[j]));
            }
        }
        let one = SymbolSequence::unmasked(vec![2], 4).unwrap();
        let f1 = forward(&p, &one).unwrap();
        assert!((f1.log_likelihood - f1.tape.pi_at(0)[2].ln()).abs() < 1e-14);
    }

    #[test]
    fn forward_is_deterministic() {
        let p = random_params(ModelKind::Glnn, 5, 3, 3, 8);
        let seq = SymbolSequence::unmasked(vec![0, 1, 2, 0, 1, 2, 2], 3).unwrap();
        let a = forward(&p, &seq).unwrap();
        let b = forward(&p, &seq).unwrap();
        assert_eq!(a.tape, b.tape);
    }

    #[test]
    fn divergence_reported() {
        let mut p = random_params(ModelKind::Glnn, 2, 2, 2, 3);
        p.v0[2] = f64::INFINITY;
        let seq = SymbolSequence::unmasked(vec![0, 1], 2).unwrap();
        assert!(matches!(forward(&p, &seq), Err(GlnnError::DivergentDynamics { t: 0 })));
    }

    #[test]
    fn affine_correspondence_preserves_the_model() {
        for kind in [ModelKind::Rnn, ModelKind::Gnn, ModelKind::Glnn] {
            let p = random_params(kind, 4, 3, 3, 21);
            let q = p.with_activation(Activation::Logistic);
            let seq = SymbolSequence::unmasked(vec![0, 2, 1, 1, 0, 2, 0, 1], 3).unwrap();
            let fp = forward(&p, &seq).unwrap();
            let fq = forward(&q, &seq).unwrap();
            assert!((fp.log_likelihood - fq.log_likelihood).abs() < 1e-12);
            for t in 0..seq.len() {
                for j in 1..=4 {
                    assert!((2.0 * fp.tape.v_at(t)[j] - fq.tape.v_at(t)[j]).abs() < 1e-12);
                }
            }
            let back = q.with_activation(Activation::Tanh);
            for (a, b) in back.tau.iter().zip(&p.tau) {
                assert!((a - b).abs() < 1e-14);
            }
            for (a, b) in back.w.iter().zip(&p.w) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let p = random_params(ModelKind::Rnn, 4, 2, 3, 6);
        let back = ModelParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn csv_dump_has_one_row_per_step() {
        let p = random_params(ModelKind::Gnn, 2, 1, 2, 6);
        let seq = SymbolSequence::unmasked(vec![0, 1, 1], 2).unwrap();
        let f = forward(&p, &seq).unwrap();
        let mut buf = Vec::new();
        f.tape.write_csv(&seq, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("t,V1,V2,a1,a2,pi_x,logloss"));
    }
}
