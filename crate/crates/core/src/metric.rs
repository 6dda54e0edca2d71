//! Riemannian metrics for the gradient updates.
//!
//! Writing weights use the quasi-diagonal (or diagonal) inverse of the
//! output Fisher matrix. Transition weights use per-(unit, symbol) blocks
//! weighted by a per-(unit, time) modulus: `B^2` for the recurrent unitwise
//! outer-product metric (RUOP), or a backward recursion for the recurrent
//! backpropagated metric (RBPM).

pub mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backprop::BackwardPass;
use crate::dynamics::{ModelKind, ModelParams, ParamSet, Tape};
use crate::error::{GlnnError, Result};
use crate::linalg;
use crate::seqdata::{SymbolSequence, SymbolStats};

/// Diagonal dampening of transition blocks and of the startup update.
pub const DEFAULT_DAMPENING: f64 = 1.0;

/// Unit roundoff added to the writing-metric dampening.
pub const WRITING_EPSILON: f64 = f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Ruop,
    Rbpm,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Ruop => "ruop",
            MetricKind::Rbpm => "rbpm",
        })
    }
}

impl FromStr for MetricKind {
    type Err = GlnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ruop" => Ok(MetricKind::Ruop),
            "rbpm" => Ok(MetricKind::Rbpm),
            _ => Err(GlnnError::InvalidArgument(format!("unknown metric {s:?}"))),
        }
    }
}

/// `sum_y pi(y) d_y^2 - (sum_y pi(y) d_y)^2`: squared Fisher norm of the
/// change of output distribution caused by energy changes `d`.
pub fn fisher_output_norm(pi: &[f64], de: &[f64]) -> f64 {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (&p, &d) in pi.iter().zip(de) {
        m1 += p * d;
        m2 += p * d * d;
    }
    m2 - m1 * m1
}

/// Diagonal and bias-row terms of the writing-weight Fisher matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WritingTerms {
    pub alphabet_size: usize,
    pub n1: usize,
    /// `h_ii^y` at `i * A + y`, dampening included (also for `i = 0`).
    pub diag: Vec<f64>,
    /// `h_0i^y` at `i * A + y`, undampened.
    pub row0: Vec<f64>,
    pub eps: Vec<f64>,
}

/// `eps_y`: masked frequency of `y` plus unit roundoff.
pub fn writing_dampening(stats: &SymbolStats) -> Vec<f64> {
    stats.nu.iter().map(|&f| f + WRITING_EPSILON).collect()
}

pub fn writing_hessian_terms(tape: &Tape, seq: &SymbolSequence, eps: &[f64]) -> WritingTerms {
    let na = tape.alphabet_size;
    let n1 = tape.n1;
    let mut diag = vec![0.0; n1 * na];
    let mut row0 = vec![0.0; n1 * na];
    let mut var = vec![0.0; na];
    for t in 0..tape.steps {
        if !seq.mask()[t] {
            continue;
        }
        for (v, &p) in var.iter_mut().zip(tape.pi_at(t)) {
            *v = p * (1.0 - p);
        }
        for (i, &ai) in tape.a_at(t).iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let d = &mut diag[i * na..(i + 1) * na];
            let r = &mut row0[i * na..(i + 1) * na];
            for y in 0..na {
                d[y] += ai * ai * var[y];
                r[y] += ai * var[y];
            }
        }
    }
    for i in 0..n1 {
        for y in 0..na {
            diag[i * na + y] += eps[y];
        }
    }
    WritingTerms {
        alphabet_size: na,
        n1,
        diag,
        row0,
        eps: eps.to_vec(),
    }
}

/// Quasi-diagonal inverse applied to `g`; coordinate 0 is the bias.
/// `diag` is dampened, `row0[k]` is the undampened `(0, k)` entry.
pub fn qd_solve(g: &[f64], diag: &[f64], row0: &[f64]) -> Result<Vec<f64>> {
    let m00 = diag[0];
    if !(m00 > 0.0) {
        return Err(GlnnError::MetricDegenerate);
    }
    let mut out = vec![0.0; g.len()];
    let g0 = g[0];
    let mut bias = g0 / m00;
    for k in 1..g.len() {
        let den = diag[k] - row0[k] * row0[k] / m00;
        if !(den > 0.0) {
            return Err(GlnnError::MetricDegenerate);
        }
        let d = (g[k] - g0 * row0[k] / m00) / den;
        out[k] = d;
        bias -= row0[k] / m00 * d;
    }
    out[0] = bias;
    Ok(out)
}

/// Quasi-diagonal writing direction: `w += eta * result`.
pub fn qd_writing_direction(w_grad: &[f64], terms: &WritingTerms) -> Result<Vec<f64>> {
    let na = terms.alphabet_size;
    let n1 = terms.n1;
    let mut out = vec![0.0; n1 * na];
    let mut g = vec![0.0; n1];
    let mut d = vec![0.0; n1];
    let mut r = vec![0.0; n1];
    for y in 0..na {
        for i in 0..n1 {
            g[i] = w_grad[i * na + y];
            d[i] = terms.diag[i * na + y];
            r[i] = terms.row0[i * na + y];
        }
        let s = qd_solve(&g, &d, &r)?;
        for i in 0..n1 {
            out[i * na + y] = s[i];
        }
    }
    Ok(out)
}

/// Diagonal-Hessian writing direction `W / h_ii`.
pub fn dh_writing_direction(w_grad: &[f64], terms: &WritingTerms) -> Result<Vec<f64>> {
    w_grad
        .iter()
        .zip(&terms.diag)
        .map(|(&g, &h)| {
            if h > 0.0 {
                Ok(g / h)
            } else {
                Err(GlnnError::MetricDegenerate)
            }
        })
        .collect()
}

pub fn qd_writing_update(w: &[f64], w_grad: &[f64], terms: &WritingTerms, eta_w: f64) -> Result<Vec<f64>> {
    let d = qd_writing_direction(w_grad, terms)?;
    Ok(w.iter().zip(&d).map(|(x, dx)| x + eta_w * dx).collect())
}

/// Per-(unit, time) modulus, `m[t * n1 + i]` for `t <= steps`, zero at `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulus {
    pub steps: usize,
    pub n1: usize,
    pub m: Vec<f64>,
}

impl Modulus {
    #[inline]
    pub fn at(&self, t: usize) -> &[f64] {
        &self.m[t * self.n1..(t + 1) * self.n1]
    }
}

pub fn ruop_modulus(bp: &BackwardPass) -> Modulus {
    Modulus {
        steps: bp.steps,
        n1: bp.n1,
        m: bp.b.iter().map(|b| b * b).collect(),
    }
}

/// Backpropagated modulus: Fisher-norm source at each step plus the squared
/// Jacobian of the transition applied to the next modulus.
pub fn rbpm_modulus(params: &ModelParams, tape: &Tape, seq: &SymbolSequence) -> Modulus {
    let steps = tape.steps;
    let n1 = tape.n1;
    let na = params.alphabet_size();
    let act = params.activation();
    let topo = params.topology();
    let carry = if params.kind().is_leaky() { 1.0 } else { 0.0 };
    let mut m = vec![0.0; (steps + 1) * n1];
    let mut prop = vec![0.0; n1];
    for t in (0..steps).rev() {
        let x = seq.tokens()[t];
        let chi = seq.chi(t);
        let (head, tail) = m.split_at_mut((t + 1) * n1);
        let m_next = &tail[..n1];
        let m_now = &mut head[t * n1..];
        prop.iter_mut().for_each(|p| *p = 0.0);
        for j in 1..n1 {
            let mj = m_next[j];
            if mj == 0.0 {
                continue;
            }
            let base = params.tau_block(j, x);
            for (k, &i) in topo.incoming(j).iter().enumerate().skip(1) {
                if i != j {
                    let tau = params.tau[base + k];
                    prop[i] += tau * tau * mj;
                }
            }
        }
        let v = tape.v_at(t);
        let pi = tape.pi_at(t);
        for i in 1..n1 {
            let sd = act.deriv(v[i]);
            let src = if chi != 0.0 {
                chi * fisher_output_norm(pi, &params.w[i * na..(i + 1) * na])
            } else {
                0.0
            };
            let self_tau = params.tau[params.tau_block(i, x) + topo.self_slot(i)];
            let c = carry + self_tau * sd;
            m_now[i] = sd * sd * (src + prop[i]) + c * c * m_next[i];
        }
    }
    Modulus { steps, n1, m }
}

pub fn modulus(kind: MetricKind, params: &ModelParams, tape: &Tape, seq: &SymbolSequence, bp: &BackwardPass) -> Modulus {
    match kind {
        MetricKind::Ruop => ruop_modulus(bp),
        MetricKind::Rbpm => rbpm_modulus(params, tape, seq),
    }
}

/// Full symmetric blocks `M^{(jy)}` over `{0} u in(j)` for gated models.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricBlocks {
    alphabet_size: usize,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    pub data: Vec<f64>,
}

impl MetricBlocks {
    /// Size of the blocks of unit `j`.
    pub fn size(&self, j: usize) -> usize {
        self.sizes[j - 1]
    }

    /// Row-major `s_j x s_j` block for `(j, y)`.
    pub fn block(&self, j: usize, y: usize) -> &[f64] {
        let s = self.sizes[j - 1];
        let o = self.offsets[j - 1] + y * s * s;
        &self.data[o..o + s * s]
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }
}

/// `M^{(jy)}_{kk'} = sum_t 1[x_t = y] a_k^t a_k'^t m_j^{t+1}`, undampened.
pub fn metric_block_accumulate(
    params: &ModelParams,
    tape: &Tape,
    m: &Modulus,
    seq: &SymbolSequence,
) -> Result<MetricBlocks> {
    if !params.kind().is_gated() {
        return Err(GlnnError::Unsupported(
            "full metric blocks for RNNs; use a quasi-diagonal rule".into(),
        ));
    }
    let topo = params.topology();
    let na = params.alphabet_size();
    let n = topo.n_units();
    let mut sizes = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    let mut off = 0;
    for j in 1..=n {
        let s = topo.incoming(j).len();
        sizes.push(s);
        offsets.push(off);
        off += na * s * s;
    }
    let mut data = vec![0.0; off];
    let mut act = Vec::new();
    for t in 0..tape.steps {
        let x = seq.tokens()[t];
        let a = tape.a_at(t);
        let m_next = m.at(t + 1);
        for j in 1..=n {
            let mj = m_next[j];
            if mj == 0.0 {
                continue;
            }
            let s = sizes[j - 1];
            act.clear();
            act.extend(topo.incoming(j).iter().map(|&i| a[i]));
            let blk = &mut data[offsets[j - 1] + x * s * s..][..s * s];
            for k in 0..s {
                let ak = act[k] * mj;
                for l in 0..=k {
                    blk[k * s + l] += ak * act[l];
                }
            }
        }
    }
    for j in 1..=n {
        let s = sizes[j - 1];
        for y in 0..na {
            let blk = &mut data[offsets[j - 1] + y * s * s..][..s * s];
            for k in 0..s {
                for l in 0..k {
                    blk[l * s + k] = blk[k * s + l];
                }
            }
        }
    }
    Ok(MetricBlocks {
        alphabet_size: na,
        sizes,
        offsets,
        data,
    })
}

/// Solves `(M + eps I) x = g` by Cholesky, retrying once with `10 eps`.
pub fn dampened_solve(m: &[f64], n: usize, g: &[f64], eps: f64) -> Result<Vec<f64>> {
    let attempt = |e: f64| {
        let mut md = m.to_vec();
        for k in 0..n {
            md[k * n + k] += e;
        }
        linalg::spd_solve(&md, n, g)
    };
    match attempt(eps) {
        Ok(x) => Ok(x),
        Err(_) => {
            log::warn!("metric block not positive definite, retrying with 10x dampening");
            attempt(10.0 * eps)
        }
    }
}

/// Diagonal and bias-row entries of the transition metric.
///
/// For gated models both vectors are laid out like `tau`. For RNNs the
/// `rho_{jy}` coordinates join the block of unit `j` with activity
/// `1[x_t = y]`; their diagonal and bias-row entries coincide and are
/// stored once in `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct QdTerms {
    pub diag: Vec<f64>,
    pub row0: Vec<f64>,
    pub rho: Vec<f64>,
}

pub fn qd_accumulate(params: &ModelParams, tape: &Tape, m: &Modulus, seq: &SymbolSequence) -> QdTerms {
    let topo = params.topology();
    let mut q = QdTerms {
        diag: vec![0.0; params.tau.len()],
        row0: vec![0.0; params.tau.len()],
        rho: vec![0.0; params.rho.len()],
    };
    let rnn = params.kind() == ModelKind::Rnn;
    for t in 0..tape.steps {
        let x = seq.tokens()[t];
        let a = tape.a_at(t);
        let m_next = m.at(t + 1);
        for j in 1..=topo.n_units() {
            let mj = m_next[j];
            if mj == 0.0 {
                continue;
            }
            let base = params.tau_block(j, x);
            for (k, &i) in topo.incoming(j).iter().enumerate() {
                let am = a[i] * mj;
                q.diag[base + k] += a[i] * am;
                q.row0[base + k] += am;
            }
            if rnn {
                q.rho[params.rho_index(j, x)] += mj;
            }
        }
    }
    q
}

/// How the transition blocks are inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockMode {
    Full,
    QuasiDiagonal,
}

/// Invariant direction for `tau`, `rho` and `V^0`: `theta += eta * result`.
pub fn transition_direction(
    params: &ModelParams,
    tape: &Tape,
    bp: &BackwardPass,
    seq: &SymbolSequence,
    kind: MetricKind,
    mode: BlockMode,
    eps: f64,
) -> Result<ParamSet> {
    let m = modulus(kind, params, tape, seq, bp);
    let mut dir = params.zeros_like();
    let topo = params.topology();
    let na = params.alphabet_size();
    let n = topo.n_units();
    match (mode, params.kind()) {
        (BlockMode::Full, ModelKind::Rnn) => {
            return Err(GlnnError::Unsupported(
                "full metric blocks for RNNs; use a quasi-diagonal rule".into(),
            ));
        }
        (BlockMode::Full, _) => {
            let blocks = metric_block_accumulate(params, tape, &m, seq)?;
            for j in 1..=n {
                let s = blocks.size(j);
                for y in 0..na {
                    let base = params.tau_block(j, y);
                    let g = &bp.grad.tau[base..base + s];
                    if g.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let x = dampened_solve(blocks.block(j, y), s, g, eps)?;
                    dir.tau[base..base + s].copy_from_slice(&x);
                }
            }
        }
        (BlockMode::QuasiDiagonal, kind) => {
            let q = qd_accumulate(params, tape, &m, seq);
            let ys = if kind.is_gated() { na } else { 1 };
            let mut g = Vec::new();
            let mut d = Vec::new();
            let mut r = Vec::new();
            for j in 1..=n {
                let s = topo.incoming(j).len();
                for y in 0..ys {
                    let base = params.tau_block(j, y);
                    g.clear();
                    d.clear();
                    r.clear();
                    g.extend_from_slice(&bp.grad.tau[base..base + s]);
                    d.extend(q.diag[base..base + s].iter().map(|v| v + eps));
                    r.extend_from_slice(&q.row0[base..base + s]);
                    if kind == ModelKind::Rnn {
                        let rb = params.rho_index(j, 0);
                        g.extend_from_slice(&bp.grad.rho[rb..rb + na]);
                        d.extend(q.rho[rb..rb + na].iter().map(|v| v + eps));
                        r.extend_from_slice(&q.rho[rb..rb + na]);
                    }
                    let x = qd_solve(&g, &d, &r)?;
                    dir.tau[base..base + s].copy_from_slice(&x[..s]);
                    if kind == ModelKind::Rnn {
                        let rb = params.rho_index(j, 0);
                        dir.rho[rb..rb + na].copy_from_slice(&x[s..]);
                    }
                }
            }
        }
    }
    if params.kind().is_leaky() {
        let m0 = m.at(0);
        for j in 1..=n {
            let g = bp.grad.v0[j];
            dir.v0[j] = if g == 0.0 { 0.0 } else { g / (m0[j] + eps) };
        }
    }
    Ok(dir)
}
