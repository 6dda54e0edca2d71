//! Time-unfolding oracle for the transition metrics.
//!
//! The recurrent network is viewed as a feedforward network over
//! `(unit, time)` nodes, with a private copy of every transition parameter
//! at every time step. The metric of a parameter is the sum over time of the
//! per-copy metrics. Everything here is recomputed from scratch with dense
//! matrices and forward-mode dual numbers; nothing is shared with the
//! streaming implementation except parameter storage.

use std::ops::{Add, Mul, Sub};

use crate::dynamics::{Activation, ModelKind, ModelParams};
use crate::error::{GlnnError, Result};
use crate::metric::MetricKind;
use crate::seqdata::SymbolSequence;

pub const MAX_UNITS: usize = 5;
pub const MAX_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn c(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual { v: e, d: self.d * e }
    }

    fn ln(self) -> Self {
        Dual {
            v: self.v.ln(),
            d: self.d / self.v,
        }
    }

    fn act(self, s: Activation) -> Self {
        match s {
            Activation::Tanh => {
                let t = self.v.tanh();
                Dual {
                    v: t,
                    d: self.d * (1.0 - t * t),
                }
            }
            Activation::Logistic => {
                let e = (-self).exp();
                let one = Dual::c(1.0);
                let den = one + e;
                Dual {
                    v: 1.0 / den.v,
                    d: -den.d / (den.v * den.v),
                }
            }
        }
    }
}

impl std::ops::Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual {
            v: -self.v,
            d: -self.d,
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

/// Dense copy of a model: `tau[x][i][j]` (0 where there is no edge),
/// `rho[j][x]`, `w[i][y]`.
struct Dense {
    kind: ModelKind,
    act: Activation,
    n1: usize,
    na: usize,
    tau: Vec<Vec<Vec<f64>>>,
    rho: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    v0: Vec<f64>,
}

impl Dense {
    fn new(p: &ModelParams) -> Self {
        let n1 = p.n_units() + 1;
        let na = p.alphabet_size();
        let mut tau = vec![vec![vec![0.0; n1]; n1]; na];
        for (x, tx) in tau.iter_mut().enumerate() {
            for j in 1..n1 {
                for (i, row) in tx.iter_mut().enumerate() {
                    if let Some(k) = p.tau_index(i, j, x) {
                        row[j] = p.tau[k];
                    }
                }
            }
        }
        let mut rho = vec![vec![0.0; na]; n1];
        if p.kind() == ModelKind::Rnn {
            for j in 1..n1 {
                for y in 0..na {
                    rho[j][y] = p.rho[p.rho_index(j, y)];
                }
            }
        }
        let w = (0..n1).map(|i| (0..na).map(|y| p.w[p.w_index(i, y)]).collect()).collect();
        let mut v0 = vec![0.0; n1];
        if p.kind().is_leaky() {
            v0.copy_from_slice(&p.v0);
        }
        Dense {
            kind: p.kind(),
            act: p.activation(),
            n1,
            na,
            tau,
            rho,
            w,
            v0,
        }
    }

    fn activity(&self, v: &[Dual]) -> Vec<Dual> {
        (0..self.n1)
            .map(|i| if i == 0 { Dual::c(1.0) } else { v[i].act(self.act) })
            .collect()
    }

    fn step(&self, v: &[Dual], x: usize) -> Vec<Dual> {
        let a = self.activity(v);
        let mut out = vec![Dual::c(0.0); self.n1];
        for j in 1..self.n1 {
            let mut s = Dual::c(0.0);
            for (i, ai) in a.iter().enumerate() {
                s = s + Dual::c(self.tau[x][i][j]) * *ai;
            }
            out[j] = match self.kind {
                ModelKind::Glnn => v[j] + s,
                ModelKind::Gnn => s,
                ModelKind::Rnn => Dual::c(self.rho[j][x]) + s,
            };
        }
        out
    }

    /// `log pi(x)` and the output distribution, both from activity `a`.
    fn log_prob(&self, a: &[Dual], x: usize) -> (Dual, Vec<f64>) {
        let e: Vec<Dual> = (0..self.na)
            .map(|y| {
                let mut s = Dual::c(0.0);
                for (i, ai) in a.iter().enumerate() {
                    s = s + *ai * Dual::c(self.w[i][y]);
                }
                s
            })
            .collect();
        let mx = e.iter().map(|d| d.v).fold(f64::NEG_INFINITY, f64::max);
        let mut z = Dual::c(0.0);
        for ey in &e {
            z = z + (*ey - Dual::c(mx)).exp();
        }
        let pi = e.iter().map(|ey| ((*ey - Dual::c(mx)).exp().v) / z.v).collect();
        (e[x] - Dual::c(mx) - z.ln(), pi)
    }
}

/// Coordinates of the parameters that feed unit `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleCoord {
    /// `tau_{i j y}` (RNN: `y` is 0 and meaningless).
    Tau { i: usize, y: usize },
    Rho { y: usize },
}

#[derive(Debug, Clone)]
pub struct UnitMetric {
    pub coords: Vec<OracleCoord>,
    /// Row-major `coords.len()` square matrix.
    pub matrix: Vec<f64>,
}

impl UnitMetric {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn entry(&self, r: OracleCoord, c: OracleCoord) -> f64 {
        let n = self.dim();
        let ri = self.coords.iter().position(|&k| k == r).expect("row coordinate");
        let ci = self.coords.iter().position(|&k| k == c).expect("column coordinate");
        self.matrix[ri * n + ci]
    }
}

#[derive(Debug, Clone)]
pub struct UnfoldedMetric {
    pub steps: usize,
    pub n1: usize,
    /// `d log Pr / d V_i^t` by forward-mode differentiation, `t <= steps`.
    pub b: Vec<f64>,
    /// Per-node modulus, `t <= steps`.
    pub modulus: Vec<f64>,
    /// `units[j - 1]`.
    pub units: Vec<UnitMetric>,
}

/// Builds the time-unfolded metric for every unit. Test scale only.
pub fn unfolding_oracle(params: &ModelParams, seq: &SymbolSequence, kind: MetricKind) -> Result<UnfoldedMetric> {
    let n = params.n_units();
    let steps = seq.len();
    if n > MAX_UNITS || steps > MAX_STEPS {
        return Err(GlnnError::InstanceTooLarge { units: n, steps });
    }
    let dense = Dense::new(params);
    let n1 = n + 1;
    let na = dense.na;
    let xs = seq.tokens();

    // plain trajectory
    let mut traj: Vec<Vec<Dual>> = Vec::with_capacity(steps);
    let mut v: Vec<Dual> = if dense.kind.is_leaky() {
        dense.v0.iter().map(|&x| Dual::c(x)).collect()
    } else {
        vec![Dual::c(0.0); n1]
    };
    for t in 0..steps {
        traj.push(v.clone());
        if t + 1 < steps {
            v = dense.step(&v, xs[t]);
        }
    }

    // B_i^t: perturb V_i^t and run the rest of the sequence in dual numbers
    let mut b = vec![0.0; (steps + 1) * n1];
    for t0 in 0..steps {
        for i in 1..n1 {
            let mut v = traj[t0].clone();
            v[i].d = 1.0;
            let mut acc = 0.0;
            for t in t0..steps {
                if seq.mask()[t] {
                    let a = dense.activity(&v);
                    acc += dense.log_prob(&a, xs[t]).0.d;
                }
                if t + 1 < steps {
                    v = dense.step(&v, xs[t]);
                }
            }
            b[t0 * n1 + i] = acc;
        }
    }

    let modulus = match kind {
        MetricKind::Ruop => b.iter().map(|x| x * x).collect::<Vec<_>>(),
        MetricKind::Rbpm => {
            let mut m = vec![0.0; (steps + 1) * n1];
            for t in (0..steps).rev() {
                let a_plain = dense.activity(&traj[t]);
                let (_, pi) = dense.log_prob(&a_plain, xs[t]);
                for i in 1..n1 {
                    // dV_j^{t+1} / dV_i^t and s'(V_i^t) by seeding V_i^t
                    let mut v = traj[t].clone();
                    v[i].d = 1.0;
                    let sd = v[i].act(dense.act).d;
                    let next = dense.step(&v, xs[t]);
                    let de: Vec<f64> = (0..na).map(|y| sd * dense.w[i][y]).collect();
                    let mut src = 0.0;
                    if seq.mask()[t] {
                        let mean: f64 = (0..na).map(|y| pi[y] * de[y]).sum();
                        src = (0..na).map(|y| pi[y] * (de[y] - mean) * (de[y] - mean)).sum();
                    }
                    let mut prop = 0.0;
                    for j in 1..n1 {
                        let jac = next[j].d;
                        prop += jac * jac * m[(t + 1) * n1 + j];
                    }
                    m[t * n1 + i] = src + prop;
                }
            }
            m
        }
    };

    let mut units = Vec::with_capacity(n);
    for j in 1..n1 {
        let sources: Vec<usize> = params.topology().incoming(j).to_vec();
        let mut coords = Vec::new();
        if dense.kind.is_gated() {
            for y in 0..na {
                for &i in &sources {
                    coords.push(OracleCoord::Tau { i, y });
                }
            }
        } else {
            for &i in &sources {
                coords.push(OracleCoord::Tau { i, y: 0 });
            }
            for y in 0..na {
                coords.push(OracleCoord::Rho { y });
            }
        }
        let dim = coords.len();
        let mut matrix = vec![0.0; dim * dim];
        for t in 0..steps {
            let a = dense.activity(&traj[t]);
            let x = xs[t];
            // derivative of V_j^{t+1} with respect to the time-t copy
            let dv: Vec<f64> = coords
                .iter()
                .map(|c| match *c {
                    OracleCoord::Tau { i, y } => {
                        if !dense.kind.is_gated() || y == x {
                            a[i].v
                        } else {
                            0.0
                        }
                    }
                    OracleCoord::Rho { y } => (y == x) as u8 as f64,
                })
                .collect();
            let mj = modulus[(t + 1) * n1 + j];
            for r in 0..dim {
                for c in 0..dim {
                    matrix[r * dim + c] += mj * dv[r] * dv[c];
                }
            }
        }
        units.push(UnitMetric { coords, matrix });
    }

    Ok(UnfoldedMetric {
        steps,
        n1,
        b,
        modulus,
        units,
    })
}
