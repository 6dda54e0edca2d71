//! Initialization in the linearized integrating regime.
//!
//! GLNN unit `j` gets a self-loop `-alpha` and a bias `beta_j` so that
//! `V_bar_j = s^{-1}(beta_j / alpha)` is an attractive fixed point with
//! relaxation rate `mu_j = 1 / (j + 1)`. Small centered per-symbol noise
//! on the bias makes each unit an exponentially weighted average of a random
//! projection of the input. The writing weights make the untrained model
//! emit symbols i.i.d. with their empirical frequencies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Activation, ModelKind, ModelParams};
use crate::error::{GlnnError, Result};
use crate::seqdata::SymbolStats;
use crate::topology::NetworkTopology;

/// Self-feedback magnitude for tanh units, `1 / (2 sup s')`.
pub const TANH_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPlan {
    /// Self-feedback magnitude in the tanh parametrization.
    pub alpha: f64,
    /// Multiplier on the random bias term (0 gives the exact fixed point).
    pub noise: f64,
    pub seed: u64,
}

impl InitPlan {
    pub fn new(seed: u64) -> Self {
        Self {
            alpha: TANH_ALPHA,
            noise: 1.0,
            seed,
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = 0.0;
        self
    }

    /// `alpha` for activation `s`: `1 / (2 sup s')`.
    pub fn alpha_for(act: Activation) -> f64 {
        1.0 / (2.0 * act.sup_deriv())
    }

    pub fn mu(&self, j: usize) -> f64 {
        1.0 / (j as f64 + 1.0)
    }

    pub fn beta(&self, j: usize) -> f64 {
        -(self.alpha * (self.alpha - self.mu(j))).sqrt()
    }

    pub fn epsilon(&self, j: usize) -> f64 {
        self.mu(j) / 4.0
    }

    /// Fixed point in the tanh parametrization.
    pub fn v_bar(&self, j: usize) -> f64 {
        Activation::Tanh.inverse(self.beta(j) / self.alpha)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.5) || !self.noise.is_finite() {
            return Err(GlnnError::InvalidArgument(format!(
                "init plan needs alpha >= 1/2 (every mu_j <= alpha), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// `log nu_y`, with absent symbols floored at `1 / (2 * #predicted)` and the
/// result renormalized.
pub fn iid_writing_bias(stats: &SymbolStats) -> Vec<f64> {
    let floor = 1.0 / (2.0 * stats.predicted.max(1) as f64);
    let mut nu = stats.nu.clone();
    if nu.iter().any(|&f| f <= 0.0) {
        nu.iter_mut().for_each(|f| *f = f.max(floor));
        let z: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|f| *f /= z);
    }
    nu.iter().map(|f| f.ln()).collect()
}

/// `u_{jy} - sum_y' nu~_y' u_{jy'}` with `u ~ U[0, 1]`, for `j = 1..=N`.
fn centered_noise(rng: &mut ChaCha8Rng, n: usize, nu_tilde: &[f64]) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let u: Vec<f64> = nu_tilde.iter().map(|_| rng.gen::<f64>()).collect();
            let mean: f64 = u.iter().zip(nu_tilde).map(|(a, b)| a * b).sum();
            u.iter().map(|x| x - mean).collect()
        })
        .collect()
}

fn check_stats(stats: &SymbolStats, alphabet_size: usize) -> Result<()> {
    if stats.nu.len() != alphabet_size || stats.nu_tilde.len() != alphabet_size {
        return Err(GlnnError::ShapeMismatch(format!(
            "statistics over {} symbols for alphabet of size {alphabet_size}",
            stats.nu.len()
        )));
    }
    Ok(())
}

/// Tanh GLNN in the linearized regime.
pub fn glnn_init(
    topology: &NetworkTopology,
    alphabet_size: usize,
    stats: &SymbolStats,
    plan: &InitPlan,
) -> Result<ModelParams> {
    plan.validate()?;
    check_stats(stats, alphabet_size)?;
    let n = topology.n_units();
    let mut p = ModelParams::zeros(ModelKind::Glnn, Activation::Tanh, topology.clone(), alphabet_size)?;
    p.w[..alphabet_size].copy_from_slice(&iid_writing_bias(stats));
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let noise = centered_noise(&mut rng, n, &stats.nu_tilde);
    let alpha = plan.alpha;
    for j in 1..=n {
        let v_bar = plan.v_bar(j);
        // alpha * s(V_bar) instead of beta: the increment at the fixed point
        // is then exactly zero in floating point
        let beta = alpha * Activation::Tanh.value(v_bar);
        let eps = plan.noise * plan.epsilon(j);
        let self_slot = topology.self_slot(j);
        for y in 0..alphabet_size {
            let base = p.tau_block(j, y);
            p.tau[base] = beta + eps * noise[j - 1][y];
            p.tau[base + self_slot] = -alpha;
        }
        p.v0[j] = v_bar;
    }
    Ok(p)
}

/// Reference RNN: `tau_ii = 1 - 1/i`, `rho_jy = (u_jy - sum nu~ u) / 2`.
pub fn rnn_init(
    topology: &NetworkTopology,
    alphabet_size: usize,
    stats: &SymbolStats,
    seed: u64,
) -> Result<ModelParams> {
    check_stats(stats, alphabet_size)?;
    let n = topology.n_units();
    let mut p = ModelParams::zeros(ModelKind::Rnn, Activation::Tanh, topology.clone(), alphabet_size)?;
    p.w[..alphabet_size].copy_from_slice(&iid_writing_bias(stats));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = centered_noise(&mut rng, n, &stats.nu_tilde);
    for j in 1..=n {
        let base = p.tau_block(j, 0);
        p.tau[base + topology.self_slot(j)] = 1.0 - 1.0 / j as f64;
        for y in 0..alphabet_size {
            let k = p.rho_index(j, y);
            p.rho[k] = 0.5 * noise[j - 1][y];
        }
    }
    Ok(p)
}

/// GNN counterpart of [`rnn_init`]: the per-symbol bias `tau_0jy` plays the
/// role of `rho_jy`, and every symbol gets the self-loop `1 - 1/j`.
pub fn gnn_init(
    topology: &NetworkTopology,
    alphabet_size: usize,
    stats: &SymbolStats,
    seed: u64,
) -> Result<ModelParams> {
    check_stats(stats, alphabet_size)?;
    let n = topology.n_units();
    let mut p = ModelParams::zeros(ModelKind::Gnn, Activation::Tanh, topology.clone(), alphabet_size)?;
    p.w[..alphabet_size].copy_from_slice(&iid_writing_bias(stats));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = centered_noise(&mut rng, n, &stats.nu_tilde);
    for j in 1..=n {
        for y in 0..alphabet_size {
            let base = p.tau_block(j, y);
            p.tau[base] = 0.5 * noise[j - 1][y];
            p.tau[base + topology.self_slot(j)] = 1.0 - 1.0 / j as f64;
        }
    }
    Ok(p)
}

/// Builds the initial model of the requested kind. Logistic models are the
/// affine image of the tanh initialization, which realizes
/// `alpha = 1 / (2 sup s')` for the logistic function.
pub fn initialize(
    kind: ModelKind,
    activation: Activation,
    topology: &NetworkTopology,
    alphabet_size: usize,
    stats: &SymbolStats,
    plan: &InitPlan,
) -> Result<ModelParams> {
    let p = match kind {
        ModelKind::Glnn => glnn_init(topology, alphabet_size, stats, plan)?,
        ModelKind::Gnn => gnn_init(topology, alphabet_size, stats, plan.seed)?,
        ModelKind::Rnn => rnn_init(topology, alphabet_size, stats, plan.seed)?,
    };
    Ok(p.with_activation(activation))
}

/// Linearized trajectory of GLNN unit `j` driven by `signal[t] = rho_{x_t}`
/// (the centered noise of the symbol read at `t`):
/// `V^t = V_bar + eps * sum_{t' < t} (1 - mu)^{t - 1 - t'} signal[t']`.
/// Returns `steps` values starting at `t = 0`.
pub fn linearized_prediction(plan: &InitPlan, j: usize, signal: &[f64], steps: usize) -> Vec<f64> {
    let v_bar = plan.v_bar(j);
    let eps = plan.noise * plan.epsilon(j);
    // mu = alpha s'(V_bar)
    let mu = plan.alpha * Activation::Tanh.deriv(v_bar);
    let mut out = Vec::with_capacity(steps);
    let mut delta = 0.0;
    for t in 0..steps {
        out.push(v_bar + delta);
        if t < signal.len() {
            delta = (1.0 - mu) * delta + eps * signal[t];
        }
    }
    out
}

/// Centered per-symbol signal `tau_0jy - beta_j` divided by `eps_j`, read back
/// from an initialized tanh GLNN.
pub fn unit_signal(params: &ModelParams, plan: &InitPlan, j: usize) -> Vec<f64> {
    let beta = plan.alpha * Activation::Tanh.value(plan.v_bar(j));
    let eps = plan.noise * plan.epsilon(j);
    (0..params.alphabet_size())
        .map(|y| (params.tau[params.tau_block(j, y)] - beta) / eps)
        .collect()
}
