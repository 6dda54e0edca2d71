//! Alternating gradient ascent on writing weights and transition weights
//! with the halve-or-grow learning-rate rule.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::backprop::{backward, BackwardPass};
use crate::dynamics::{forward, log_likelihood, ModelKind, ModelParams, ParamSet};
use crate::error::{GlnnError, Result};
use crate::eval::regularized_validation_ll;
use crate::metric::{self, BlockMode, MetricKind};
use crate::seqdata::{compute_stats_for_size, SymbolSequence, SymbolStats};
use crate::LOG2_E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WritingRule {
    /// Quasi-diagonal inverse Hessian.
    Qdh,
    /// Inverse diagonal Hessian.
    Dh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauRule {
    Ruop,
    Rbpm,
    Qdruop,
    Qdrbpm,
    /// Backpropagation with rates divided by symbol frequency.
    Fb,
    Rms,
}

impl TauRule {
    pub fn is_invariant(self) -> bool {
        !matches!(self, TauRule::Fb | TauRule::Rms)
    }
}

macro_rules! name_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = GlnnError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)+
                    _ => Err(GlnnError::InvalidArgument(format!("unknown rule {s:?}"))),
                }
            }
        }
    };
}

name_enum!(WritingRule, Qdh => "qdh", Dh => "dh");
name_enum!(TauRule, Ruop => "ruop", Rbpm => "rbpm", Qdruop => "qdruop", Qdrbpm => "qdrbpm", Fb => "fb", Rms => "rms");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub writing_rule: WritingRule,
    pub tau_rule: TauRule,
    /// Initial rates; `None` means `1 / N`.
    pub eta_w: Option<f64>,
    pub eta_tau: Option<f64>,
    /// Diagonal dampening of transition blocks and of the startup update.
    pub dampening: f64,
    /// Replaces the writing-metric dampening `nu_y + unit roundoff` when set.
    pub writing_dampening: Option<f64>,
    pub rms_decay: f64,
    pub rms_floor: f64,
    pub max_halvings: u32,
    pub eta_growth: f64,
    /// Full (w + tau) steps.
    pub max_steps: Option<usize>,
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            writing_rule: WritingRule::Qdh,
            tau_rule: TauRule::Rbpm,
            eta_w: None,
            eta_tau: None,
            dampening: metric::DEFAULT_DAMPENING,
            writing_dampening: None,
            rms_decay: 0.9,
            rms_floor: 1e-8,
            max_halvings: 30,
            eta_growth: 1.1,
            max_steps: None,
            time_budget_secs: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        if kind == ModelKind::Rnn && matches!(self.tau_rule, TauRule::Ruop | TauRule::Rbpm) {
            return Err(GlnnError::Unsupported(format!(
                "{} for RNNs; use qd{}",
                self.tau_rule, self.tau_rule
            )));
        }
        for (name, eta) in [("eta_w", self.eta_w), ("eta_tau", self.eta_tau)] {
            if let Some(e) = eta {
                if !(e > 0.0) || !e.is_finite() {
                    return Err(GlnnError::InvalidArgument(format!("{name} must be > 0")));
                }
            }
        }
        if !(self.dampening >= 0.0) || !(self.eta_growth >= 1.0) {
            return Err(GlnnError::InvalidArgument("bad dampening or growth factor".into()));
        }
        if self.max_steps.is_none() && self.time_budget_secs.is_none() {
            return Err(GlnnError::InvalidArgument("a step or time budget is required".into()));
        }
        Ok(())
    }
}

/// Halve-or-grow learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRate {
    pub eta: f64,
    pub growth: f64,
    pub max_halvings: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchOutcome {
    Accepted { value: f64, halvings: u32 },
    Stalled,
}

impl LearningRate {
    /// Tries `eval(eta)` until it is not below `current`, halving `eta` on
    /// each failure. `None` (divergence, non-finite) counts as a failure.
    /// On success `eta` grows; after `max_halvings` failed retries it is
    /// restored to its starting value and the step is dropped.
    pub fn search<F: FnMut(f64) -> Option<f64>>(&mut self, current: f64, mut eval: F) -> SearchOutcome {
        let start = self.eta;
        for halvings in 0..=self.max_halvings {
            match eval(self.eta) {
                Some(v) if v >= current => {
                    self.eta *= self.growth;
                    return SearchOutcome::Accepted { value: v, halvings };
                }
                _ => self.eta /= 2.0,
            }
        }
        self.eta = start;
        SearchOutcome::Stalled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    W,
    Tau,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phase: Phase,
    pub eta_w: f64,
    pub eta_tau: f64,
    pub train_ll_bits: f64,
    /// Regularized validation score after a full step.
    pub valid_ll_bits: Option<f64>,
    pub wall_ms: u128,
    pub accepted: bool,
    pub halvings: u32,
}

/// What an observer wants after a record is logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    pub eta_w: LearningRate,
    pub eta_tau: LearningRate,
    pub step: usize,
    /// Current training log-likelihood, nats.
    pub train_ll: f64,
    pub best_valid_bits: f64,
    pub best_params: ModelParams,
    pub best_step: usize,
    pub log: Vec<StepRecord>,
    pub stalls: usize,
    rms: Option<ParamSet>,
    writing_eps: Vec<f64>,
    stats: SymbolStats,
    started: Instant,
}

impl TrainState {
    pub fn new(config: &TrainerConfig, params: ModelParams, train_seq: &SymbolSequence) -> Result<Self> {
        config.validate(params.kind())?;
        let n = params.n_units() as f64;
        let stats = compute_stats_for_size(train_seq, params.alphabet_size());
        let writing_eps = match config.writing_dampening {
            Some(e) => vec![e; params.alphabet_size()],
            None => metric::writing_dampening(&stats),
        };
        let rate = |eta: Option<f64>| LearningRate {
            eta: eta.unwrap_or(1.0 / n),
            growth: config.eta_growth,
            max_halvings: config.max_halvings,
        };
        let train_ll = log_likelihood(&params, train_seq)?;
        Ok(Self {
            eta_w: rate(config.eta_w),
            eta_tau: rate(config.eta_tau),
            step: 0,
            train_ll,
            best_valid_bits: f64::NEG_INFINITY,
            best_params: params.clone(),
            best_step: 0,
            log: Vec::new(),
            stalls: 0,
            rms: None,
            writing_eps,
            stats,
            started: Instant::now(),
            params,
        })
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    fn record(&mut self, phase: Phase, valid: Option<f64>, accepted: bool, halvings: u32) -> &StepRecord {
        self.log.push(StepRecord {
            step: self.step,
            phase,
            eta_w: self.eta_w.eta,
            eta_tau: self.eta_tau.eta,
            train_ll_bits: self.train_ll * LOG2_E,
            valid_ll_bits: valid,
            wall_ms: self.started.elapsed().as_millis(),
            accepted,
            halvings,
        });
        log::debug!("{:?}", self.log.last());
        self.log.last().expect("just pushed")
    }

    fn accept(&mut self, outcome: SearchOutcome, cand: Option<ModelParams>, phase: Phase) -> (bool, u32) {
        match (outcome, cand) {
            (SearchOutcome::Accepted { value, halvings }, Some(p)) => {
                self.params = p;
                self.train_ll = value;
                (true, halvings)
            }
            _ => {
                self.stalls += 1;
                log::warn!("{phase:?} phase stalled at step {}", self.step);
                (false, 0)
            }
        }
    }

    /// Writing-weight step.
    pub fn w_phase(&mut self, config: &TrainerConfig, seq: &SymbolSequence) -> Result<&StepRecord> {
        let fwd = forward(&self.params, seq)?;
        self.train_ll = fwd.log_likelihood;
        let w_grad = crate::backprop::writing_grad(&fwd.tape, seq);
        let terms = metric::writing_hessian_terms(&fwd.tape, seq, &self.writing_eps);
        let dw = match config.writing_rule {
            WritingRule::Qdh => metric::qd_writing_direction(&w_grad, &terms)?,
            WritingRule::Dh => metric::dh_writing_direction(&w_grad, &terms)?,
        };
        let dir = ParamSet {
            w: dw,
            ..self.params.zeros_like()
        };
        let mut best = None;
        let params = &self.params;
        let outcome = self.eta_w.search(self.train_ll, |eta| {
            let cand = params.with_w_step(eta, &dir);
            let ll = log_likelihood(&cand, seq).ok().filter(|v| v.is_finite())?;
            best = Some(cand);
            Some(ll)
        });
        let (ok, h) = self.accept(outcome, best, Phase::W);
        Ok(self.record(Phase::W, None, ok, h))
    }

    /// Transition-weight (and startup) step.
    pub fn tau_phase(&mut self, config: &TrainerConfig, seq: &SymbolSequence) -> Result<&StepRecord> {
        let fwd = forward(&self.params, seq)?;
        self.train_ll = fwd.log_likelihood;
        let bp = backward(&self.params, &fwd.tape, seq);
        let dir = match config.tau_rule {
            TauRule::Ruop | TauRule::Rbpm | TauRule::Qdruop | TauRule::Qdrbpm => {
                let (kind, mode) = match config.tau_rule {
                    TauRule::Ruop => (MetricKind::Ruop, BlockMode::Full),
                    TauRule::Rbpm => (MetricKind::Rbpm, BlockMode::Full),
                    TauRule::Qdruop => (MetricKind::Ruop, BlockMode::QuasiDiagonal),
                    _ => (MetricKind::Rbpm, BlockMode::QuasiDiagonal),
                };
                metric::transition_direction(&self.params, &fwd.tape, &bp, seq, kind, mode, config.dampening)?
            }
            TauRule::Fb => fb_direction(&self.params, &bp, &self.stats),
            TauRule::Rms => {
                let state = self.rms.get_or_insert_with(|| self.params.zeros_like());
                rms_direction(&bp.grad, state, config.rms_decay, config.rms_floor)
            }
        };
        let mut best = None;
        let params = &self.params;
        let outcome = self.eta_tau.search(self.train_ll, |eta| {
            let cand = params.with_transition_step(eta, &dir);
            let ll = log_likelihood(&cand, seq).ok().filter(|v| v.is_finite())?;
            best = Some(cand);
            Some(ll)
        });
        let (ok, h) = self.accept(outcome, best, Phase::Tau);
        Ok(self.record(Phase::Tau, None, ok, h))
    }

    fn score_validation(&mut self, valid: &SymbolSequence) -> f64 {
        let v = regularized_validation_ll(&self.params, valid).unwrap_or(f64::NEG_INFINITY);
        if v > self.best_valid_bits {
            self.best_valid_bits = v;
            self.best_params = self.params.clone();
            self.best_step = self.step;
        }
        v
    }
}

/// Frequency-adjusted backpropagation: the plain gradient with the rate of
/// every symbol-`y` parameter divided by `nu~_y` (absent symbols get 0).
pub fn fb_direction(params: &ModelParams, bp: &BackwardPass, stats: &SymbolStats) -> ParamSet {
    let mut d = bp.grad.clone();
    d.w.iter_mut().for_each(|x| *x = 0.0);
    let inv = |y: usize| {
        let f = stats.nu_tilde[y];
        if f > 0.0 {
            1.0 / f
        } else {
            0.0
        }
    };
    let na = params.alphabet_size();
    let topo = params.topology();
    if params.kind().is_gated() {
        for j in 1..=topo.n_units() {
            let s = topo.incoming(j).len();
            for y in 0..na {
                let base = params.tau_block(j, y);
                d.tau[base..base + s].iter_mut().for_each(|g| *g *= inv(y));
            }
        }
    } else {
        for j in 1..=topo.n_units() {
            for y in 0..na {
                d.rho[params.rho_index(j, y)] *= inv(y);
            }
        }
    }
    d
}

/// `r <- decay r + (1 - decay) g^2`, direction `g / (sqrt r + floor)`, per
/// parameter (writing weights excluded).
pub fn rms_direction(grad: &ParamSet, state: &mut ParamSet, decay: f64, floor: f64) -> ParamSet {
    let upd = |g: &[f64], r: &mut [f64]| -> Vec<f64> {
        g.iter()
            .zip(r.iter_mut())
            .map(|(&g, r)| {
                *r = decay * *r + (1.0 - decay) * g * g;
                g / (r.sqrt() + floor)
            })
            .collect()
    };
    ParamSet {
        w: vec![0.0; grad.w.len()],
        tau: upd(&grad.tau, &mut state.tau),
        rho: upd(&grad.rho, &mut state.rho),
        v0: upd(&grad.v0, &mut state.v0),
    }
}

/// Trains until a budget runs out; see [`train_with_observer`].
pub fn train(
    config: &TrainerConfig,
    params: ModelParams,
    train_seq: &SymbolSequence,
    valid_seq: &SymbolSequence,
) -> Result<TrainState> {
    train_with_observer(config, params, train_seq, valid_seq, |_, _| Control::Continue)
}

/// Alternates w and tau phases (w first), scoring the validation sequence
/// after every full step and keeping the best snapshot. `observer` sees
/// every full-step record with the current parameters and may stop the run
/// early.
pub fn train_with_observer<F: FnMut(&StepRecord, &ModelParams) -> Control>(
    config: &TrainerConfig,
    params: ModelParams,
    train_seq: &SymbolSequence,
    valid_seq: &SymbolSequence,
    mut observer: F,
) -> Result<TrainState> {
    let mut st = TrainState::new(config, params, train_seq)?;
    let budget = config.time_budget_secs.map(Duration::from_secs_f64);
    let v = st.score_validation(valid_seq);
    let rec = st.record(Phase::Init, Some(v), true, 0).clone();
    if observer(&rec, &st.params) == Control::Stop {
        return Ok(st);
    }
    loop {
        if config.max_steps.is_some_and(|m| st.step >= m) || budget.is_some_and(|b| st.elapsed() >= b) {
            break;
        }
        st.w_phase(config, train_seq)?;
        st.tau_phase(config, train_seq)?;
        st.step += 1;
        let v = st.score_validation(valid_seq);
        let last = st.log.last_mut().expect("tau record");
        last.step = st.step;
        last.valid_ll_bits = Some(v);
        let rec = last.clone();
        if observer(&rec, &st.params) == Control::Stop {
            break;
        }
    }
    Ok(st)
}

/// True when the training log-likelihood never decreases across records.
pub fn is_monotone(log: &[StepRecord]) -> bool {
    log.windows(2).all(|w| w[1].train_ll_bits >= w[0].train_ll_bits)
}
