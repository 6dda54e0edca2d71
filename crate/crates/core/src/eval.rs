//! Validation scoring, regret, sampling, single runs and sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{GeneratedCorpus, TaskSpec};
use crate::dynamics::{log_likelihood, Activation, ModelKind, ModelParams, Runner};
use crate::error::{GlnnError, Result};
use crate::init::{initialize, InitPlan};
use crate::seqdata::{compute_stats_for_size, MaskRule, SymbolSequence};
use crate::topology::{build_random_graph, Connectivity};
use crate::trainer::{is_monotone, train, StepRecord, TauRule, TrainerConfig, WritingRule};
use crate::LOG2_E;

/// Validation log-likelihood in bits with `pi_t` replaced by
/// `(1 - 1/(t+2)) pi_t + 1/(t+2) * uniform`.
pub fn regularized_validation_ll(params: &ModelParams, seq: &SymbolSequence) -> Result<f64> {
    let na = params.alphabet_size() as f64;
    let mut run = Runner::new(params);
    let mut total = 0.0;
    for (t, &x) in seq.tokens().iter().enumerate() {
        if seq.mask()[t] {
            let lambda = 1.0 / (t as f64 + 2.0);
            let p = run.probs()[x];
            if !p.is_finite() {
                return Err(GlnnError::DivergentDynamics { t });
            }
            total += ((1.0 - lambda) * p + lambda / na).log2();
        }
        run.advance(x);
    }
    Ok(total)
}

/// Unregularized masked log-likelihood in bits.
pub fn raw_validation_ll(params: &ModelParams, seq: &SymbolSequence) -> Result<f64> {
    Ok(log_likelihood(params, seq)? * LOG2_E)
}

/// `oracle - score`; positive when the model is worse than the true law.
pub fn cumulative_regret(score_bits: f64, oracle_bits: f64) -> f64 {
    oracle_bits - score_bits
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XorScore {
    /// Fraction of answers whose correct bit gets probability `<= 1/2`.
    pub error: f64,
    /// Mean `-log2 pi(correct)` per answer.
    pub log_loss_bits: f64,
    pub answers: usize,
}

pub fn xor_score(params: &ModelParams, seq: &SymbolSequence) -> Result<XorScore> {
    let mut run = Runner::new(params);
    let (mut wrong, mut loss, mut n) = (0usize, 0.0, 0usize);
    for (t, &x) in seq.tokens().iter().enumerate() {
        if seq.mask()[t] {
            let p = run.probs()[x];
            if !p.is_finite() {
                return Err(GlnnError::DivergentDynamics { t });
            }
            wrong += (p <= 0.5) as usize;
            loss -= run.log_prob(x) * LOG2_E;
            n += 1;
        }
        run.advance(x);
    }
    if n == 0 {
        return Err(GlnnError::NoPredictedPositions);
    }
    Ok(XorScore {
        error: wrong as f64 / n as f64,
        log_loss_bits: loss / n as f64,
        answers: n,
    })
}

pub fn xor_classification_error(params: &ModelParams, seq: &SymbolSequence) -> Result<f64> {
    Ok(xor_score(params, seq)?.error)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    /// Set when the dynamics diverged before `length` symbols.
    pub truncated: bool,
}

/// Draws `x_t ~ pi_t` and feeds it back.
pub fn sample(params: &ModelParams, length: usize, seed: u64) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = Runner::new(params);
    let mut tokens = Vec::with_capacity(length);
    for _ in 0..length {
        let Ok(dist) = WeightedIndex::new(run.probs()) else {
            return Sample { tokens, truncated: true };
        };
        let x = dist.sample(&mut rng);
        tokens.push(x);
        run.advance(x);
    }
    Sample { tokens, truncated: false }
}

/// `round(4 * sqrt(2)^k)` for every `k` whose value lies in `[min, max]`.
pub fn size_schedule(min: usize, max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for k in 0.. {
        let n = (4.0 * 2f64.powf(k as f64 / 2.0)).round() as usize;
        if n > max {
            break;
        }
        if n >= min {
            out.push(n);
        }
    }
    out
}

/// Model family and its pair of update rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleSet {
    pub model: ModelKind,
    pub writing: WritingRule,
    pub tau: TauRule,
}

impl RuleSet {
    pub fn new(model: ModelKind, writing: WritingRule, tau: TauRule) -> Self {
        Self { model, writing, tau }
    }

    /// Invariant GLNN rules plus the non-invariant baselines.
    pub fn standard() -> Vec<Self> {
        use ModelKind::*;
        use TauRule::*;
        use WritingRule::*;
        vec![
            Self::new(Glnn, Qdh, Rbpm),
            Self::new(Glnn, Qdh, Ruop),
            Self::new(Glnn, Qdh, Qdrbpm),
            Self::new(Glnn, Qdh, Qdruop),
            Self::new(Glnn, Dh, Fb),
            Self::new(Gnn, Qdh, Rbpm),
            Self::new(Rnn, Dh, Fb),
            Self::new(Rnn, Qdh, Qdrbpm),
        ]
    }
}

/// Where a run's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Generated { spec: TaskSpec, seed: u64 },
    Files { train: String, valid: String, mask: MaskRule },
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub data: DataSource,
    pub model: ModelKind,
    pub activation: Activation,
    pub units: usize,
    pub connectivity: Connectivity,
    pub degree: usize,
    /// Topology seed.
    pub graph_seed: u64,
    pub init: InitPlan,
    pub trainer: TrainerConfig,
}

impl ExperimentManifest {
    /// Content hash of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(&bytes))[..16].to_string()
    }

    pub fn rules(&self) -> RuleSet {
        RuleSet::new(self.model, self.trainer.writing_rule, self.trainer.tau_rule)
    }

    pub fn mask_rule(&self) -> MaskRule {
        match &self.data {
            DataSource::Generated { spec, .. } => spec.mask_rule(),
            DataSource::Files { mask, .. } => *mask,
        }
    }
}

/// Training and validation data with an optional oracle score.
#[derive(Debug, Clone)]
pub struct RunData {
    pub alphabet_size: usize,
    pub train: SymbolSequence,
    pub valid: SymbolSequence,
    pub oracle_bits: Option<f64>,
}

impl From<&GeneratedCorpus> for RunData {
    fn from(c: &GeneratedCorpus) -> Self {
        Self {
            alphabet_size: c.alphabet.len(),
            train: c.train.clone(),
            valid: c.valid.clone(),
            oracle_bits: Some(c.true_model_ll_valid),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub hash: String,
    pub manifest: ExperimentManifest,
    pub best_valid_bits: Option<f64>,
    pub best_step: usize,
    pub oracle_bits: Option<f64>,
    pub regret: Option<f64>,
    pub xor: Option<XorScore>,
    pub final_train_bits: Option<f64>,
    pub steps: usize,
    pub stalls: usize,
    pub monotone: bool,
    pub wall_secs: f64,
    pub error: Option<String>,
    pub curve: Vec<StepRecord>,
    #[serde(skip)]
    pub model: Option<ModelParams>,
}

impl RunResult {
    fn failed(manifest: &ExperimentManifest, oracle: Option<f64>, err: GlnnError, wall: f64) -> Self {
        Self {
            hash: manifest.hash(),
            manifest: manifest.clone(),
            best_valid_bits: None,
            best_step: 0,
            oracle_bits: oracle,
            regret: None,
            xor: None,
            final_train_bits: None,
            steps: 0,
            stalls: 0,
            monotone: true,
            wall_secs: wall,
            error: Some(err.to_string()),
            curve: Vec::new(),
            model: None,
        }
    }
}

/// Builds the initial model described by `manifest`.
pub fn build_model(manifest: &ExperimentManifest, train: &SymbolSequence, na: usize) -> Result<ModelParams> {
    let topo = build_random_graph(manifest.units, manifest.degree, manifest.graph_seed)?;
    let stats = compute_stats_for_size(train, na);
    initialize(manifest.model, manifest.activation, &topo, na, &stats, &manifest.init)
}

/// Trains one configuration; failures are captured in the result.
pub fn run_experiment(manifest: &ExperimentManifest, data: &RunData) -> RunResult {
    let start = Instant::now();
    let go = || -> Result<RunResult> {
        let params = build_model(manifest, &data.train, data.alphabet_size)?;
        let st = train(&manifest.trainer, params, &data.train, &data.valid)?;
        let best = st.best_valid_bits;
        let xor = match manifest.mask_rule() {
            MaskRule::Xor => xor_score(&st.best_params, &data.valid).ok(),
            MaskRule::All => None,
        };
        Ok(RunResult {
            hash: manifest.hash(),
            manifest: manifest.clone(),
            best_valid_bits: Some(best),
            best_step: st.best_step,
            oracle_bits: data.oracle_bits,
            regret: data.oracle_bits.map(|o| cumulative_regret(best, o)),
            xor,
            final_train_bits: Some(st.train_ll * LOG2_E),
            steps: st.step,
            stalls: st.stalls,
            monotone: is_monotone(&st.log),
            wall_secs: start.elapsed().as_secs_f64(),
            error: None,
            curve: st.log,
            model: Some(st.best_params),
        })
    };
    go().unwrap_or_else(|e| RunResult::failed(manifest, data.oracle_bits, e, start.elapsed().as_secs_f64()))
}

/// Grid of configurations sharing one data source and trainer template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub data: DataSource,
    pub rule_sets: Vec<RuleSet>,
    pub sizes: Vec<usize>,
    pub connectivities: Vec<Connectivity>,
    pub seeds: Vec<u64>,
    pub activation: Activation,
    /// Rules inside are overridden per rule set.
    pub trainer: TrainerConfig,
    pub workers: usize,
}

impl SweepConfig {
    pub fn manifests(&self, alphabet_size: usize) -> Vec<ExperimentManifest> {
        let mut out = Vec::new();
        for rs in &self.rule_sets {
            for &conn in &self.connectivities {
                for &n in &self.sizes {
                    for &seed in &self.seeds {
                        out.push(ExperimentManifest {
                            data: self.data.clone(),
                            model: rs.model,
                            activation: self.activation,
                            units: n,
                            connectivity: conn,
                            degree: conn.degree(rs.model, alphabet_size, n),
                            graph_seed: seed,
                            init: InitPlan::new(seed),
                            trainer: TrainerConfig {
                                writing_rule: rs.writing,
                                tau_rule: rs.tau,
                                ..self.trainer.clone()
                            },
                        });
                    }
                }
            }
        }
        out.sort_by_key(|m| m.hash());
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    /// Sorted by manifest hash.
    pub rows: Vec<RunResult>,
}

impl SweepResult {
    /// Best row of a rule set by validation score.
    pub fn best(&self, rules: RuleSet) -> Option<&RunResult> {
        self.rows
            .iter()
            .filter(|r| r.manifest.rules() == rules && r.best_valid_bits.is_some())
            .max_by(|a, b| a.best_valid_bits.partial_cmp(&b.best_valid_bits).expect("finite or -inf"))
    }
}

/// Runs every configuration, at most `config.workers` at a time.
pub fn run_sweep(config: &SweepConfig, data: &RunData) -> SweepResult {
    let manifests = config.manifests(data.alphabet_size);
    let next = AtomicUsize::new(0);
    let rows = Mutex::new(Vec::with_capacity(manifests.len()));
    let workers = config.workers.clamp(1, manifests.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(m) = manifests.get(k) else { break };
                let r = run_experiment(m, data);
                log::info!(
                    "{} {} N={} d={} best={:?} regret={:?}",
                    r.hash,
                    m.model,
                    m.units,
                    m.degree,
                    r.best_valid_bits,
                    r.regret
                );
                rows.lock().expect("no poisoned workers").push(r);
            });
        }
    });
    let mut rows = rows.into_inner().expect("no poisoned workers");
    rows.sort_by(|a, b| a.hash.cmp(&b.hash));
    SweepResult {
        config: config.clone(),
        rows,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CURVE_HEADER: &str = "step,phase,wall_secs,eta_w,eta_tau,train_ll_bits,valid_ll_bits,accepted,halvings";

pub fn curve_csv(curve: &[StepRecord]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for r in curve {
        curve_line(&mut s, r);
    }
    s
}

fn curve_line(s: &mut String, r: &StepRecord) {
    let phase = serde_json::to_value(r.phase).expect("phase serializes");
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{}",
        r.step,
        phase.as_str().unwrap_or_default(),
        r.wall_ms as f64 / 1000.0,
        r.eta_w,
        r.eta_tau,
        r.train_ll_bits,
        opt(r.valid_ll_bits),
        r.accepted,
        r.halvings
    );
}

pub const TABLE_HEADER: &str =
    "hash,model,rule_w,rule_tau,units,degree,seed,best_valid_bits,oracle_bits,regret,xor_error,steps,wall_secs,error";

/// One row per configuration.
pub fn results_csv(rows: &[RunResult]) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    for r in rows {
        let m = &r.manifest;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.hash,
            m.model,
            m.trainer.writing_rule,
            m.trainer.tau_rule,
            m.units,
            m.degree,
            m.graph_seed,
            opt(r.best_valid_bits),
            opt(r.oracle_bits),
            opt(r.regret),
            opt(r.xor.map(|x| x.error)),
            r.steps,
            r.wall_secs,
            r.error.as_deref().unwrap_or_default().replace(',', ";")
        );
    }
    s
}

/// Writes `manifest.json`, `curve.csv`, `result.json` and, when present,
/// the best model as `model.json`.
pub fn write_run(dir: impl AsRef<Path>, r: &RunResult) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&r.manifest)?)?;
    fs::write(dir.join("curve.csv"), curve_csv(&r.curve))?;
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(r)?)?;
    if let Some(m) = &r.model {
        fs::write(dir.join("model.json"), m.to_json()?)?;
    }
    Ok(())
}

/// Sweep outputs: `manifest.json` (config and expanded manifests),
/// `curve.csv` (all curves keyed by hash), `result.json` and `results.csv`.
pub fn write_sweep(dir: impl AsRef<Path>, s: &SweepResult) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifests: Vec<&ExperimentManifest> = s.rows.iter().map(|r| &r.manifest).collect();
    let m = serde_json::json!({ "sweep": s.config, "runs": manifests });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    let mut curves = format!("hash,{CURVE_HEADER}\n");
    for r in &s.rows {
        for rec in &r.curve {
            let mut line = String::new();
            curve_line(&mut line, rec);
            let _ = write!(curves, "{},{line}", r.hash);
        }
    }
    fs::write(dir.join("curve.csv"), curves)?;
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(s)?)?;
    fs::write(dir.join("results.csv"), results_csv(&s.rows))?;
    Ok(())
}
