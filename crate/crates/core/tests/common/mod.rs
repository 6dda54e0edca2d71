#![allow(dead_code)]

use glnn::dynamics::{Activation, ModelKind, ModelParams};
use glnn::seqdata::SymbolSequence;
use glnn::topology::build_random_graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: [ModelKind; 3] = [ModelKind::Rnn, ModelKind::Gnn, ModelKind::Glnn];

/// Random model with weights of moderate size.
pub fn random_params(kind: ModelKind, act: Activation, n: usize, na: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let d = rng.gen_range(1..=n);
    let topo = build_random_graph(n, d, rng.gen()).unwrap();
    let mut p = ModelParams::zeros(kind, act, topo, na).unwrap();
    let scale = 1.0 / (d as f64 + 1.0).sqrt();
    p.w.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    p.tau.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0) * scale);
    p.rho.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    for j in 1..p.v0.len() {
        if kind.is_leaky() {
            p.v0[j] = rng.gen_range(-1.0..1.0);
        }
    }
    p
}

/// Random sequence with a random mask that predicts at least one position.
pub fn random_seq(na: usize, t: usize, rng: &mut ChaCha8Rng) -> SymbolSequence {
    let tokens: Vec<usize> = (0..t).map(|_| rng.gen_range(0..na)).collect();
    let mut mask: Vec<bool> = (0..t).map(|_| rng.gen_bool(0.8)).collect();
    let k = rng.gen_range(0..t);
    mask[k] = true;
    SymbolSequence::new(tokens, mask, na).unwrap()
}

pub struct Instance {
    pub params: ModelParams,
    pub seq: SymbolSequence,
}

pub fn instance(kind: ModelKind, max_n: usize, max_t: usize, max_a: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let na = rng.gen_range(2..=max_a);
    let t = rng.gen_range(1..=max_t);
    let act = if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::Logistic };
    let params = random_params(kind, act, n, na, &mut rng);
    let seq = random_seq(na, t, &mut rng);
    Instance { params, seq }
}

/// `|a - b| <= max(rel * max(|a|, |b|), abs)`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * a.abs().max(b.abs())).max(abs)
}
