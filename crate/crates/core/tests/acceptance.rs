//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test -p glnn --test acceptance` runs the fast criteria (1-6, 11).
//! The full-scale runs (7-10) take hours and run with
//! `cargo test --release -p glnn --test acceptance -- --ignored [ids...]`.
//! Their grids can be narrowed with `GLNN_C<id>_{SEEDS,SIZES,BUDGET_SEC}`.

mod common;

use std::time::Instant;

use common::{close, instance, KINDS};
use glnn::backprop::{all_coords, analytic, backward, finite_diff_oracle, writing_grad, Family};
use glnn::datagen::{gen_alphabet, gen_anbn, gen_music, gen_xor, GeneratedCorpus, TaskSpec};
use glnn::dynamics::{forward, Activation, ModelKind, ModelParams};
use glnn::eval::{build_model, cumulative_regret, size_schedule, xor_score, DataSource, ExperimentManifest, RuleSet};
use glnn::init::{initialize, linearized_prediction, unit_signal, InitPlan};
use glnn::metric::oracle::{unfolding_oracle, OracleCoord};
use glnn::metric::{metric_block_accumulate, modulus, transition_direction, writing_hessian_terms, BlockMode, MetricKind};
use glnn::seqdata::compute_stats_for_size;
use glnn::topology::{build_random_graph, Connectivity};
use glnn::trainer::{is_monotone, train, train_with_observer, Control, TauRule, TrainerConfig, WritingRule};
use glnn::LOG2_E;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Check = fn() -> Outcome;

struct Criterion {
    id: u32,
    name: &'static str,
    heavy: bool,
    run: Check,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "gradient oracle suite", heavy: false, run: c1_gradients },
    Criterion { id: 2, name: "metric oracle suite", heavy: false, run: c2_metric_oracle },
    Criterion { id: 3, name: "writing-metric Hessian identity", heavy: false, run: c3_writing_hessian },
    Criterion { id: 4, name: "affine invariance of RUOP/RBPM updates", heavy: false, run: c4_affine },
    Criterion { id: 5, name: "monotone training log-likelihood", heavy: false, run: c5_monotone },
    Criterion { id: 6, name: "linearized regime at initialization", heavy: false, run: c6_linearized },
    Criterion { id: 7, name: "a^n b^n regret <= 60 bits", heavy: true, run: c7_anbn },
    Criterion { id: 8, name: "alphabet regret <= 2500 bits and beats DH+FB", heavy: true, run: c8_alphabet },
    Criterion { id: 9, name: "music regret <= 2500 bits and beats RNN+FB", heavy: true, run: c9_music },
    Criterion { id: 10, name: "distant XOR error < 5%", heavy: true, run: c10_xor },
    Criterion { id: 11, name: "oracle self-consistency", heavy: false, run: c11_oracles },
];

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ignored = args.iter().any(|a| a == "--ignored");
    let include = args.iter().any(|a| a == "--include-ignored");
    let ids: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    if args.iter().any(|a| a == "--list") {
        for c in CRITERIA {
            println!("criterion {}: test", c.id);
        }
        return;
    }
    let mut failed = 0;
    for c in CRITERIA {
        if !ids.is_empty() && !ids.contains(&c.id) {
            continue;
        }
        let selected = if ignored { c.heavy } else { include || !c.heavy };
        if !selected {
            if c.heavy {
                println!("criterion {:>2} SKIP {} (full-scale; run with --ignored)", c.id, c.name);
            }
            continue;
        }
        let start = Instant::now();
        let o = (c.run)();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} {}: {} [{:.1}s]",
            c.id,
            c.name,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += (!o.pass) as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---- 1 ----

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let (mut worst_rel, mut checked, mut bad) = (0.0f64, 0usize, Vec::new());
    let mut families = Vec::new();
    for kind in KINDS {
        for seed in 0..20 {
            let inst = instance(kind, 5, 10, 4, 1000 + seed);
            let (p, seq) = (&inst.params, &inst.seq);
            let f = forward(p, seq).unwrap();
            let bp = backward(p, &f.tape, seq);
            for coord in all_coords(p) {
                let a = analytic(p, &bp, coord);
                let fd = finite_diff_oracle(p, seq, coord, 1e-5).unwrap();
                checked += 1;
                if !families.contains(&(kind, coord.family())) {
                    families.push((kind, coord.family()));
                }
                if !close(a, fd, 1e-6, 1e-8) {
                    bad.push(format!("{kind} seed {seed} {coord:?}: {a} vs {fd}"));
                }
                worst_rel = worst_rel.max((a - fd).abs() / a.abs().max(fd.abs()).max(1.0));
            }
        }
    }
    let need = [
        (ModelKind::Rnn, Family::Rho),
        (ModelKind::Glnn, Family::V0),
        (ModelKind::Gnn, Family::Tau),
        (ModelKind::Rnn, Family::W),
    ];
    let covered = need.iter().all(|f| families.contains(f));
    let secs = start.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && covered && secs < 10.0,
        format!(
            "{checked} derivatives on 60 instances, worst err {worst_rel:.2e} relative to max(1, |g|) (tol 1e-6 rel, 1e-8 abs), {} mismatches{}, {secs:.2}s (< 10s)",
            bad.len(),
            bad.first().map(|s| format!(" e.g. {s}")).unwrap_or_default()
        ),
    )
}

// ---- 2 ----

fn c2_metric_oracle() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut entries, mut nonzero_cross, mut instances) = (0.0f64, 0usize, 0usize, 0usize);
    for kind in [ModelKind::Glnn, ModelKind::Gnn] {
        for seed in 0..20 {
            let inst = instance(kind, 4, 8, 4, 2000 + seed);
            let (p, seq) = (&inst.params, &inst.seq);
            instances += 1;
            let f = forward(p, seq).unwrap();
            let bp = backward(p, &f.tape, seq);
            let na = p.alphabet_size();
            for mk in [MetricKind::Ruop, MetricKind::Rbpm] {
                let m = modulus(mk, p, &f.tape, seq, &bp);
                let blocks = metric_block_accumulate(p, &f.tape, &m, seq).unwrap();
                let oracle = unfolding_oracle(p, seq, mk).unwrap();
                for j in 1..=p.n_units() {
                    let inc = p.topology().incoming(j);
                    let unit = &oracle.units[j - 1];
                    let s = blocks.size(j);
                    for y in 0..na {
                        let b = blocks.block(j, y);
                        for (k, &i) in inc.iter().enumerate() {
                            for (k2, &i2) in inc.iter().enumerate() {
                                let o = unit.entry(OracleCoord::Tau { i, y }, OracleCoord::Tau { i: i2, y });
                                let d = (b[k * s + k2] - o).abs();
                                worst = worst.max(d / o.abs().max(1.0));
                                entries += 1;
                            }
                        }
                    }
                    for &r in &unit.coords {
                        for &c in &unit.coords {
                            if let (OracleCoord::Tau { y, .. }, OracleCoord::Tau { y: y2, .. }) = (r, c) {
                                if y != y2 && unit.entry(r, c) != 0.0 {
                                    nonzero_cross += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && nonzero_cross == 0 && secs < 30.0,
        format!(
            "{entries} block entries on {instances} GLNN/GNN instances, worst err {worst:.2e} (tol 1e-10), {nonzero_cross} nonzero cross-symbol entries, {secs:.2}s (< 30s)"
        ),
    )
}

// ---- 3 ----

fn c3_writing_hessian() -> Outcome {
    let h = 1e-5;
    let (mut worst, mut bad, mut lib_bad) = (0.0f64, 0usize, 0usize);
    for seed in 0..10u64 {
        let kind = KINDS[seed as usize % 3];
        let inst = instance(kind, 4, 10, 4, 3000 + seed);
        let (p, seq) = (&inst.params, &inst.seq);
        let na = p.alphabet_size();
        let n1 = p.n_units() + 1;
        let dim = n1 * na;
        let tape = forward(p, seq).unwrap().tape;
        // Fisher matrix of the softmax output, directly from its definition
        let mut fisher = vec![0.0; dim * dim];
        for t in 0..seq.len() {
            if !seq.mask()[t] {
                continue;
            }
            let (a, pi) = (tape.a_at(t), tape.pi_at(t));
            for i in 0..n1 {
                for y in 0..na {
                    for i2 in 0..n1 {
                        for y2 in 0..na {
                            let cov = pi[y] * (if y == y2 { 1.0 } else { 0.0 } - pi[y2]);
                            fisher[(i * na + y) * dim + i2 * na + y2] += a[i] * a[i2] * cov;
                        }
                    }
                }
            }
        }
        // negative Hessian by central differences of the gradient
        for c in 0..dim {
            let grad_at = |delta: f64| {
                let mut q = p.clone();
                q.w[c] += delta;
                writing_grad(&forward(&q, seq).unwrap().tape, seq)
            };
            let (up, down) = (grad_at(h), grad_at(-h));
            for r in 0..dim {
                let hess = -(up[r] - down[r]) / (2.0 * h);
                let f = fisher[r * dim + c];
                if !close(f, hess, 1e-4, 1e-9) {
                    bad += 1;
                }
                worst = worst.max((f - hess).abs() / f.abs().max(hess.abs()).max(1.0));
            }
        }
        // the library's diagonal and bias-row terms are entries of this matrix
        let terms = writing_hessian_terms(&tape, seq, &vec![0.0; na]);
        for i in 0..n1 {
            for y in 0..na {
                let k = i * na + y;
                if !close(terms.diag[k], fisher[k * dim + k], 1e-12, 1e-15)
                    || !close(terms.row0[k], fisher[y * dim + k], 1e-12, 1e-15)
                {
                    lib_bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0 && lib_bad == 0,
        format!(
            "10 instances, worst err {worst:.2e} relative to max(1, |h|) (tol 1e-4 rel, 1e-9 abs), {bad} mismatches, {lib_bad} library-term mismatches"
        ),
    )
}

// ---- 4 ----

fn c4_affine() -> Outcome {
    let mut worst = 0.0f64;
    let mut runs = 0;
    let mut errors = Vec::new();
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
        let topo = build_random_graph(3, 3, seed).unwrap();
        let mut tanh = ModelParams::zeros(ModelKind::Glnn, Activation::Tanh, topo, 2).unwrap();
        tanh.w.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        tanh.tau.iter_mut().for_each(|x| *x = rng.gen_range(-0.3..0.3));
        // a decaying self-loop keeps the leaky units away from saturation, where
        // the undampened blocks become numerically singular
        for j in 1..=3 {
            for y in 0..2 {
                let base = tanh.tau_block(j, y);
                tanh.tau[base + j] = -0.5;
            }
        }
        tanh.v0.iter_mut().skip(1).for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let seq = common::random_seq(2, 200, &mut rng);
        let seq = &seq;
        let logistic = tanh.with_activation(Activation::Logistic);
        for mk in [MetricKind::Ruop, MetricKind::Rbpm] {
            let step = |p: &ModelParams| -> Result<ModelParams, String> {
                let f = forward(p, seq).map_err(|e| e.to_string())?;
                let bp = backward(p, &f.tape, seq);
                let d = transition_direction(p, &f.tape, &bp, seq, mk, BlockMode::Full, 0.0).map_err(|e| e.to_string())?;
                Ok(p.with_transition_step(0.1, &d))
            };
            let (a, b) = match (step(&tanh), step(&logistic)) {
                (Ok(a), Ok(b)) => (a, b),
                (e1, e2) => {
                    errors.push(format!("{mk}: {:?} {:?}", e1.err(), e2.err()));
                    continue;
                }
            };
            let back = b.with_activation(Activation::Tanh);
            // relative to the size of the update each coordinate received
            let scale = a
                .tau
                .iter()
                .zip(&tanh.tau)
                .chain(a.v0.iter().zip(&tanh.v0))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            let diff = a
                .tau
                .iter()
                .zip(&back.tau)
                .chain(a.v0.iter().zip(&back.v0))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff / scale);
            runs += 1;
        }
    }
    outcome(
        errors.is_empty() && worst <= 1e-8,
        format!(
            "{runs} undampened GLNN updates (N=3 full, A=2, T=200, eta 0.1) compared after mapping back, worst error / update size {worst:.2e} (tol 1e-8){}",
            if errors.is_empty() { String::new() } else { format!(", errors: {errors:?}") }
        ),
    )
}

// ---- 5 ----

fn c5_monotone() -> Outcome {
    let corpora = [
        gen_anbn(4, 5, 20, 1).unwrap(),
        gen_alphabet(3, 1).unwrap(),
        gen_music(30, 1).unwrap(),
        gen_xor(20, 10, 1).unwrap(),
    ];
    let rules = [
        (ModelKind::Glnn, WritingRule::Qdh, TauRule::Rbpm),
        (ModelKind::Glnn, WritingRule::Qdh, TauRule::Ruop),
        (ModelKind::Glnn, WritingRule::Qdh, TauRule::Qdrbpm),
        (ModelKind::Glnn, WritingRule::Dh, TauRule::Fb),
        (ModelKind::Gnn, WritingRule::Qdh, TauRule::Qdruop),
        (ModelKind::Gnn, WritingRule::Dh, TauRule::Rms),
        (ModelKind::Rnn, WritingRule::Dh, TauRule::Fb),
        (ModelKind::Rnn, WritingRule::Qdh, TauRule::Qdruop),
    ];
    let (mut runs, mut records, mut bad) = (0, 0, Vec::new());
    for c in &corpora {
        for (seed, &(kind, wr, tr)) in rules.iter().enumerate() {
            let cfg = TrainerConfig { writing_rule: wr, tau_rule: tr, max_steps: Some(12), ..Default::default() };
            let na = c.alphabet.len();
            let topo = build_random_graph(6, 3, seed as u64).unwrap();
            let st = compute_stats_for_size(&c.train, na);
            let p = initialize(kind, Activation::Tanh, &topo, na, &st, &InitPlan::new(seed as u64)).unwrap();
            let s = train(&cfg, p, &c.train, &c.valid).unwrap();
            runs += 1;
            records += s.log.len();
            if !is_monotone(&s.log) {
                bad.push(format!("{} {kind} {wr}+{tr}", c.spec.task()));
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!("{runs} runs over 4 tasks and 8 rule sets, {records} log records, non-monotone runs: {bad:?}"),
    )
}

// ---- 6 ----

fn c6_linearized() -> Outcome {
    const J: usize = 8;
    const STEPS: usize = 200;
    let c = gen_alphabet(10, 6).unwrap();
    let seq = &c.train;
    let na = c.alphabet.len();
    let topo = build_random_graph(10, 3, 6).unwrap();
    let st = compute_stats_for_size(seq, na);
    let errs: Vec<(f64, f64)> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&noise| {
            let plan = InitPlan { noise, ..InitPlan::new(6) };
            let p = initialize(ModelKind::Glnn, Activation::Tanh, &topo, na, &st, &plan).unwrap();
            let tape = forward(&p, seq).unwrap().tape;
            let unit = unit_signal(&p, &plan, J);
            let signal: Vec<f64> = seq.tokens()[..STEPS].iter().map(|&x| unit[x]).collect();
            let pred = linearized_prediction(&plan, J, &signal, STEPS);
            let (mut err, mut dev) = (0.0f64, 0.0f64);
            for t in 0..STEPS {
                let v = tape.v_at(t)[J];
                err = err.max((v - pred[t]).abs());
                dev = dev.max((v - plan.v_bar(J)).abs());
            }
            (err, dev)
        })
        .collect();
    let r1 = errs[0].0 / errs[1].0;
    let r2 = errs[1].0 / errs[2].0;
    // second order: halving the noise divides the error by about 4, and the
    // error is small against the first-order deviation
    let second_order = (3.0..=5.0).contains(&r1) && (3.0..=5.0).contains(&r2) && errs[0].0 < 0.1 * errs[0].1;

    let plan = InitPlan::new(6).without_noise();
    let p = initialize(ModelKind::Glnn, Activation::Tanh, &topo, na, &st, &plan).unwrap();
    let tape = forward(&p, seq).unwrap().tape;
    let exact = (0..seq.len()).all(|t| (1..=10).all(|j| tape.v_at(t)[j] == plan.v_bar(j)));
    outcome(
        second_order && exact,
        format!(
            "unit 8 over {STEPS} steps: max |V - linear| = {:.3e} / {:.3e} / {:.3e} at noise 1 / 0.5 / 0.25 (ratios {r1:.2}, {r2:.2}; deviation {:.3e}); noise 0 fixed point exact: {exact}",
            errs[0].0, errs[1].0, errs[2].0, errs[0].1
        ),
    )
}

// ---- 11 ----

fn c11_oracles() -> Outcome {
    let corpora = [
        ("alphabet", gen_alphabet(200, 11).unwrap()),
        ("music", gen_music(500, 11).unwrap()),
        ("xor", gen_xor(200, 30, 11).unwrap()),
        ("anbn", gen_anbn(10, 1024, 2048, 11).unwrap()),
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for (name, c) in &corpora {
        let rescored = c.spec.score_text(&c.valid_text);
        let rel = (rescored - c.true_model_ll_valid).abs() / c.true_model_ll_valid.abs().max(1e-300);
        let ok = rescored == c.true_model_ll_valid || rel <= 1e-9;
        pass &= ok && c.true_model_ll_valid <= 0.0;
        details.push(format!("{name} {:.6} vs {:.6}", c.true_model_ll_valid, rescored));
    }
    let anbn = &corpora[3].1;
    let expect = -10.0 * 1025f64.log2();
    let anbn_ok = ((anbn.true_model_ll_valid - expect) / expect).abs() <= 1e-12;
    pass &= anbn_ok;
    outcome(
        pass,
        format!(
            "re-scored oracle bits (tol 1e-9 rel): {}; a^n b^n defaults {:.4} bits = -10 log2(1025) ({anbn_ok})",
            details.join(", "),
            anbn.true_model_ll_valid
        ),
    )
}

// ---- full-scale helpers ----

fn env_list<T: std::str::FromStr>(key: &str) -> Option<Vec<T>> {
    let v = std::env::var(key).ok()?;
    Some(v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

struct Trial {
    rules: RuleSet,
    units: usize,
    conn: Connectivity,
    seed: u64,
}

struct TrialResult {
    best_bits: f64,
    regret: f64,
    steps: usize,
    monotone: bool,
    xor_error: Option<f64>,
}

fn run_trial<F: FnMut(&glnn::trainer::StepRecord, &ModelParams) -> Control>(
    c: &GeneratedCorpus,
    t: &Trial,
    budget: f64,
    observer: F,
) -> TrialResult {
    let na = c.alphabet.len();
    let m = ExperimentManifest {
        data: DataSource::Generated { spec: c.spec, seed: c.seed },
        model: t.rules.model,
        activation: Activation::Tanh,
        units: t.units,
        connectivity: t.conn,
        degree: t.conn.degree(t.rules.model, na, t.units),
        graph_seed: t.seed,
        init: InitPlan::new(t.seed),
        trainer: TrainerConfig {
            writing_rule: t.rules.writing,
            tau_rule: t.rules.tau,
            time_budget_secs: Some(budget),
            ..Default::default()
        },
    };
    let p = build_model(&m, &c.train, na).unwrap();
    let s = train_with_observer(&m.trainer, p, &c.train, &c.valid, observer).unwrap();
    let xor_error = match c.spec {
        TaskSpec::Xor { .. } => Some(xor_score(&s.best_params, &c.valid).unwrap().error),
        _ => None,
    };
    let r = TrialResult {
        best_bits: s.best_valid_bits,
        regret: cumulative_regret(s.best_valid_bits, c.true_model_ll_valid),
        steps: s.step,
        monotone: is_monotone(&s.log),
        xor_error,
    };
    println!(
        "    {} N={} d={} seed={} steps={} best={:.1} regret={:.1}{} monotone={}",
        t.rules_label(),
        t.units,
        m.degree,
        t.seed,
        r.steps,
        r.best_bits,
        r.regret,
        r.xor_error.map(|e| format!(" xor_err={e:.4}")).unwrap_or_default(),
        r.monotone
    );
    r
}

impl Trial {
    fn rules_label(&self) -> String {
        format!("{}:{}:{}", self.rules.model, self.rules.writing, self.rules.tau)
    }
}

fn glnn_rules() -> Vec<RuleSet> {
    vec![
        RuleSet::new(ModelKind::Glnn, WritingRule::Qdh, TauRule::Rbpm),
        RuleSet::new(ModelKind::Glnn, WritingRule::Qdh, TauRule::Ruop),
    ]
}

/// Best regret per rule set over a grid on one corpus.
fn grid(c: &GeneratedCorpus, rules: &[RuleSet], sizes: &[usize], seeds: &[u64], budget: f64) -> (Vec<(RuleSet, f64)>, bool) {
    let mut best = Vec::new();
    let mut monotone = true;
    for &rs in rules {
        let mut b = f64::INFINITY;
        for &n in sizes {
            for &seed in seeds {
                let t = Trial { rules: rs, units: n, conn: Connectivity::Sparse, seed };
                let r = run_trial(c, &t, budget, |_, _| Control::Continue);
                monotone &= r.monotone;
                b = b.min(r.regret);
            }
        }
        best.push((rs, b));
    }
    (best, monotone)
}

fn fmt_best(best: &[(RuleSet, f64)]) -> String {
    best.iter()
        .map(|(r, b)| format!("{}:{}:{}={b:.1}", r.model, r.writing, r.tau))
        .collect::<Vec<_>>()
        .join(", ")
}

// ---- 7 ----

fn c7_anbn() -> Outcome {
    let seeds: Vec<u64> = env_list("GLNN_C7_SEEDS").unwrap_or((0..8).collect());
    let sizes: Vec<usize> = env_list("GLNN_C7_SIZES").unwrap_or(size_schedule(4, 64));
    let budget = env_f64("GLNN_C7_BUDGET_SEC", 600.0);
    let mut best = f64::INFINITY;
    let mut monotone = true;
    let mut tried = 0;
    'outer: for &seed in &seeds {
        // every independent run draws a fresh corpus
        let c = gen_anbn(10, 1024, 2048, 100 + seed).unwrap();
        for rs in glnn_rules() {
            for &n in &sizes {
                let t = Trial { rules: rs, units: n, conn: Connectivity::Sparse, seed };
                let oracle = c.true_model_ll_valid;
                let r = run_trial(&c, &t, budget, |rec, _| match rec.valid_ll_bits {
                    Some(v) if cumulative_regret(v, oracle) <= 60.0 => Control::Stop,
                    _ => Control::Continue,
                });
                tried += 1;
                monotone &= r.monotone;
                best = best.min(r.regret);
                if best <= 60.0 {
                    break 'outer;
                }
            }
        }
    }
    outcome(
        best <= 60.0 && monotone,
        format!(
            "best GLNN regret {best:.1} bits after {tried} runs (seeds {seeds:?}, sizes {sizes:?}, {budget}s each; need <= 60 in one run)"
        ),
    )
}

// ---- 8 ----

fn c8_alphabet() -> Outcome {
    let seeds: Vec<u64> = env_list("GLNN_C8_SEEDS").unwrap_or(vec![0]);
    let sizes: Vec<usize> = env_list("GLNN_C8_SIZES").unwrap_or(vec![16, 32]);
    let budget = env_f64("GLNN_C8_BUDGET_SEC", 1800.0);
    let c = gen_alphabet(1000, 0).unwrap();
    let non_invariant = vec![
        RuleSet::new(ModelKind::Glnn, WritingRule::Dh, TauRule::Fb),
        RuleSet::new(ModelKind::Rnn, WritingRule::Dh, TauRule::Fb),
    ];
    let (g, m1) = grid(&c, &glnn_rules(), &sizes, &seeds, budget);
    let (f, m2) = grid(&c, &non_invariant, &sizes, &seeds, budget);
    let best_g = g.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let best_f = f.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    outcome(
        best_g <= 2500.0 && best_g < best_f && m1 && m2,
        format!(
            "oracle {:.1} bits; GLNN {}; DH+FB {}; best GLNN {best_g:.1} (<= 2500) vs best DH+FB {best_f:.1} (sizes {sizes:?}, seeds {seeds:?}, {budget}s each)",
            c.true_model_ll_valid,
            fmt_best(&g),
            fmt_best(&f)
        ),
    )
}

// ---- 9 ----

fn c9_music() -> Outcome {
    let seeds: Vec<u64> = env_list("GLNN_C9_SEEDS").unwrap_or(vec![0]);
    let sizes: Vec<usize> = env_list("GLNN_C9_SIZES").unwrap_or(vec![16, 32]);
    let budget = env_f64("GLNN_C9_BUDGET_SEC", 600.0);
    let c = gen_music(2700, 0).unwrap();
    let rnn = vec![RuleSet::new(ModelKind::Rnn, WritingRule::Dh, TauRule::Fb)];
    let (g, m1) = grid(&c, &glnn_rules(), &sizes, &seeds, budget);
    let (f, m2) = grid(&c, &rnn, &sizes, &seeds, budget);
    let best_g = g.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let best_f = f.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    outcome(
        best_g <= 2500.0 && best_g < best_f && m1 && m2,
        format!(
            "oracle {:.1} bits; GLNN {}; RNN+FB {}; best GLNN {best_g:.1} (<= 2500) vs RNN+FB {best_f:.1} (sizes {sizes:?}, seeds {seeds:?}, {budget}s each)",
            c.true_model_ll_valid,
            fmt_best(&g),
            fmt_best(&f)
        ),
    )
}

// ---- 10 ----

fn c10_xor() -> Outcome {
    let seeds: Vec<u64> = env_list("GLNN_C10_SEEDS").unwrap_or((0..4).collect());
    let budget = env_f64("GLNN_C10_BUDGET_SEC", 3600.0);
    let mut best = 1.0f64;
    let mut monotone = true;
    let mut runs = Vec::new();
    for &seed in &seeds {
        let c = gen_xor(2000, 30, 200 + seed).unwrap();
        let t = Trial {
            rules: RuleSet::new(ModelKind::Glnn, WritingRule::Qdh, TauRule::Rbpm),
            units: 10,
            conn: Connectivity::Full,
            seed,
        };
        let valid = c.valid.clone();
        let mut hit = f64::NAN;
        let r = run_trial(&c, &t, budget, |rec, p| {
            if rec.valid_ll_bits.is_some() && rec.step % 5 == 0 {
                let e = xor_score(p, &valid).map(|s| s.error).unwrap_or(1.0);
                if e < 0.05 {
                    hit = e;
                    return Control::Stop;
                }
            }
            Control::Continue
        });
        monotone &= r.monotone;
        let e = if hit.is_nan() { r.xor_error.unwrap_or(1.0) } else { hit.min(r.xor_error.unwrap_or(1.0)) };
        runs.push(format!("seed {seed}: {e:.4} after {} steps", r.steps));
        best = best.min(e);
        if best < 0.05 {
            break;
        }
    }
    outcome(
        best < 0.05 && monotone,
        format!("T=30, 2000 lines, N=10 full, GLNN QDH+RBPM, {budget}s cap: {}; best error {best:.4} (need < 0.05)", runs.join("; ")),
    )
}

#[allow(dead_code)]
fn nats_to_bits(x: f64) -> f64 {
    x * LOG2_E
}
