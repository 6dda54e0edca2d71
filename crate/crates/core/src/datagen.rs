//! Synthetic benchmark corpora with exact true-model log-likelihoods.
//!
//! Each generator records the log-probability of every random choice it
//! makes; the independent `score_*` functions re-derive the same quantity
//! character by character from the text alone.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GlnnError, Result};
use crate::seqdata::{Alphabet, MaskRule, SymbolSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Alphabet,
    Music,
    Xor,
    Anbn,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Alphabet => "alphabet",
            Task::Music => "music",
            Task::Xor => "xor",
            Task::Anbn => "anbn",
        })
    }
}

impl FromStr for Task {
    type Err = GlnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alphabet" => Ok(Task::Alphabet),
            "music" => Ok(Task::Music),
            "xor" => Ok(Task::Xor),
            "anbn" => Ok(Task::Anbn),
            _ => Err(GlnnError::InvalidArgument(format!("unknown task {s:?}"))),
        }
    }
}

/// Task together with its size parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TaskSpec {
    Alphabet { lines: usize },
    Music { bars: usize },
    Xor { lines: usize, t: usize },
    Anbn { blocks: usize, n_min: usize, n_max: usize },
}

impl TaskSpec {
    pub fn task(&self) -> Task {
        match self {
            TaskSpec::Alphabet { .. } => Task::Alphabet,
            TaskSpec::Music { .. } => Task::Music,
            TaskSpec::Xor { .. } => Task::Xor,
            TaskSpec::Anbn { .. } => Task::Anbn,
        }
    }

    /// Default sizes used for the benchmark experiments.
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Alphabet => TaskSpec::Alphabet { lines: 1000 },
            Task::Music => TaskSpec::Music { bars: 2700 },
            Task::Xor => TaskSpec::Xor { lines: 10_000, t: 100 },
            Task::Anbn => TaskSpec::Anbn { blocks: 10, n_min: 1024, n_max: 2048 },
        }
    }

    pub fn mask_rule(&self) -> MaskRule {
        match self {
            TaskSpec::Xor { .. } => MaskRule::Xor,
            _ => MaskRule::All,
        }
    }

    pub fn alphabet(&self) -> Alphabet {
        let symbols: Vec<char> = match self.task() {
            Task::Alphabet => {
                let mut s: Vec<char> = "\n()[]".chars().collect();
                s.extend('0'..='9');
                s.extend('A'..='Z');
                s.extend('a'..='z');
                s
            }
            Task::Music => "\n .|248abcdefg".chars().collect(),
            Task::Xor => vec![' ', XOR_MARK, '0', '1', '=', '\n'],
            Task::Anbn => vec!['\n', 'a', 'b'],
        };
        Alphabet::from_symbols(symbols).expect("fixed alphabets are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GlnnError::InvalidArgument(m.to_string()));
        match *self {
            TaskSpec::Alphabet { lines } if lines < 1 => bad("lines must be >= 1"),
            TaskSpec::Music { bars } if bars < 1 => bad("bars must be >= 1"),
            TaskSpec::Xor { lines, .. } if lines < 1 => bad("lines must be >= 1"),
            TaskSpec::Xor { t, .. } if t < 10 => bad("T must be >= 10"),
            TaskSpec::Anbn { blocks, .. } if blocks < 1 => bad("blocks must be >= 1"),
            TaskSpec::Anbn { n_min, n_max, .. } if n_min < 1 || n_min > n_max => {
                bad("need 1 <= n_min <= n_max")
            }
            _ => Ok(()),
        }
    }

    /// Draws one text and the log2-probability of the choices behind it.
    pub fn generate_text(&self, rng: &mut ChaCha8Rng) -> (String, f64) {
        match *self {
            TaskSpec::Alphabet { lines } => alphabet_text(lines, rng),
            TaskSpec::Music { bars } => music_text(bars, rng),
            TaskSpec::Xor { lines, t } => xor_text(lines, t, rng),
            TaskSpec::Anbn { blocks, n_min, n_max } => anbn_text(blocks, n_min, n_max, rng),
        }
    }

    /// Re-scores a text with the true conditional probabilities of each
    /// predicted character (bits). `-inf` for texts the law cannot produce.
    pub fn score_text(&self, text: &str) -> f64 {
        match *self {
            TaskSpec::Alphabet { .. } => score_alphabet(text),
            TaskSpec::Music { .. } => score_music(text),
            TaskSpec::Xor { .. } => score_xor(text),
            TaskSpec::Anbn { n_min, n_max, .. } => score_anbn(text, n_min, n_max),
        }
    }
}

pub const XOR_MARK: char = '×';

/// Bar terminator for the music task.
pub const BAR_END: &str = " |\n";

/// Generated train/validation pair with oracle scores (bits).
#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub spec: TaskSpec,
    pub seed: u64,
    pub alphabet: Alphabet,
    pub train_text: String,
    pub valid_text: String,
    pub train: SymbolSequence,
    pub valid: SymbolSequence,
    pub true_model_ll_train: f64,
    pub true_model_ll_valid: f64,
}

/// JSON sidecar written next to the corpus text files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    #[serde(flatten)]
    pub spec: TaskSpec,
    pub seed: u64,
    pub alphabet: Alphabet,
    pub true_model_ll_train: f64,
    pub true_model_ll_valid: f64,
    pub train_len: usize,
    pub valid_len: usize,
    /// Informational bounds that are not used in scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

const TRAIN_STREAM: u64 = 0;
const VALID_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl GeneratedCorpus {
    pub fn generate(spec: TaskSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let alphabet = spec.alphabet();
        let (train_text, ll_train) = spec.generate_text(&mut stream_rng(seed, TRAIN_STREAM));
        let (valid_text, ll_valid) = spec.generate_text(&mut stream_rng(seed, VALID_STREAM));
        Self::assemble(spec, seed, alphabet, train_text, valid_text, ll_train, ll_valid)
    }

    fn assemble(
        spec: TaskSpec,
        seed: u64,
        alphabet: Alphabet,
        train_text: String,
        valid_text: String,
        true_model_ll_train: f64,
        true_model_ll_valid: f64,
    ) -> Result<Self> {
        let rule = spec.mask_rule();
        Ok(Self {
            train: rule.apply(&train_text, &alphabet)?,
            valid: rule.apply(&valid_text, &alphabet)?,
            spec,
            seed,
            alphabet,
            train_text,
            valid_text,
            true_model_ll_train,
            true_model_ll_valid,
        })
    }

    pub fn meta(&self) -> CorpusMeta {
        let note = match self.spec {
            TaskSpec::Anbn { n_min, n_max, .. } => Some(format!(
                "a geometric law with the same mean length would have entropy of about {:.1} bits per block",
                geometric_entropy_bits((n_min + n_max) as f64 / 2.0 - n_min as f64 + 1.0)
            )),
            _ => None,
        };
        CorpusMeta {
            spec: self.spec,
            seed: self.seed,
            alphabet: self.alphabet.clone(),
            true_model_ll_train: self.true_model_ll_train,
            true_model_ll_valid: self.true_model_ll_valid,
            train_len: self.train.len(),
            valid_len: self.valid.len(),
            note,
        }
    }

    /// Writes `train.txt`, `valid.txt` and `meta.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("train.txt"), &self.train_text)?;
        fs::write(dir.join("valid.txt"), &self.valid_text)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: CorpusMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
        let train_text = fs::read_to_string(dir.join("train.txt"))?;
        let valid_text = fs::read_to_string(dir.join("valid.txt"))?;
        Self::assemble(
            meta.spec,
            meta.seed,
            meta.alphabet,
            train_text,
            valid_text,
            meta.true_model_ll_train,
            meta.true_model_ll_valid,
        )
    }
}

/// Entropy in bits of a geometric law on `{1, 2, ...}` with the given mean.
pub fn geometric_entropy_bits(mean: f64) -> f64 {
    if mean <= 1.0 {
        return 0.0;
    }
    let p = 1.0 / mean;
    (-(1.0 - p) * (1.0 - p).log2() - p * p.log2()) / p
}

pub fn gen_alphabet(lines: usize, seed: u64) -> Result<GeneratedCorpus> {
    GeneratedCorpus::generate(TaskSpec::Alphabet { lines }, seed)
}

pub fn gen_music(bars: usize, seed: u64) -> Result<GeneratedCorpus> {
    GeneratedCorpus::generate(TaskSpec::Music { bars }, seed)
}

pub fn gen_xor(lines: usize, t: usize, seed: u64) -> Result<GeneratedCorpus> {
    GeneratedCorpus::generate(TaskSpec::Xor { lines, t }, seed)
}

pub fn gen_anbn(blocks: usize, n_min: usize, n_max: usize, seed: u64) -> Result<GeneratedCorpus> {
    GeneratedCorpus::generate(TaskSpec::Anbn { blocks, n_min, n_max }, seed)
}

// ---- alphabet ----

const INSERT_P: (u32, u32) = (1, 26);
const SUB_INSERT_P: (u32, u32) = (1, 5);

fn bern_bits(p: (u32, u32), hit: bool) -> f64 {
    let num = if hit { p.0 } else { p.1 - p.0 };
    (num as f64 / p.1 as f64).log2()
}

fn uniform_bits(k: usize) -> f64 {
    (1.0 / k as f64).log2()
}

fn bern(rng: &mut ChaCha8Rng, p: (u32, u32)) -> bool {
    rng.gen_range(0..p.1) < p.0
}

fn alphabet_text(lines: usize, rng: &mut ChaCha8Rng) -> (String, f64) {
    let mut s = String::new();
    let mut ll = 0.0;
    for _ in 0..lines {
        for letter in 'a'..='z' {
            s.push(letter);
            let ins = bern(rng, INSERT_P);
            ll += bern_bits(INSERT_P, ins);
            if !ins {
                continue;
            }
            s.push('(');
            for digit in '0'..='9' {
                s.push(digit);
                let sub = bern(rng, SUB_INSERT_P);
                ll += bern_bits(SUB_INSERT_P, sub);
                if sub {
                    s.push('[');
                    for _ in 0..9 {
                        s.push((b'A' + rng.gen_range(0..26u8)) as char);
                        ll += uniform_bits(26);
                    }
                    s.push(']');
                }
            }
            s.push(')');
        }
        s.push('\n');
    }
    (s, ll)
}

/// Character-level true model of the alphabet task.
fn score_alphabet(text: &str) -> f64 {
    let c: Vec<char> = text.chars().collect();
    let mut ll = 0.0;
    let mut t = 0;
    let expect = |t: usize, ch: char| c.get(t) == Some(&ch);
    while t < c.len() {
        for letter in 'a'..='z' {
            if !expect(t, letter) {
                return f64::NEG_INFINITY;
            }
            t += 1;
            // next char: '(' with the insertion probability, else the
            // deterministic continuation
            let ins = c.get(t) == Some(&'(');
            ll += bern_bits(INSERT_P, ins);
            if !ins {
                continue;
            }
            t += 1;
            for digit in '0'..='9' {
                if !expect(t, digit) {
                    return f64::NEG_INFINITY;
                }
                t += 1;
                let sub = c.get(t) == Some(&'[');
                ll += bern_bits(SUB_INSERT_P, sub);
                if sub {
                    t += 1;
                    for _ in 0..9 {
                        match c.get(t) {
                            Some(u) if u.is_ascii_uppercase() => ll += uniform_bits(26),
                            _ => return f64::NEG_INFINITY,
                        }
                        t += 1;
                    }
                    if !expect(t, ']') {
                        return f64::NEG_INFINITY;
                    }
                    t += 1;
                }
            }
            if !expect(t, ')') {
                return f64::NEG_INFINITY;
            }
            t += 1;
        }
        if !expect(t, '\n') {
            return f64::NEG_INFINITY;
        }
        t += 1;
    }
    ll
}

// ---- music ----

/// Harmony cycle over bars, as chord indices into [`CHORDS`].
pub const HARMONY_CYCLE: [usize; 8] = [0, 1, 0, 2, 0, 1, 2, 0];
/// I, IV, V.
pub const CHORDS: [[char; 3]; 3] = [['c', 'e', 'g'], ['c', 'f', 'a'], ['g', 'b', 'd']];
pub const RHYTHMS: [&[&str]; 5] = [&["4", "4", "4"], &["2", "4"], &["4.", "8", "4"], &["2."], &["4", "4", "8", "8"]];

/// Chord of bar `b` (0-based).
pub fn harmony(b: usize) -> [char; 3] {
    CHORDS[HARMONY_CYCLE[b % HARMONY_CYCLE.len()]]
}

fn render_bar(pitches: &[char], rhythm: &[&str]) -> String {
    let notes: Vec<String> = pitches.iter().zip(rhythm).map(|(p, v)| format!("{p}{v}")).collect();
    format!("{}{BAR_END}", notes.join(" "))
}

fn music_text(bars: usize, rng: &mut ChaCha8Rng) -> (String, f64) {
    let mut s = String::new();
    let mut ll = 0.0;
    for b in 0..bars {
        let chord = harmony(b);
        let rhythm = RHYTHMS[rng.gen_range(0..RHYTHMS.len())];
        ll += uniform_bits(RHYTHMS.len());
        let pitches: Vec<char> = rhythm
            .iter()
            .map(|_| {
                ll += uniform_bits(3);
                chord[rng.gen_range(0..3)]
            })
            .collect();
        s.push_str(&render_bar(&pitches, rhythm));
    }
    (s, ll)
}

/// Every possible bar over `chord` with its probability.
fn bar_strings(chord: [char; 3]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for rhythm in RHYTHMS {
        let k = rhythm.len();
        let p = 1.0 / (RHYTHMS.len() as f64 * 3f64.powi(k as i32));
        for code in 0..3usize.pow(k as u32) {
            let pitches: Vec<char> = (0..k).map(|n| chord[code / 3usize.pow(n as u32) % 3]).collect();
            out.push((render_bar(&pitches, rhythm), p));
        }
    }
    out
}

/// Character-level true model of the music task: each character's
/// probability is the mass of the bars extending the current prefix.
fn score_music(text: &str) -> f64 {
    let mut ll = 0.0;
    let mut rest = text;
    let mut b = 0;
    let tables: Vec<Vec<(Vec<char>, f64)>> = CHORDS
        .iter()
        .map(|&c| bar_strings(c).into_iter().map(|(s, p)| (s.chars().collect(), p)).collect())
        .collect();
    while !rest.is_empty() {
        let end = match rest.find('\n') {
            Some(i) => i + 1,
            None => return f64::NEG_INFINITY,
        };
        let bar: Vec<char> = rest[..end].chars().collect();
        rest = &rest[end..];
        let table = &tables[HARMONY_CYCLE[b % HARMONY_CYCLE.len()]];
        let mut live: Vec<&(Vec<char>, f64)> = table.iter().collect();
        for (k, ch) in bar.iter().enumerate() {
            let before: f64 = live.iter().map(|e| e.1).sum();
            live.retain(|e| e.0.get(k) == Some(ch));
            let after: f64 = live.iter().map(|e| e.1).sum();
            if after == 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += (after / before).log2();
        }
        if !live.iter().any(|e| e.0.len() == bar.len()) {
            return f64::NEG_INFINITY;
        }
        b += 1;
    }
    ll
}

// ---- distant XOR ----

/// Line length range `[T, floor(1.1 T)]`.
pub fn xor_length_range(t: usize) -> (usize, usize) {
    (t, t + t / 10)
}

/// Marker ranges for a line of `len` bits: the first index is below
/// `len / 10`, the second lies in `[len / 10, len / 2)`.
pub fn xor_marker_ranges(len: usize) -> ((usize, usize), (usize, usize)) {
    let tenth = len.div_ceil(10);
    let half = len.div_ceil(2);
    ((0, tenth), (tenth, half))
}

fn xor_text(lines: usize, t: usize, rng: &mut ChaCha8Rng) -> (String, f64) {
    let (lo, hi) = xor_length_range(t);
    let mut s = String::new();
    for _ in 0..lines {
        let len = rng.gen_range(lo..=hi);
        let ((a0, a1), (b0, b1)) = xor_marker_ranges(len);
        let m1 = rng.gen_range(a0..a1);
        let m2 = rng.gen_range(b0..b1);
        let mut answer = 0u8;
        for i in 0..len {
            let bit: u8 = rng.gen_range(0..2);
            let marked = i == m1 || i == m2;
            if marked {
                answer ^= bit;
            }
            s.push(if marked { XOR_MARK } else { ' ' });
            s.push(if bit == 1 { '1' } else { '0' });
        }
        s.push('=');
        s.push(if answer == 1 { '1' } else { '0' });
        s.push('\n');
    }
    // only answer bits are predicted, and they are determined by the line
    (s, 0.0)
}

fn score_xor(text: &str) -> f64 {
    let mut ll = 0.0;
    for line in text.split_terminator('\n') {
        let c: Vec<char> = line.chars().collect();
        let Some(eq) = c.iter().position(|&x| x == '=') else {
            return f64::NEG_INFINITY;
        };
        let mut parity = 0u8;
        let mut marks = 0;
        for pair in c[..eq].chunks(2) {
            if pair.len() == 2 && pair[0] == XOR_MARK {
                marks += 1;
                parity ^= (pair[1] == '1') as u8;
            }
        }
        let expected = if parity == 1 { '1' } else { '0' };
        if marks != 2 || c.get(eq + 1) != Some(&expected) {
            return f64::NEG_INFINITY;
        }
        ll += 1f64.log2();
    }
    ll
}

// ---- a^n b^n ----

fn anbn_text(blocks: usize, n_min: usize, n_max: usize, rng: &mut ChaCha8Rng) -> (String, f64) {
    let mut s = String::new();
    let mut ll = 0.0;
    for _ in 0..blocks {
        let n = rng.gen_range(n_min..=n_max);
        ll += uniform_bits(n_max - n_min + 1);
        s.extend(std::iter::repeat('a').take(n));
        s.push('\n');
        s.extend(std::iter::repeat('b').take(n));
        s.push('\n');
    }
    (s, ll)
}

/// Character-level true model: after `k` a's the block ends with the
/// hazard `P(n = k | n >= k)`; the b-block is then forced.
fn score_anbn(text: &str, n_min: usize, n_max: usize) -> f64 {
    let c: Vec<char> = text.chars().collect();
    let mut ll = 0.0;
    let mut t = 0;
    while t < c.len() {
        let mut k = 0;
        while c.get(t) == Some(&'a') {
            if k >= 1 {
                // continuation after k a's
                let p_more = if k >= n_min {
                    (n_max - k) as f64 / (n_max + 1 - k) as f64
                } else {
                    1.0
                };
                if p_more == 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += p_more.log2();
            }
            k += 1;
            t += 1;
        }
        if k < n_min || k > n_max || c.get(t) != Some(&'\n') {
            return f64::NEG_INFINITY;
        }
        let remaining = (n_max + 1 - k) as f64;
        ll += (1.0 / remaining).log2();
        t += 1;
        for _ in 0..k {
            if c.get(t) != Some(&'b') {
                return f64::NEG_INFINITY;
            }
            t += 1;
        }
        if c.get(t) != Some(&'\n') {
            return f64::NEG_INFINITY;
        }
        t += 1;
    }
    ll
}
