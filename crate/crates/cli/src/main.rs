use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use glnn::datagen::{GeneratedCorpus, Task, TaskSpec};
use glnn::dynamics::{Activation, ModelKind, ModelParams};
use glnn::eval::{
    raw_validation_ll, regularized_validation_ll, run_experiment, run_sweep, sample, size_schedule, write_run,
    write_sweep, xor_score, DataSource, ExperimentManifest, RuleSet, RunData, SweepConfig,
};
use glnn::init::InitPlan;
use glnn::seqdata::{read_text, Alphabet, MaskRule};
use glnn::topology::Connectivity;
use glnn::trainer::{TauRule, TrainerConfig, WritingRule};

#[derive(Parser)]
#[command(name = "glnn", version, about = "Train and evaluate gated leaky recurrent networks on symbol sequences")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus (train.txt, valid.txt, meta.json).
    Gen {
        task: Task,
        #[command(flatten)]
        size: SizeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model.
    Train(TrainArgs),
    /// Train a grid of sizes, connectivities and rule sets.
    Sweep(SweepArgs),
    /// Sample text from a trained model.
    Sample {
        #[arg(long)]
        model_file: PathBuf,
        /// Defaults to alphabet.json next to the model.
        #[arg(long)]
        alphabet_file: Option<PathBuf>,
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score a validation text with a trained model.
    Score {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        alphabet_file: Option<PathBuf>,
        #[arg(long)]
        valid_file: PathBuf,
        #[arg(long, default_value = "all", value_parser = parse_mask)]
        mask: MaskRule,
        /// True-model log-likelihood in bits, for regret.
        #[arg(long, allow_hyphen_values = true)]
        oracle_bits: Option<f64>,
    },
}

#[derive(Args, Clone)]
struct SizeArgs {
    #[arg(long)]
    lines: Option<usize>,
    #[arg(long)]
    bars: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long = "T", alias = "t")]
    t: Option<usize>,
    #[arg(long)]
    nmin: Option<usize>,
    #[arg(long)]
    nmax: Option<usize>,
}

impl SizeArgs {
    fn spec(&self, task: Task) -> TaskSpec {
        match TaskSpec::default_for(task) {
            TaskSpec::Alphabet { lines } => TaskSpec::Alphabet { lines: self.lines.unwrap_or(lines) },
            TaskSpec::Music { bars } => TaskSpec::Music { bars: self.bars.unwrap_or(bars) },
            TaskSpec::Xor { lines, t } => TaskSpec::Xor {
                lines: self.lines.unwrap_or(lines),
                t: self.t.unwrap_or(t),
            },
            TaskSpec::Anbn { blocks, n_min, n_max } => TaskSpec::Anbn {
                blocks: self.blocks.unwrap_or(blocks),
                n_min: self.nmin.unwrap_or(n_min),
                n_max: self.nmax.unwrap_or(n_max),
            },
        }
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Generate the data for this task.
    #[arg(long, conflicts_with_all = ["train_file", "valid_file"])]
    task: Option<Task>,
    #[command(flatten)]
    size: SizeArgs,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Load a corpus directory written by `gen`.
    #[arg(long, conflicts_with = "task")]
    corpus: Option<PathBuf>,
    #[arg(long, requires = "valid_file")]
    train_file: Option<PathBuf>,
    #[arg(long, requires = "train_file")]
    valid_file: Option<PathBuf>,
    #[arg(long, default_value = "all", value_parser = parse_mask)]
    mask: MaskRule,
}

#[derive(Args, Clone)]
struct TrainerArgs {
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    #[arg(long)]
    budget_sec: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    eta_w: Option<f64>,
    #[arg(long)]
    eta_tau: Option<f64>,
    #[arg(long, default_value_t = glnn::metric::DEFAULT_DAMPENING)]
    dampening: f64,
}

impl TrainerArgs {
    fn config(&self, writing_rule: WritingRule, tau_rule: TauRule) -> Result<TrainerConfig> {
        if self.budget_sec.is_none() && self.max_steps.is_none() {
            bail!("give --budget-sec or --max-steps");
        }
        Ok(TrainerConfig {
            writing_rule,
            tau_rule,
            eta_w: self.eta_w,
            eta_tau: self.eta_tau,
            dampening: self.dampening,
            max_steps: self.max_steps,
            time_budget_secs: self.budget_sec,
            ..TrainerConfig::default()
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "glnn")]
    model: ModelKind,
    #[arg(long, default_value = "qdh")]
    rule_w: WritingRule,
    #[arg(long, default_value = "rbpm")]
    rule_tau: TauRule,
    #[arg(long)]
    units: usize,
    /// sparse, semi, full, or an explicit degree.
    #[arg(long, default_value = "sparse", value_parser = parse_conn)]
    conn: Connectivity,
    #[command(flatten)]
    trainer: TrainerArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// model:writing:tau triples, comma separated; defaults to a standard set.
    #[arg(long, value_delimiter = ',', value_parser = parse_rules)]
    rules: Vec<RuleSet>,
    #[arg(long, default_value_t = 4)]
    min_units: usize,
    #[arg(long, default_value_t = 64)]
    max_units: usize,
    #[arg(long, value_delimiter = ',', default_value = "sparse,semi", value_parser = parse_conn)]
    conn: Vec<Connectivity>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    trainer: TrainerArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mask(s: &str) -> Result<MaskRule, String> {
    match s {
        "all" => Ok(MaskRule::All),
        "xor" => Ok(MaskRule::Xor),
        _ => Err(format!("unknown mask {s:?} (all, xor)")),
    }
}

fn parse_conn(s: &str) -> Result<Connectivity, String> {
    match s {
        "sparse" => Ok(Connectivity::Sparse),
        "semi" => Ok(Connectivity::Semi),
        "full" => Ok(Connectivity::Full),
        _ => s
            .parse()
            .map(Connectivity::Fixed)
            .map_err(|_| format!("bad connectivity {s:?}")),
    }
}

fn parse_rules(s: &str) -> Result<RuleSet, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [m, w, t] = parts[..] else {
        return Err(format!("expected model:writing:tau, got {s:?}"));
    };
    Ok(RuleSet::new(
        m.parse().map_err(|e| format!("{e}"))?,
        w.parse().map_err(|e| format!("{e}"))?,
        t.parse().map_err(|e| format!("{e}"))?,
    ))
}

/// Resolves the data arguments into sequences, the manifest data source
/// and the alphabet.
fn load_data(d: &DataArgs) -> Result<(RunData, DataSource, Alphabet)> {
    if let Some(task) = d.task {
        let spec = d.size.spec(task);
        let c = GeneratedCorpus::generate(spec, d.data_seed)?;
        let src = DataSource::Generated { spec, seed: d.data_seed };
        return Ok((RunData::from(&c), src, c.alphabet));
    }
    if let Some(dir) = &d.corpus {
        let c = GeneratedCorpus::load(dir).with_context(|| format!("loading corpus {}", dir.display()))?;
        let src = DataSource::Generated { spec: c.spec, seed: c.seed };
        return Ok((RunData::from(&c), src, c.alphabet));
    }
    let (Some(tf), Some(vf)) = (&d.train_file, &d.valid_file) else {
        bail!("give --task, --corpus, or --train-file with --valid-file");
    };
    let train_text = read_text(tf)?;
    let valid_text = read_text(vf)?;
    let alphabet = Alphabet::from_text(&train_text)?;
    let train = d.mask.apply(&train_text, &alphabet)?;
    let valid = d
        .mask
        .apply(&valid_text, &alphabet)
        .context("validation text must use the training alphabet")?;
    let src = DataSource::Files {
        train: tf.display().to_string(),
        valid: vf.display().to_string(),
        mask: d.mask,
    };
    let data = RunData {
        alphabet_size: alphabet.len(),
        train,
        valid,
        oracle_bits: None,
    };
    Ok((data, src, alphabet))
}

fn write_alphabet(dir: &Path, a: &Alphabet) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("alphabet.json"), serde_json::to_string(a)?)?;
    Ok(())
}

fn load_model(model_file: &Path, alphabet_file: Option<&Path>) -> Result<(ModelParams, Alphabet)> {
    let params = ModelParams::from_json(&fs::read_to_string(model_file)?)
        .with_context(|| format!("reading {}", model_file.display()))?;
    let af = match alphabet_file {
        Some(p) => p.to_path_buf(),
        None => model_file.with_file_name("alphabet.json"),
    };
    let alphabet: Alphabet =
        serde_json::from_str(&fs::read_to_string(&af).with_context(|| format!("reading {}", af.display()))?)?;
    if alphabet.len() != params.alphabet_size() {
        bail!("alphabet has {} symbols, model expects {}", alphabet.len(), params.alphabet_size());
    }
    Ok((params, alphabet))
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { task, size, seed, out } => {
            let c = GeneratedCorpus::generate(size.spec(task), seed)?;
            c.save(&out)?;
            println!("{}", serde_json::to_string(&c.meta())?);
        }
        Cmd::Train(a) => {
            let (data, src, alphabet) = load_data(&a.data)?;
            let manifest = ExperimentManifest {
                data: src,
                model: a.model,
                activation: a.trainer.activation,
                units: a.units,
                connectivity: a.conn,
                degree: a.conn.degree(a.model, data.alphabet_size, a.units),
                graph_seed: a.seed,
                init: InitPlan::new(a.seed),
                trainer: a.trainer.config(a.rule_w, a.rule_tau)?,
            };
            let r = run_experiment(&manifest, &data);
            write_run(&a.out, &r)?;
            write_alphabet(&a.out, &alphabet)?;
            println!(
                "{}",
                serde_json::json!({
                    "hash": r.hash,
                    "best_valid_bits": r.best_valid_bits,
                    "regret": r.regret,
                    "xor_error": r.xor.map(|x| x.error),
                    "steps": r.steps,
                    "error": r.error,
                })
            );
            if let Some(e) = r.error {
                return Err(anyhow!(e));
            }
        }
        Cmd::Sweep(a) => {
            let (data, src, alphabet) = load_data(&a.data)?;
            let sizes = size_schedule(a.min_units, a.max_units);
            if sizes.is_empty() {
                bail!("no sizes in [{}, {}]", a.min_units, a.max_units);
            }
            let config = SweepConfig {
                data: src,
                rule_sets: if a.rules.is_empty() { RuleSet::standard() } else { a.rules },
                sizes,
                connectivities: a.conn,
                seeds: a.seeds,
                activation: a.trainer.activation,
                trainer: a.trainer.config(WritingRule::Qdh, TauRule::Rbpm)?,
                workers: a.workers,
            };
            let res = run_sweep(&config, &data);
            write_sweep(&a.out, &res)?;
            write_alphabet(&a.out, &alphabet)?;
            print!("{}", glnn::eval::results_csv(&res.rows));
        }
        Cmd::Sample {
            model_file,
            alphabet_file,
            length,
            seed,
        } => {
            let (params, alphabet) = load_model(&model_file, alphabet_file.as_deref())?;
            let s = sample(&params, length, seed);
            print!("{}", alphabet.decode(&s.tokens));
            if s.truncated {
                log::warn!("dynamics diverged after {} symbols; output truncated", s.tokens.len());
                eprintln!("truncated after {} symbols", s.tokens.len());
            }
        }
        Cmd::Score {
            model_file,
            alphabet_file,
            valid_file,
            mask,
            oracle_bits,
        } => {
            let (params, alphabet) = load_model(&model_file, alphabet_file.as_deref())?;
            let valid = mask.apply(&read_text(&valid_file)?, &alphabet)?;
            let reg = regularized_validation_ll(&params, &valid)?;
            let raw = raw_validation_ll(&params, &valid)?;
            let xor = match mask {
                MaskRule::Xor => Some(xor_score(&params, &valid)?),
                MaskRule::All => None,
            };
            println!(
                "{}",
                serde_json::json!({
                    "regularized_bits": reg,
                    "raw_bits": raw,
                    "regret": oracle_bits.map(|o| glnn::eval::cumulative_regret(reg, o)),
                    "xor": xor,
                })
            );
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Cli::parse())
}
