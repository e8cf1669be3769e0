//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! problems with input data, files or checkpoints.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Config, KeyValues};
use crate::corpus::{gen_synthetic, load_corpus, save_corpus, Embeddings, SynthSpec};
use crate::error::{Error, Result};
use crate::evaluation::{alpha_histogram, alpha_tsv, beliefs_tsv, evaluate, histogram_tsv, oracle_eval, EvalMode};
use crate::model::Inference;
use crate::params::{init_params, read_checkpoint, save_checkpoint_with};
use crate::training::{fit_with, gradient_check, log_csv, random_instance, Coordinates};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "MRNEL_SEED";

/// Relative error accepted by `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "mrnel", version, about = "Multi-relational entity linking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with embeddings, priors and splits.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `key=value` overrides applied after the spec file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train a model and write checkpoint, log and resolved config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Word embeddings; defaults to `words.txt` next to the training corpus.
        #[arg(long)]
        words: Option<PathBuf>,
        /// Entity embeddings; defaults to `entities.txt` next to the training corpus.
        #[arg(long)]
        entities: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint and print a JSON report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Lbp)]
        mode: ModeArg,
        /// Write per-candidate beliefs and final scores as TSV.
        #[arg(long)]
        dump_beliefs: Option<PathBuf>,
    },
    /// Evaluate with every other mention clamped to its gold entity.
    OracleEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        /// Coordinates checked per parameter group (0 checks all).
        #[arg(long, default_value_t = 20)]
        per_group: usize,
        #[arg(long, default_value_t = 3)]
        mentions: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Dump relation weights as TSV.
    InspectAlpha {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a histogram of high attention weights.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Lbp,
    Exact,
    PriorOnly,
}

/// Runs the CLI with process arguments and standard streams.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with(
    args: impl IntoIterator<Item = impl Into<OsString> + Clone>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<output>", e)
}

fn overrides(items: &[String]) -> Result<KeyValues> {
    let mut kv = KeyValues::default();
    for item in items {
        let Some((k, v)) = item.split_once('=') else {
            return Err(Error::Config(format!("override {item:?} is not key=value")));
        };
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

fn seed_override(kv: &mut KeyValues) -> Result<()> {
    if let Ok(seed) = std::env::var(SEED_ENV) {
        let parsed: u64 = seed.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={seed:?} is not a seed")))?;
        kv.set("seed", parsed);
    }
    Ok(())
}

fn resolved_config(path: &Path, extra: &[String]) -> Result<Config> {
    let mut kv = KeyValues::load(path)?;
    kv.merge(&overrides(extra)?);
    seed_override(&mut kv)?;
    Config::from_key_values(&kv)
}

fn print_config(err: &mut dyn Write, kv: &KeyValues) -> Result<()> {
    writeln!(err, "# resolved config").map_err(io_err)?;
    write!(err, "{kv}").map_err(io_err)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sibling(corpus: &Path, name: &str) -> PathBuf {
    corpus.parent().unwrap_or(Path::new(".")).join(name)
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Synth { spec, out: dir, overrides: extra } => {
            let mut kv = KeyValues::load(&spec)?;
            kv.merge(&overrides(&extra)?);
            seed_override(&mut kv)?;
            let spec = SynthSpec::from_key_values(&kv)?;
            print_config(err, &spec.to_key_values())?;
            let data = gen_synthetic(&spec)?;
            create_dir(&dir)?;
            let (train, dev, test) = data.splits();
            save_corpus(&data.corpus, dir.join("corpus.jsonl"))?;
            save_corpus(&train, dir.join("train.jsonl"))?;
            save_corpus(&dev, dir.join("dev.jsonl"))?;
            save_corpus(&test, dir.join("test.jsonl"))?;
            data.words.save_text(dir.join("words.txt"))?;
            data.entities.save_text(dir.join("entities.txt"))?;
            data.priors.save(dir.join("priors.tsv"))?;
            write_file(&dir.join("spec.txt"), &spec.to_key_values().to_string())?;
            writeln!(
                out,
                "wrote {} documents ({} mentions, {} scored) to {}",
                data.corpus.len(),
                data.corpus.mention_count(),
                data.corpus.scored_mentions(),
                dir.display()
            )
            .map_err(io_err)
        }
        Command::Train { config, train, dev, out: dir, words, entities, overrides: extra } => {
            let cfg = resolved_config(&config, &extra)?;
            print_config(err, &cfg.to_key_values())?;
            let words = Embeddings::load_text(words.unwrap_or_else(|| sibling(&train, "words.txt")))?;
            let entities = Embeddings::load_text(entities.unwrap_or_else(|| sibling(&train, "entities.txt")))?;
            let train_corpus = load_corpus(&train)?;
            let dev_corpus = load_corpus(&dev)?;
            let params = init_params(&cfg.model, cfg.train.seed, words, entities)?;
            create_dir(&dir)?;
            let result = fit_with(params, &train_corpus, &dev_corpus, &cfg.train, |e| {
                let _ = writeln!(err, "epoch {} loss {:.6} dev_f1 {:.4} lr {:e}", e.epoch, e.loss, e.dev_f1, e.lr);
            })?;
            for note in &result.aborted_steps {
                writeln!(err, "warning: skipped update at {note}").map_err(io_err)?;
            }
            let mut hyper = KeyValues::default();
            for (k, v) in cfg.train.to_key_values().iter() {
                hyper.set(&format!("hyper.{k}"), v);
            }
            save_checkpoint_with(&result.params, &hyper, dir.join("model.ckpt"))?;
            write_file(&dir.join("train_log.csv"), &log_csv(&result.log))?;
            write_file(&dir.join("config.txt"), &cfg.to_key_values().to_string())?;
            writeln!(
                out,
                "best dev F1 {:.4} at epoch {} of {}; {} training mentions skipped; model written to {}",
                result.best_dev_f1,
                result.best_epoch,
                result.log.len(),
                result.skipped_mentions,
                dir.join("model.ckpt").display()
            )
            .map_err(io_err)
        }
        Command::Eval { model, corpus, mode, dump_beliefs } => {
            let (params, meta) = read_checkpoint(&model)?;
            print_config(err, &meta)?;
            let corpus = load_corpus(&corpus)?;
            let (iterations, damping) = lbp_settings(&meta)?;
            let eval_mode = match mode {
                ModeArg::Lbp => EvalMode::Lbp { iterations, damping },
                ModeArg::Exact => EvalMode::Exact,
                ModeArg::PriorOnly => EvalMode::PriorOnly,
            };
            let report = evaluate(&params, &corpus, eval_mode)?;
            if let Some(path) = dump_beliefs {
                let inference = match mode {
                    ModeArg::Exact => Inference::Exact,
                    _ => Inference::Lbp { iterations, damping },
                };
                write_file(&path, &beliefs_tsv(&params, &corpus, inference)?)?;
            }
            writeln!(out, "{}", report.to_json()).map_err(io_err)
        }
        Command::OracleEval { model, corpus } => {
            let (params, meta) = read_checkpoint(&model)?;
            print_config(err, &meta)?;
            let corpus = load_corpus(&corpus)?;
            let report = oracle_eval(&params, &corpus)?;
            writeln!(out, "{}", report.to_json()).map_err(io_err)
        }
        Command::Gradcheck { config, eps, per_group, mentions, overrides: extra } => {
            let cfg = resolved_config(&config, &extra)?;
            print_config(err, &cfg.to_key_values())?;
            if !(eps > 0.0) {
                return Err(Error::Config("eps must be positive".into()));
            }
            let (params, doc) = random_instance(&cfg.model, mentions.max(1), cfg.train.seed)?;
            let coords = match per_group {
                0 => Coordinates::All,
                n => Coordinates::Sample { per_group: n, seed: cfg.train.seed },
            };
            let check = gradient_check(&params, &doc, &cfg.train, eps, coords, None)?;
            for g in &check.groups {
                writeln!(out, "{:<12} checked {:>5}  kinks {:>3}  max_rel_error {:.3e}", g.name, g.checked, g.kinks, g.max_rel_error)
                    .map_err(io_err)?;
            }
            let verdict = if check.passes(GRADCHECK_TOLERANCE) { "PASS" } else { "FAIL" };
            writeln!(out, "max relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:e}): {verdict}", check.max_rel_error())
                .map_err(io_err)
        }
        Command::InspectAlpha { model, corpus, out: path, histogram } => {
            let (params, meta) = read_checkpoint(&model)?;
            print_config(err, &meta)?;
            let corpus = load_corpus(&corpus)?;
            write_file(&path, &alpha_tsv(&params, &corpus)?)?;
            if let Some(h) = histogram {
                write_file(&h, &histogram_tsv(&alpha_histogram(&params, &corpus)?))?;
            }
            writeln!(out, "wrote {}", path.display()).map_err(io_err)
        }
    }
}

/// LBP settings stored with a trained model, falling back to the defaults.
fn lbp_settings(meta: &KeyValues) -> Result<(usize, f64)> {
    let iters = match meta.get("hyper.lbp_iters") {
        Some(v) => meta.parse("hyper.lbp_iters", v)?,
        None => crate::inference::LBP_ITERATIONS,
    };
    let damping = match meta.get("hyper.damping") {
        Some(v) => meta.parse("hyper.damping", v)?,
        None => crate::inference::LBP_DAMPING,
    };
    Ok((iters, damping))
}
