use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use sidn_cli::config::RunConfig;
use sidn_cli::{ExplainMode, ExplainOptions, ExplainOutput};
use sidn_core::model::Variant;

#[derive(Parser)]
#[command(name = "sidn", version, about = "Suicidal-ideation text classifier pipeline")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stage. Falls back to the config, then SIDN_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every artifact.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Baseline,
    Finetuned,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Force,
    Summary,
}

#[derive(Subcommand)]
enum Command {
    /// Write a planted synthetic corpus to <out>/corpus.csv.
    GenData {
        #[arg(long)]
        n_docs: Option<usize>,
        /// Fraction of labels flipped in each class.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Tokenize, split, build the vocabulary and encode a corpus CSV.
    Prep {
        /// Corpus CSV with `text,label` columns; defaults to <out>/corpus.csv.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train CBOW word vectors on the training split.
    Embed,
    /// Train the classifier with early stopping.
    Train {
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the test split and write metrics and plots.
    Eval,
    /// Shapley attributions for one test document or a summary over many.
    Explain {
        #[arg(long, value_enum, default_value = "force")]
        mode: ModeArg,
        /// Position in the test split (force mode).
        #[arg(long, default_value_t = 0)]
        instance: usize,
        /// Enumerate all coalitions instead of sampling.
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        n_coalitions: Option<usize>,
    },
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var("SIDN_SEED") {
        Ok(v) => Ok(Some(v.trim().parse().map_err(|_| anyhow::anyhow!("SIDN_SEED={v:?} is not an integer"))?)),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = match cli.seed.or(cfg.seed) {
        Some(s) => s,
        None => seed_from_env()?.unwrap_or(0),
    };
    match &cli.command {
        Command::GenData { n_docs, noise } => {
            if let Some(n) = n_docs {
                cfg.synthetic.n_docs = *n;
            }
            if let Some(e) = noise {
                cfg.synthetic.noise = *e;
            }
        }
        Command::Train { variant, epochs } => {
            if let Some(v) = variant {
                cfg.model.variant = match v {
                    VariantArg::Baseline => Variant::Baseline,
                    VariantArg::Finetuned => Variant::Finetuned,
                };
            }
            if let Some(e) = epochs {
                cfg.train.epochs_max = *e;
            }
        }
        _ => {}
    }
    let ctx = sidn_cli::Ctx::new(cfg, seed, &cli.out)?;
    match cli.command {
        Command::GenData { .. } => {
            let n = sidn_cli::gen_data(&ctx)?;
            eprintln!("wrote {n} documents to {}", ctx.path(sidn_cli::CORPUS).display());
        }
        Command::Prep { input } => {
            let input = input.unwrap_or_else(|| ctx.path(sidn_cli::CORPUS));
            let d = sidn_cli::prep(&ctx, &input)?;
            eprintln!(
                "encoded {} documents (vocabulary {}, split {}/{}/{})",
                d.len(),
                d.vocab_size,
                d.splits.train.len(),
                d.splits.val.len(),
                d.splits.test.len()
            );
        }
        Command::Embed => {
            let v = sidn_cli::embed(&ctx)?;
            eprintln!("trained {} vectors of dimension {}", v.len(), v.dim());
        }
        Command::Train { .. } => {
            let h = sidn_cli::train(&ctx, &mut |r| {
                eprintln!(
                    "epoch {:>3}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}",
                    r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
                )
            })?;
            eprintln!("best epoch {} of {}", h.best_epoch, h.stopped_epoch);
        }
        Command::Eval => {
            let r = sidn_cli::eval(&ctx)?;
            eprintln!(
                "accuracy {:.4}  precision {:.4}  recall {:.4}  f1 {:.4}  auc {:.4}",
                r.accuracy,
                r.precision,
                r.recall,
                r.f1,
                r.auc.unwrap_or(f64::NAN)
            );
        }
        Command::Explain { mode, instance, exact, n_coalitions } => {
            let opts = ExplainOptions {
                mode: match mode {
                    ModeArg::Force => ExplainMode::Force,
                    ModeArg::Summary => ExplainMode::Summary,
                },
                instance,
                exact,
                n_coalitions,
            };
            match sidn_cli::explain(&ctx, &opts)? {
                ExplainOutput::Force(f) => eprintln!(
                    "document {}: base {:.4} -> prediction {:.4} over {} tokens",
                    f.document,
                    f.force.base_value,
                    f.force.prediction,
                    f.force.tokens.len()
                ),
                ExplainOutput::Summary(s) => {
                    for e in s.entries.iter().take(10) {
                        eprintln!("{:<16} {:.4}", e.word, e.mean_abs_phi);
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
