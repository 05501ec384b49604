//! `dconv`: synthesise, train, embed, score, evaluate and inspect models.
//!
//! Exit codes: 0 success, 1 usage, 2 data or parse error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand};
use dconv_core::pipeline::{self, EmbeddingSource, EvalInput, RunConfig};
use dconv_core::{Error, Result, CHECKPOINT_VERSION, FORMAT_VERSION};

fn version() -> &'static str {
    static V: OnceLock<String> = OnceLock::new();
    V.get_or_init(|| {
        format!(
            "{} (checkpoint format {CHECKPOINT_VERSION}, file format {FORMAT_VERSION})",
            env!("CARGO_PKG_VERSION")
        )
    })
}

#[derive(Parser)]
#[command(name = "dconv", version = version(), about = "Dynamic-convolution speaker verification")]
struct Cli {
    /// Run configuration (TOML); command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for feature extraction and embedding (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress at info level.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus: WAV files, manifest and trial lists.
    Synth {
        #[arg(long, default_value_t = 20)]
        speakers: usize,
        #[arg(long, default_value_t = 10)]
        utts: usize,
        #[arg(long, default_value_t = 3.5)]
        seconds: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a manifest directory.
    Train {
        /// dconv3-small, dconv3, dconv4-small, dconv4 or dconv5.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Write an embedding archive.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Embed only the utterances these trials mention.
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a score file for a trial list.
    Score {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute EER, minDCF and DET points.
    Eval {
        /// Evaluate an existing score file.
        #[arg(long, conflicts_with_all = ["embeddings", "model", "data", "trials"])]
        scores: Option<PathBuf>,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Report file; the DET CSV is written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print parameter and FLOP counts of a preset.
    Params {
        #[arg(long)]
        preset: String,
    },
}

#[derive(Args)]
struct SourceArgs {
    /// Embedding archive written by `embed`.
    #[arg(long, conflicts_with_all = ["model", "data"])]
    embeddings: Option<PathBuf>,
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
}

impl SourceArgs {
    fn source(&self) -> Result<EmbeddingSource<'_>> {
        match (&self.embeddings, &self.model, &self.data) {
            (Some(e), _, _) => Ok(EmbeddingSource::Archive(e)),
            (None, Some(m), Some(d)) => Ok(EmbeddingSource::Model { checkpoint: m, data: d }),
            _ => Err(Error::Usage("give --embeddings FILE or --model CKPT --data DIR".into())),
        }
    }
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let mut run = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        run.seed = s;
    }
    if let Some(j) = cli.jobs {
        run.jobs = j;
    }
    Ok(run)
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} not found: {}", path.display())))
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = run_config(&cli)?;
    pipeline::configure_threads(cfg.jobs);
    match cli.command {
        Command::Synth { speakers, utts, seconds, out } => {
            let s = pipeline::cmd_synth(&out, speakers, utts, seconds, cfg.seed)?;
            println!(
                "wrote {} utterances, {} train trials, {} test trials to {}",
                s.n_utterances,
                s.n_train_trials,
                s.n_test_trials,
                out.display()
            );
        }
        Command::Train { preset, data, out, epochs, batch_size } => {
            if let Some(p) = preset {
                cfg.model.preset = p;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.train.batch_size = b;
            }
            require(&data.join(pipeline::MANIFEST), "manifest")?;
            let r = pipeline::cmd_train(&cfg, &data, &out)?;
            println!(
                "trained {} epochs ({} steps): final loss {:.4}, train accuracy {:.3}; checkpoint {}",
                r.epochs,
                r.steps,
                r.final_loss,
                r.train_accuracy,
                out.join(pipeline::CHECKPOINT).display()
            );
        }
        Command::Embed { model, data, trials, out } => {
            require(&model, "checkpoint")?;
            let n = pipeline::cmd_embed(&cfg, &model, &data, trials.as_deref(), &out)?;
            println!("wrote {n} embeddings to {}", out.display());
        }
        Command::Score { source, trials, out } => {
            let n = pipeline::cmd_score(&cfg, source.source()?, &trials, &out)?;
            println!("wrote {n} scores to {}", out.display());
        }
        Command::Eval { scores, source, trials, out } => {
            let input = match (&scores, &trials) {
                (Some(s), _) => EvalInput::Scores(s),
                (None, Some(t)) => EvalInput::Embeddings { source: source.source()?, trials: t },
                (None, None) => return Err(Error::Usage("give --scores FILE or a --trials FILE to score".into())),
            };
            let report = pipeline::cmd_eval(&cfg, input, &out)?;
            print!("{}", report.to_text());
        }
        Command::Params { preset } => print!("{}", pipeline::cmd_params(&preset)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
