use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ctxinfo::corpus::{build_vocabulary, ReservedTokens, Split};
use ctxinfo::models::adapter::serve_echo;
use ctxinfo_cli::config::{CorpusFormat, ExperimentConfig, ModelConfig};
use ctxinfo_cli::manifest::write_atomic;
use ctxinfo_cli::runner::{load_corpus, run_experiment, Experiment, ModelFile, RunOptions, WORKERS_ENV};
use ctxinfo_cli::synth::{generate, SynthConfig};
use ctxinfo_cli::{report, RunError};

#[derive(Parser)]
#[command(name = "ctxinfo", version, about = "Context ablation experiments for language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Sidecar,
    Plain,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Comma-separated seeds replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Adapter address (`tcp://host:port` or a command line) replacing the
    /// config's model.
    #[arg(long)]
    adapter: Option<String>,
    /// Output directory replacing the config's.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, RunError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seeds) = &self.seeds {
            config.seeds = seeds.clone();
        }
        if let Some(address) = &self.adapter {
            config.model = ModelConfig::Adapter {
                address: address.clone(),
                timeout_secs: 60,
            };
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write it back in canonical sidecar form.
    Ingest {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "sidecar")]
        format: Format,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train the model of one arm and save it.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        arm: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate a saved model on one arm's validation windows.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        arm: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run or resume the full grid.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        /// Stop after this many jobs.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Regenerate the table and chart of a results directory.
    Report { results: PathBuf },
    /// Write a synthetic annotated corpus.
    Synth {
        #[arg(long, default_value_t = 100_000)]
        words: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Serve the constant-score adapter on standard streams.
    EchoAdapter {
        #[arg(long, default_value_t = 50_000)]
        vocab: usize,
    },
}

fn ingest(input: &Path, format: Format, output: Option<&Path>) -> Result<(), RunError> {
    let format = match format {
        Format::Sidecar => CorpusFormat::Sidecar,
        Format::Plain => CorpusFormat::Plain,
    };
    let corpus = load_corpus(input, format, Split::Train, &ReservedTokens::default())?;
    let vocab = build_vocabulary(&corpus);
    eprintln!(
        "{}: {} documents, {} tokens, {} types",
        input.display(),
        corpus.documents.len(),
        corpus.token_count(),
        vocab.len()
    );
    if let Some(out) = output {
        write_atomic(out, corpus.to_sidecar().as_bytes())?;
    }
    Ok(())
}

fn arm_of(exp: &Experiment, name: &str) -> Result<ctxinfo_cli::runner::Arm, RunError> {
    exp.find_arm(name)
        .ok_or_else(|| RunError::Config(format!("no arm named `{name}`")))
}

fn train(args: &ConfigArgs, arm: &str, seed: u64, out: &Path) -> Result<(), RunError> {
    let exp = Experiment::load(args.load()?)?;
    let a = arm_of(&exp, arm)?;
    let (model, windows, short) = exp.train(a, seed)?;
    let file = exp
        .model_file(a, seed, &model, windows, short)
        .ok_or_else(|| RunError::Config("adapter models are not trained here".into()))?;
    let mut w = BufWriter::new(File::create(out)?);
    serde_json::to_writer(&mut w, &file).map_err(|e| RunError::Other(e.to_string()))?;
    w.flush()?;
    eprintln!("{arm} seed {seed}: trained on {windows} windows");
    Ok(())
}

fn evaluate(args: &ConfigArgs, arm: &str, seed: u64, model: &Path, out: &Path) -> Result<(), RunError> {
    let exp = Experiment::load(args.load()?)?;
    let a = arm_of(&exp, arm)?;
    let reader = BufReader::new(
        File::open(model).map_err(|e| RunError::Config(format!("{}: {e}", model.display())))?,
    );
    let file: ModelFile =
        serde_json::from_reader(reader).map_err(|e| RunError::Config(e.to_string()))?;
    let (model, windows, short) = exp.model_from_file(file)?;
    let result = exp.evaluate(a, seed, &model, windows, short)?;
    let text = serde_json::to_string_pretty(&result).map_err(|e| RunError::Other(e.to_string()))?;
    write_atomic(out, text.as_bytes())?;
    for r in &result.reports {
        println!("{}\t{}\t{:.6}", arm, r.condition, r.mean_nll);
    }
    Ok(())
}

fn run(args: &ConfigArgs, workers: Option<usize>, stop_after: Option<usize>) -> Result<(), RunError> {
    let summary = run_experiment(args.load()?, &RunOptions { workers, stop_after })?;
    eprintln!(
        "trained {}, evaluated {}, reused {}{}",
        summary.trained,
        summary.evaluated,
        summary.skipped,
        if summary.stopped_early { " (stopped early)" } else { "" }
    );
    if !summary.stopped_early {
        let table = fs::read_to_string(summary.output_dir.join(report::TABLE_FILE))?;
        print!("{table}");
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), RunError> {
    match &cli.command {
        Command::Ingest { input, format, output } => ingest(input, *format, output.as_deref()),
        Command::Train { config, arm, seed, model } => train(config, arm, *seed, model),
        Command::Evaluate { config, arm, seed, model, output } => evaluate(config, arm, *seed, model, output),
        Command::Run { config, workers, stop_after } => run(config, *workers, *stop_after),
        Command::Report { results } => report::emit_report(results).map(|()| {
            print!("{}", fs::read_to_string(results.join(report::TABLE_FILE)).unwrap_or_default())
        }),
        Command::Synth { words, seed, output } => {
            let text = generate(&SynthConfig {
                words: *words,
                seed: *seed,
                ..SynthConfig::default()
            });
            write_atomic(output, text.as_bytes()).map_err(RunError::from)
        }
        Command::EchoAdapter { vocab } => {
            let stdin = io::stdin();
            serve_echo(stdin.lock(), io::stdout().lock(), *vocab).map_err(RunError::from)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(&Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
