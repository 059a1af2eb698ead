use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seanet::cli::{load_config, run, ExperimentConfig, ExperimentKind};
use seanet::Error;

#[derive(Parser)]
#[command(name = "seanet", version, about = "Symbol-gated network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic feature dataset.
    Gendata(Args),
    /// Train one agent on all classes.
    Train(Args),
    /// Acquire held-out classes by symbol inference.
    Infer(Args),
    /// Play the translator game between speaker and listeners.
    Communicate(Args),
    /// Cluster a symbol set and compare it with a reference.
    Analyze(Args),
    /// Train with fixed symbols reduced from word vectors.
    Wordvec(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (kind, args) = match cli.command {
        Command::Gendata(a) => (ExperimentKind::Gendata, a),
        Command::Train(a) => (ExperimentKind::Train, a),
        Command::Infer(a) => (ExperimentKind::Infer, a),
        Command::Communicate(a) => (ExperimentKind::Communicate, a),
        Command::Analyze(a) => (ExperimentKind::Analyze, a),
        Command::Wordvec(a) => (ExperimentKind::Wordvec, a),
    };
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let mut config = match &args.config {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(EXIT_VALIDATION);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Err(e) = config.validate(kind) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run(kind, &config, &args.out) {
        Ok(summary) => {
            for (name, value) in &summary.metrics {
                println!("{name} = {value}");
            }
            println!("wrote {} files to {}", summary.artifacts.len(), args.out.display());
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
