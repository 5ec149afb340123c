use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clgl_cli::{
    cmd_evaluate, cmd_generate, cmd_report, cmd_train, cmd_verify_theory, CliError, RunConfig,
};
use clgl_core::graphs::Split;

#[derive(Parser)]
#[command(
    name = "clgl",
    version,
    about = "Expert-guided GNN training and causal checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus and its manifest
    Generate(RunArgs),
    /// Train one model on a generated corpus
    Train(RunArgs),
    /// Score a finished run on one split
    Evaluate {
        #[command(flatten)]
        args: RunArgs,
        /// Run directory written by `train`
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Check the information bounds, IC discovery and d-separation
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n_scms: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare finished runs by mode
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags override keys read from `--config`.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corpus directory written by `generate`
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k_types: Option<usize>,
    #[arg(long)]
    epochs_min: Option<usize>,
    #[arg(long)]
    epochs_max: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Overwrite existing outputs
    #[arg(long)]
    force: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let overrides: [(&str, Option<String>); 12] = [
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            (
                "corpus",
                self.corpus.as_ref().map(|p| p.display().to_string()),
            ),
            ("mode", self.mode.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("bias", self.bias.map(|v| v.to_string())),
            ("count", self.count.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("k_types", self.k_types.map(|v| v.to_string())),
            ("epochs_min", self.epochs_min.map(|v| v.to_string())),
            ("epochs_max", self.epochs_max.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => json(&cmd_generate(&args.resolve()?, args.force)?),
        Command::Train(args) => json(&cmd_train(&args.resolve()?, args.force)?),
        Command::Evaluate { args, run, split } => {
            let split = Split::parse(&split)
                .ok_or_else(|| CliError::Validation(format!("unknown split {split:?}")))?;
            json(&cmd_evaluate(&args.resolve()?, &run, split)?)
        }
        Command::VerifyTheory { seed, n_scms, out } => {
            let report = cmd_verify_theory(&out, seed, n_scms)?;
            println!(
                "{} checks passed (seed {seed}, {n_scms} SCMs per sweep)",
                report.checks.len()
            );
            Ok(())
        }
        Command::Report { runs, out } => {
            print!("{}", cmd_report(&runs, out.as_deref())?.text);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLGL_LOG_LEVEL", "info"))
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
