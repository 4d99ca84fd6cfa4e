use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qvc_cli::{commands, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "qvc", version, about = "Circuit-centric quantum classifier simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on `data` and write the model file and per-epoch metrics.
    Train(Common),
    /// Classify the rows of `data` with a saved model.
    Predict(Common),
    /// Stratified k-fold cross-validation with a summary table.
    Crossval(Common),
    /// Compare analytic gradients with finite differences on random circuits.
    Gradcheck(Common),
    /// Perturb a saved model's parameters or the test inputs.
    Noise(Common),
    /// Print gate and parameter counts for an architecture.
    Describe(Common),
}

#[derive(clap::Args)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// `exact` or `shots:S`.
    #[arg(long)]
    estimator: Option<String>,
    /// `exact`, `shots:S` or `oracle`.
    #[arg(long)]
    gradient: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other configuration key as `--key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
    overrides: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(t) = self.threads {
            cfg.set("threads", &t.to_string())?;
        }
        if let Some(e) = &self.estimator {
            cfg.set("estimator", e)?;
        }
        if let Some(g) = &self.gradient {
            cfg.set("gradient", g)?;
        }
        if let Some(o) = &self.out {
            cfg.set("out", &o.to_string_lossy())?;
        }
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }
}

type Handler = fn(&RunConfig, &mut dyn std::io::Write) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, cmd): (&Common, Handler) = match &cli.command {
        Command::Train(c) => (c, commands::train),
        Command::Predict(c) => (c, commands::predict),
        Command::Crossval(c) => (c, commands::crossval),
        Command::Gradcheck(c) => (c, commands::gradcheck),
        Command::Noise(c) => (c, commands::noise),
        Command::Describe(c) => (c, commands::describe),
    };
    let cfg = common.config()?;
    let threads = cfg.threads()?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let stdout = std::io::stdout();
    cmd(&cfg, &mut stdout.lock())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qvc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
