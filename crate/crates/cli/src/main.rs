//! `hetq`: run simulations and analytics from a flat config file and write
//! plot-ready tables plus a manifest that can replay the run.

mod commands;
mod keys;
mod output;

use clap::{Parser, Subcommand, ValueEnum};
use hetq::HetqError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "hetq", version, about = "Many-server queues with random service rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate replications and export the first path.
    Simulate(Common),
    /// Stationary density and waiting probability of the limit diffusion.
    Analyze(Common),
    /// Optimize the safety coefficient under a cost model.
    Staff(Common),
    /// Expected scaled queue length against rate spread, both policies.
    #[command(name = "ql-sweep")]
    QlSweep(Common),
    /// Multiplicative state-space-collapse ratios over increasing r.
    Ssc(Common),
    /// Idleness share per rate bin against the policy's limit.
    Fairness(Common),
    /// Coupled homogeneous/heterogeneous departure counts.
    Couple(Common),
    /// Replay a manifest and check the artifacts are byte-identical.
    Rerun {
        manifest: PathBuf,
        /// Output directory for the replayed artifacts.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<HetqError>() {
        Some(e) if e.is_config() => 2,
        Some(HetqError::EmptyWindow(_)) | Some(HetqError::Window(_)) => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("HETQ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = match cli.command {
        Command::Simulate(c) => commands::dispatch("simulate", &c),
        Command::Analyze(c) => commands::dispatch("analyze", &c),
        Command::Staff(c) => commands::dispatch("staff", &c),
        Command::QlSweep(c) => commands::dispatch("ql-sweep", &c),
        Command::Ssc(c) => commands::dispatch("ssc", &c),
        Command::Fairness(c) => commands::dispatch("fairness", &c),
        Command::Couple(c) => commands::dispatch("couple", &c),
        Command::Rerun { manifest, out } => commands::rerun(&manifest, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
