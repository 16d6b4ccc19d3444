use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use nhr_cli::config::{ExperimentConfig, Overrides};
use nhr_cli::{commands, OutputFormat};
use nhr_core::evaluation::HrMode;
use nhr_core::Result;

#[derive(Parser)]
#[command(
    name = "nhr",
    version,
    about = "Hybrid neural recommender pipeline: ingest, pretrain, fuse, evaluate"
)]
struct Cli {
    /// Experiment TOML file.
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Ranking cutoff; overrides eval.k (default 10).
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Output format for the comparison table.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Table)]
    format: OutputFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse interactions, split, encode features, sample candidates.
    Ingest,
    /// Train each declared component model and checkpoint it.
    Pretrain {
        /// Train only this model.
        #[arg(long)]
        model: Option<String>,
    },
    /// Search fusion weights, fuse pretrained components, fine-tune.
    Fuse {
        /// Fuse only this [[fusion]] entry.
        #[arg(long)]
        name: Option<String>,
        /// Skip the grid search: comma-separated weights, one per component.
        #[arg(long)]
        weights: Option<String>,
    },
    /// Score every checkpoint on the test candidates and print the table.
    Evaluate {
        /// Hit-ratio mode; `one-over-k` is the literal printed form, kept
        /// for auditing.
        #[arg(long, value_enum, default_value_t = HrModeArg::Indicator)]
        hr_mode: HrModeArg,
        /// Keep per-user records in the report files.
        #[arg(long)]
        per_user: bool,
    },
    /// Fit PopRank and BPR on the train split and checkpoint them.
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum HrModeArg {
    Indicator,
    OneOverK,
}

impl From<HrModeArg> for HrMode {
    fn from(a: HrModeArg) -> HrMode {
        match a {
            HrModeArg::Indicator => HrMode::Indicator,
            HrModeArg::OneOverK => HrMode::OneOverK,
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        k: cli.k,
    };
    let cfg = ExperimentConfig::load(&cli.config, &overrides)?;
    match &cli.command {
        Command::Ingest => commands::ingest::run(&cfg),
        Command::Pretrain { model } => commands::pretrain::run(&cfg, model.as_deref()),
        Command::Fuse { name, weights } => {
            commands::fuse::run(&cfg, name.as_deref(), weights.as_deref())
        }
        Command::Evaluate { hr_mode, per_user } => {
            commands::evaluate::run(&cfg, cli.format, (*hr_mode).into(), *per_user)
        }
        Command::Baseline => commands::baseline::run(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
