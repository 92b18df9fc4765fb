mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{RunConfig, OUTPUT_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "negotiate",
    version,
    about = "Bilateral negotiation sessions, tournaments and DLST training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set agent.ddpg.gamma=0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; beats the config and the environment variable.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play one session and write its transcript.
    Run {
        #[command(flatten)]
        common: Common,
        /// Agents for side A and side B (baseline names or "dlst").
        #[arg(long, num_args = 2, default_values = ["boulware", "conceder"])]
        agents: Vec<String>,
        /// Index into the configured domains.
        #[arg(long, default_value_t = 0)]
        domain: usize,
    },
    /// Round-robin tournament; writes sessions.csv and metrics.json.
    Tournament {
        #[command(flatten)]
        common: Common,
    },
    /// Record teacher traces and pre-train a fresh agent.
    TrainSl {
        #[command(flatten)]
        common: Common,
    },
    /// Reinforcement-learning sessions against the opponent roster.
    TrainRl {
        #[command(flatten)]
        common: Common,
        /// Start from this checkpoint instead of a fresh agent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the templates a checkpoint would use on a domain.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        domain: usize,
        #[arg(long, value_enum, default_value_t = commands::Side::A)]
        side: commands::Side,
        /// Print full-precision numbers instead of four decimals.
        #[arg(long)]
        exact: bool,
    },
    /// Generate a random domain with two profiles.
    GenDomain {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        issues: usize,
        #[arg(long, default_value_t = 5)]
        values: usize,
        #[arg(long, value_enum)]
        opposition: Option<commands::Opposition>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        reservation: f64,
        #[arg(long, default_value_t = 1.0)]
        discount: f64,
    },
    /// Evaluate a checkpoint (and optionally the baselines) against the opponents.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also evaluate every opponent kind on the same fixtures.
        #[arg(long)]
        baselines: bool,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Run { common, .. }
            | Command::Tournament { common }
            | Command::TrainSl { common }
            | Command::TrainRl { common, .. }
            | Command::Render { common, .. }
            | Command::GenDomain { common, .. }
            | Command::Eval { common, .. } => common,
        }
    }
}

fn help_footer() -> String {
    let defaults = serde_json::to_string_pretty(&RunConfig::default()).unwrap_or_default();
    format!(
        "Output directory: --out, else ${OUTPUT_ENV}, else the config `output` key.\n\
         Exit codes: 0 success, 1 runtime failure, 2 bad arguments or configuration.\n\n\
         Configuration defaults:\n{defaults}"
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let footer = help_footer();
    let matches = Cli::command()
        .after_long_help(footer.clone())
        .mut_subcommands(|sub| sub.after_long_help(footer.clone()))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let common = cli.command.common();
    let config = match load_config(common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let base = common
        .config
        .as_deref()
        .and_then(|p| p.parent())
        .map(PathBuf::from)
        .unwrap_or_default();
    match commands::execute(&cli.command, config, &base) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::build(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.propagate_seed();
    }
    if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
        config.output = dir.into();
    }
    if let Some(dir) = &common.out {
        config.output = dir.clone();
    }
    Ok(config)
}
