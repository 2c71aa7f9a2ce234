mod commands;
mod config;
mod data;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use teamstrength::model::Role;

/// Exit status 1: the inputs were fine but the computation failed.
pub const EXIT_RUNTIME: u8 = 1;
/// Exit status 2: bad flags, config or input references.
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: msg.to_string(),
        }
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: msg.to_string(),
        }
    }
}

impl From<teamstrength::error::Error> for CliError {
    fn from(e: teamstrength::error::Error) -> Self {
        Self::runtime(e)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "teamstrength",
    version,
    about = "Latent team strength modelling for football results"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. Anything set here beats the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, short = 'o', global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub states: Option<usize>,
    #[arg(long, global = true)]
    pub goal_states: Option<usize>,
    #[arg(long, global = true)]
    pub c_transition: Option<f64>,
    #[arg(long, global = true)]
    pub c_goal: Option<f64>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub max_iterations: Option<usize>,
    #[arg(long, global = true)]
    pub bp_cycles: Option<usize>,
    #[arg(long, global = true)]
    pub convergence_tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub season_gap_days: Option<i64>,
    #[arg(long, global = true)]
    pub weekly_iters: Option<usize>,
    /// Skip malformed rows instead of failing.
    #[arg(long, global = true)]
    pub lenient: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a match CSV and write the canonical copy plus team and week tables.
    Ingest { matches: PathBuf },
    /// Fit the model by EM and write model.json and trace.csv.
    Train { matches: PathBuf },
    /// Run inference under a fitted model and write per-week marginals.
    Infer {
        #[arg(long)]
        model: PathBuf,
        matches: PathBuf,
    },
    /// Export one team's strength over time.
    Timeline {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        team: String,
        #[arg(long, value_parser = parse_role, default_value = "offense")]
        role: Role,
        matches: PathBuf,
    },
    /// Predict scorelines and results for upcoming fixtures.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV with Date, HomeTeam and AwayTeam columns, all after the match data.
        #[arg(long)]
        fixtures: PathBuf,
        matches: PathBuf,
    },
    /// Rolling out-of-sample comparison against the baselines.
    Evaluate {
        /// First held-out week (0-based).
        #[arg(long, conflicts_with = "split_date")]
        split_week: Option<usize>,
        /// First held-out date; the split is the first week starting on or after it.
        #[arg(long)]
        split_date: Option<String>,
        matches: PathBuf,
    },
    /// Sample goals and latent paths for a fixture list under a model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Fixture list to fill in; goal columns, if any, are ignored.
        #[arg(long)]
        skeleton: PathBuf,
    },
    /// Check a model file's hash and parameter constraints.
    Validate { model: PathBuf },
}

fn parse_role(s: &str) -> Result<Role, String> {
    match s.to_ascii_lowercase().as_str() {
        "offense" | "attack" => Ok(Role::Offense),
        "defense" | "defence" => Ok(Role::Defense),
        _ => Err(format!("unknown role `{s}`, expected offense or defense")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::runtime)?;
    }
    let ctx = commands::Context::new(&cli.global)?;
    match cli.command {
        Command::Ingest { matches } => commands::ingest(&ctx, &matches),
        Command::Train { matches } => commands::train(&ctx, &matches),
        Command::Infer { model, matches } => commands::infer(&ctx, &model, &matches),
        Command::Timeline {
            model,
            team,
            role,
            matches,
        } => commands::timeline(&ctx, &model, &matches, &team, role),
        Command::Predict {
            model,
            fixtures,
            matches,
        } => commands::predict(&ctx, &model, &matches, &fixtures),
        Command::Evaluate {
            split_week,
            split_date,
            matches,
        } => commands::evaluate(&ctx, &matches, split_week, split_date.as_deref()),
        Command::Simulate { model, skeleton } => commands::simulate(&ctx, &model, &skeleton),
        Command::Validate { model } => commands::validate(&ctx, &model),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
