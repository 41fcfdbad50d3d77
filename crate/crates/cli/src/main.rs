use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod bench;
mod cache_cmd;
mod filter;
mod io;

use io::Failure;

#[derive(Parser)]
#[command(name = "trajguard", version, about = "Safety filter for cached manipulator trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario through the safety filter and write its trace.
    Filter {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inspect or use a trajectory cache.
    #[command(subcommand)]
    Cache(CacheCommand),
    /// Time the filter on a scenario.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Request {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    behavior: String,
    /// Planning scene JSON.
    #[arg(long)]
    scene: PathBuf,
    /// Joint state, a JSON array.
    #[arg(long)]
    state: PathBuf,
}

#[derive(Subcommand)]
enum CacheCommand {
    /// Print the suitability of every entry for a request.
    Query {
        #[command(flatten)]
        request: Request,
    },
    /// Add a trajectory, creating the cache file if needed.
    Insert {
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        behavior: String,
        #[arg(long)]
        scene: PathBuf,
        /// Trajectory JSON or CSV.
        #[arg(long)]
        trajectory: PathBuf,
        /// Thresholds for a new cache file.
        #[arg(long, num_args = 3, value_names = ["T1", "T2", "T3"])]
        thresholds: Option<Vec<f64>>,
    },
    /// Filter the best cached trajectory or fall back to a planner command.
    Run {
        #[command(flatten)]
        request: Request,
        /// Scenario supplying the robot and the filter parameters.
        #[arg(long)]
        scenario: PathBuf,
        /// Shell command that plans from scratch (see README).
        #[arg(long)]
        fallback_cmd: Option<String>,
        /// Where to write the resulting trajectory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Filter { scenario, out } => filter::run(&scenario, &out),
        Command::Bench { scenario, iters, out } => bench::run(&scenario, iters, out.as_deref()),
        Command::Cache(CacheCommand::Query { request }) => cache_cmd::query(&request.cache, &request.behavior, &request.scene, &request.state),
        Command::Cache(CacheCommand::Insert { cache, behavior, scene, trajectory, thresholds }) => {
            cache_cmd::insert(&cache, &behavior, &scene, &trajectory, thresholds.as_deref())
        }
        Command::Cache(CacheCommand::Run { request, scenario, fallback_cmd, out }) => cache_cmd::run(
            &cache_cmd::RunArgs {
                cache: &request.cache,
                behavior: &request.behavior,
                scene: &request.scene,
                state: &request.state,
                scenario: &scenario,
                fallback_cmd: fallback_cmd.as_deref(),
            },
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRAJGUARD_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code)
        }
    }
}
