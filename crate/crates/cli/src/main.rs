//! `pdiv`: command-line front end for the periodic dividend barrier solver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdiv::SearchConfig;

use commands::{BarrierChoice, GridSpec, SimulateArgs};
use config::{CliResult, Failure, Format, RunConfig};
use output::Sink;

/// Environment variable capping the number of worker threads.
const WORKERS_ENV: &str = "PDIV_WORKERS";

#[derive(Parser)]
#[command(name = "pdiv", version, about = "Optimal periodic dividend and capital injection barriers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides output.dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Table format; overrides output.format.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct Barrier {
    /// Dividend barrier; overrides auxiliary.b.
    #[arg(long, conflicts_with = "b_file")]
    b: Option<f64>,
    /// File holding the barrier, as written by `optimal-barrier`.
    #[arg(long)]
    b_file: Option<PathBuf>,
}

impl From<Barrier> for BarrierChoice {
    fn from(b: Barrier) -> Self {
        Self { b: b.b, b_file: b.b_file }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate W, W', Z, Zbar and Z(x, Phi_(q+gamma)).
    Scale {
        #[command(flatten)]
        common: Common,
        /// Discount rate; defaults to auxiliary.delta + auxiliary.lambda.
        #[arg(long)]
        q: Option<f64>,
        /// Observation rate; defaults to auxiliary.gamma.
        #[arg(long)]
        gamma: Option<f64>,
        /// Points as start:stop:count.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
    /// Value and derivative of the double barrier strategy.
    Value {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: Barrier,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
    /// Densities of the double and single barrier potential measures.
    Potential {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: Barrier,
        /// Starting point.
        #[arg(long)]
        x0: f64,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
    /// Optimal barrier of the auxiliary problem with its certification.
    OptimalBarrier {
        #[command(flatten)]
        common: Common,
        /// Width of the final bisection bracket.
        #[arg(long, default_value_t = 1e-8)]
        tol_b: f64,
        /// Initial upper end of the bracket.
        #[arg(long, default_value_t = 10.0)]
        bracket_hi: f64,
        /// Grid of the h profile.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
    /// Fixed-point iteration for the regime-switching barriers.
    RegimeSolve {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo estimates as JSON lines.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: Barrier,
        /// Kernel id such as exit_down or joint:0.5, or "value".
        #[arg(long = "id", required = true)]
        ids: Vec<String>,
        /// Starting points.
        #[arg(long, required = true, value_delimiter = ',')]
        x0: Vec<f64>,
        /// Number of paths; overrides simulation.n_paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Base seed; overrides simulation.base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Initial regime state.
        #[arg(long, default_value_t = 0)]
        state: usize,
    },
    /// Residuals of the variational inequality along a grid.
    HjbCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        barrier: Barrier,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<GridSpec>,
    },
}

fn setup(common: &Common) -> CliResult<(RunConfig, Sink)> {
    let cfg = RunConfig::load(&common.config)?;
    let dir = common.out_dir.clone().or_else(|| cfg.raw.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let format = common.format.unwrap_or(cfg.raw.output.format);
    Ok((cfg, Sink::new(dir, format)))
}

fn configure_workers() -> CliResult<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::validation(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}"))
    })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::validation(e.to_string()))
}

fn run(cli: Cli) -> CliResult<String> {
    configure_workers()?;
    match cli.command {
        Command::Scale { common, q, gamma, grid } => {
            let (cfg, sink) = setup(&common)?;
            commands::scale(&cfg, &sink, q, gamma, &grid)
        }
        Command::Value { common, barrier, grid } => {
            let (cfg, sink) = setup(&common)?;
            commands::value(&cfg, &sink, &barrier.into(), &grid)
        }
        Command::Potential { common, barrier, x0, grid } => {
            let (cfg, sink) = setup(&common)?;
            commands::potential(&cfg, &sink, &barrier.into(), x0, &grid)
        }
        Command::OptimalBarrier { common, tol_b, bracket_hi, grid } => {
            let (cfg, sink) = setup(&common)?;
            let search = SearchConfig { tol_b, bracket_hi_init: bracket_hi, ..SearchConfig::default() };
            commands::optimal_barrier(&cfg, &sink, &search, &grid)
        }
        Command::RegimeSolve { common } => {
            let (cfg, sink) = setup(&common)?;
            commands::regime_solve(&cfg, &sink)
        }
        Command::Simulate { common, barrier, ids, x0, paths, seed, state } => {
            let (cfg, sink) = setup(&common)?;
            let args = SimulateArgs { ids, x0, paths, seed, state, barrier: barrier.into() };
            commands::simulate(&cfg, &sink, &args)
        }
        Command::HjbCheck { common, barrier, grid } => {
            let (cfg, sink) = setup(&common)?;
            commands::hjb_check(&cfg, &sink, &barrier.into(), &grid)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pdiv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
