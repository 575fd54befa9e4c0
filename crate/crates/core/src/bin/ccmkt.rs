use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ccmkt::equilibrium::{tatonnement, EquilibriumError};
use ccmkt::harness::{self, cell_summaries, run_experiment_with, ConfigError, ExperimentConfig, HarnessError, Mode};
use ccmkt::market::ForecastSummary;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "ccmkt", version, about = "Chance-constrained market equilibria with private forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep sample sizes and runs, writing row and aggregate CSV.
    Run(RunArgs),
    /// Find and print a single equilibrium.
    Solve(SolveArgs),
    /// Check a configuration file and list warnings.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Out-of-sample scenarios per run.
    #[arg(long)]
    oos: Option<usize>,
    /// Comma-separated sample sizes, e.g. 10,100,1000.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Output directory (default: the config's, else `./ccmkt-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a price trace every k iterations.
    #[arg(long)]
    trace_every: Option<u64>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Sample size of the private datasets (default: the first configured).
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    run: usize,
    #[arg(long)]
    mode: Option<Mode>,
    /// Ignore forecast data and use zero-uncertainty summaries.
    #[arg(long)]
    deterministic: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => c.into(),
            HarnessError::Io { .. } | HarnessError::Equilibrium(EquilibriumError::Trace(_)) => Failure::Io(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    let (config, warnings) = harness::load_config(path)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(config)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut config = load(&args.config)?;
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(r) = args.runs {
        config.runs = r;
    }
    if let Some(n) = args.oos {
        config.oos_count = n;
    }
    if let Some(s) = args.sizes {
        config.sample_sizes = s;
    }
    if args.trace_every.is_some() {
        config.trace_every = args.trace_every;
    }
    config.output_dir = Some(
        args.out
            .or(config.output_dir.take())
            .unwrap_or_else(|| PathBuf::from("ccmkt-out")),
    );
    harness::validate_config(&config)?;

    let output = run_experiment_with(&config, |row| {
        let status = match (&row.statistics, &row.failure) {
            (Some(s), _) => format!("reliability {:.4}, mean cost {:.1}", s.reliability, s.mean_cost),
            (None, Some(reason)) => format!("no result: {reason}"),
            (None, None) => "no result".into(),
        };
        eprintln!(
            "[{}] size {:>6} run {:>3}: {} iterations, {status}",
            row.mode, row.sample_size, row.run, row.iterations
        );
    })?;

    println!("size,converged,reliability,mean_cost,cvar5");
    for a in &output.aggregates {
        println!(
            "{},{}/{},{:.4},{:.2},{:.2}",
            a.sample_size, a.converged, a.runs, a.reliability.mean, a.mean_cost.mean, a.cvar5.mean
        );
    }
    if let Some(dir) = &config.output_dir {
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let mut config = load(&args.config)?;
    if let Some(m) = args.mode {
        config.mode = m;
    }
    harness::validate_config(&config)?;
    let summaries = if args.deterministic {
        vec![ForecastSummary::deterministic(); config.market.producers.len()]
    } else {
        let size = args.size.unwrap_or(config.sample_sizes[0]);
        cell_summaries(&config, size, args.run)?
    };
    let result = tatonnement(&config.market, &summaries, &config.solver).map_err(HarnessError::from)?;

    println!("producer,p,alpha,variance,w_lo,w_hi");
    for (i, (d, s)) in result.decisions.iter().zip(&summaries).enumerate() {
        println!("{},{},{},{},{},{}", i + 1, d.p, d.alpha, s.variance, s.w_lo, s.w_hi);
    }
    println!("energy price: {}", result.prices.energy);
    println!("reserve price: {}", result.prices.reserve);
    println!("energy residual: {:e}", result.energy_residual);
    println!("reserve residual: {:e}", result.reserve_residual);
    println!("iterations: {}", result.iterations);
    println!("converged: {}", result.converged);
    if result.reserve_shortfall {
        println!("reserve shortfall: producers cannot cover the full forecast error");
    }
    if result.converged {
        Ok(())
    } else {
        Err(Failure::Runtime("price iteration did not converge".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Solve(args) => solve(args),
        Command::Validate { config } => load(&config).map(|c| {
            println!(
                "ok: {} producers, mode {}, {} sample sizes x {} runs, {} scenarios",
                c.market.producers.len(),
                c.mode,
                c.sample_sizes.len(),
                c.runs,
                c.oos_count
            );
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
