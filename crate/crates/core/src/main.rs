use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use reprograph::error::Error;
use reprograph::experiment::{emit, run_command, Command, ExperimentConfig, SEED_ENV};

const EXIT_USAGE: u8 = 1;
const EXIT_RESOURCE: u8 = 2;
const EXIT_CHECKS_FAILED: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "reprograph", version, about = "Simulate and analyse randomised reproducing graphs")]
struct Cli {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Child-child edge probability.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Parent-child edge probability.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Child-neighbour edge probability.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Generations to grow (or chain steps).
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Independent replicates.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Master seed (default: $REPROGRAPH_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Starting graph: k<n>, p<n>, c<n>, e<n>, or an edge-list file.
    #[arg(long, global = true)]
    g0: Option<String>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Abort with exit code 2 once a graph would exceed this many vertices
    #[arg(long, global = true)]
    max_vertices: Option<usize>,
    /// Abort with exit code 2 once a graph would exceed this many edges
    #[arg(long, global = true)]
    max_edges: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Grow G_0 for --steps generations and tabulate each generation.
    Grow {
        /// Write a DOT file of these generations (comma-separated).
        #[arg(long)]
        snapshot: Option<String>,
    },
    /// Simulate the degree chain or solve for its stationary law.
    Chain {
        /// Solve for the stationary law instead of simulating a trajectory.
        #[arg(long)]
        stationary: bool,
        /// Print only the tail exponent p*.
        #[arg(long)]
        tail_only: bool,
        /// Fixed kernel truncation (default: adaptive).
        #[arg(long)]
        truncation: Option<usize>,
        /// Power-iteration tolerance on the L1 residual.
        #[arg(long)]
        tol: Option<f64>,
        /// Initial degree (default: degree of a uniform vertex of G_0).
        #[arg(long)]
        x0: Option<u64>,
    },
    /// Classify every (alpha, gamma) grid point.
    Phase {
        /// Comma list or start:stop:step.
        #[arg(long)]
        grid_alpha: Option<String>,
        /// Same syntax as --grid-alpha.
        #[arg(long)]
        grid_gamma: Option<String>,
        /// Add Monte Carlo columns.
        #[arg(long)]
        empirical: bool,
        /// Chain steps discarded before the empirical mean degree.
        #[arg(long)]
        burn_in: Option<usize>,
        /// Steps simulated for the empirical extinction estimate.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Normalized Laplacian spectrum and Cheeger constants per generation.
    Spectral {
        /// Exit with code 2 if a generation has more vertices than this.
        #[arg(long)]
        max_spectral_vertices: Option<usize>,
    },
    /// beta = 0: extinction verdict, extinction estimate and isolation curve.
    Bpre {
        /// Initial degree of the extinction estimate.
        #[arg(long)]
        x0: Option<u64>,
        /// Steps simulated before a path counts as surviving.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Run the acceptance checks.
    Check {
        /// Comma-separated check names or numbers.
        #[arg(long)]
        only: Option<String>,
        /// List the checks without running them.
        #[arg(long)]
        list: bool,
    },
}

fn put<T: ToString>(map: &mut BTreeMap<String, String>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v.to_string());
    }
}

fn put_flag(map: &mut BTreeMap<String, String>, key: &str, on: bool) {
    if on {
        map.insert(key.to_string(), "true".to_string());
    }
}

fn flags(cli: &Cli) -> (Command, BTreeMap<String, String>) {
    let mut m = BTreeMap::new();
    let c = &cli.common;
    put(&mut m, "alpha", c.alpha);
    put(&mut m, "beta", c.beta);
    put(&mut m, "gamma", c.gamma);
    put(&mut m, "steps", c.steps);
    put(&mut m, "reps", c.reps);
    put(&mut m, "seed", c.seed);
    put(&mut m, "g0", c.g0.as_ref());
    put(&mut m, "out", c.out.as_ref().map(|p| p.display().to_string()));
    put(&mut m, "format", c.format.as_ref());
    put(&mut m, "workers", c.workers);
    put(&mut m, "max-vertices", c.max_vertices);
    put(&mut m, "max-edges", c.max_edges);
    let command = match &cli.command {
        Sub::Grow { snapshot } => {
            put(&mut m, "snapshot", snapshot.as_ref());
            Command::Grow
        }
        Sub::Chain {
            stationary,
            tail_only,
            truncation,
            tol,
            x0,
        } => {
            put_flag(&mut m, "stationary", *stationary);
            put_flag(&mut m, "tail-only", *tail_only);
            put(&mut m, "truncation", *truncation);
            put(&mut m, "tol", *tol);
            put(&mut m, "x0", *x0);
            Command::Chain
        }
        Sub::Phase {
            grid_alpha,
            grid_gamma,
            empirical,
            burn_in,
            horizon,
        } => {
            put(&mut m, "grid-alpha", grid_alpha.as_ref());
            put(&mut m, "grid-gamma", grid_gamma.as_ref());
            put_flag(&mut m, "empirical", *empirical);
            put(&mut m, "burn-in", *burn_in);
            put(&mut m, "horizon", *horizon);
            Command::Phase
        }
        Sub::Spectral { max_spectral_vertices } => {
            put(&mut m, "max-spectral-vertices", *max_spectral_vertices);
            Command::Spectral
        }
        Sub::Bpre { x0, horizon } => {
            put(&mut m, "x0", *x0);
            put(&mut m, "horizon", *horizon);
            Command::Bpre
        }
        Sub::Check { only, list } => {
            put(&mut m, "only", only.as_ref());
            put_flag(&mut m, "list", *list);
            Command::Check
        }
    };
    (command, m)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ResourceLimit { .. } => EXIT_RESOURCE,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, flag_map) = flags(&cli);
    let env_seed = std::env::var(SEED_ENV).ok();
    let start = Instant::now();
    let result = ExperimentConfig::resolve(command, &flag_map, cli.config.as_deref(), env_seed.as_deref())
        .and_then(|cfg| {
            let out = run_command(&cfg)?;
            emit(&cfg, &out, start.elapsed().as_secs_f64())?;
            Ok(out)
        });
    match result {
        Ok(out) if out.failed_checks > 0 => {
            eprintln!("reprograph: {} check(s) failed", out.failed_checks);
            ExitCode::from(EXIT_CHECKS_FAILED)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reprograph: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
