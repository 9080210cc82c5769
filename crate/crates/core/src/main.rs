//! Command-line front end: solve | boundaries | simulate | verify | figures.

use clap::{Args, Parser, Subcommand};
use divdraw::report::{self, Experiment, RawConfig, RunConfig};
use divdraw::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "divdraw",
    version,
    about = "Optimal dividend payout under a drawdown constraint",
    long_about = "Solves the dividend payout problem whose rate may never fall below a fixed \
                  proportion of its running maximum, extracts the switching and converting \
                  boundaries, and verifies the surface by simulation and an independent \
                  dynamic-programming oracle. Artifacts are plain CSV/JSON."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the value surface and extract both free boundaries
    Solve(CommonArgs),
    /// Solve and emit only the free boundaries
    Boundaries(CommonArgs),
    /// Monte Carlo estimate of a payout strategy's value
    Simulate(CommonArgs),
    /// Compare the solved surface against the dynamic-programming oracle
    Verify(CommonArgs),
    /// Reproduce the four-drawdown study (b = 0.4, 0.6, 0.8, 1.0)
    Figures(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Surplus drift rate
    #[arg(long)]
    mu: Option<f64>,
    /// Surplus volatility rate
    #[arg(long)]
    sigma: Option<f64>,
    /// Discount rate
    #[arg(long)]
    r: Option<f64>,
    /// Maximum payout rate, in (0, mu]
    #[arg(long)]
    cbar: Option<f64>,
    /// Drawdown proportion in [0, 1]
    #[arg(long)]
    b: Option<f64>,
    /// Spatial intervals of the solver grid
    #[arg(long)]
    nx: Option<usize>,
    /// Payout levels of the solver grid
    #[arg(long)]
    nc: Option<usize>,
    /// Truncation point (0 or unset: model-dependent default)
    #[arg(long)]
    xmax: Option<f64>,
    /// Experiment tolerance (verify: value-iteration tolerance)
    #[arg(long)]
    tol: Option<f64>,
    /// Initial surplus for simulation
    #[arg(long)]
    x0: Option<f64>,
    /// Initial running-maximum payout rate (default cbar)
    #[arg(long)]
    c0: Option<f64>,
    /// Simulation time step
    #[arg(long)]
    dt: Option<f64>,
    /// Simulation horizon (default 100 / r)
    #[arg(long)]
    horizon: Option<f64>,
    /// Monte Carlo path count
    #[arg(long)]
    paths: Option<usize>,
    /// Master seed; per-path streams derive from it
    #[arg(long)]
    seed: Option<u64>,
    /// optimal | boundary | constant:<a> | ratchet_greedy | unconstrained_barrier
    #[arg(long)]
    strategy: Option<String>,
    /// Pair paths with sign-flipped increments
    #[arg(long)]
    antithetic: Option<bool>,
    /// Brownian-bridge ruin correction (default on)
    #[arg(long)]
    bridge: Option<bool>,
    /// Record the first k paths to trace.csv
    #[arg(long)]
    trace: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config file (JSON or key=value); flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

impl CommonArgs {
    fn to_raw(&self) -> RawConfig {
        RawConfig {
            mu: self.mu,
            sigma: self.sigma,
            r: self.r,
            cbar: self.cbar,
            b: self.b,
            nx: self.nx,
            nc: self.nc,
            xmax: self.xmax,
            tol: self.tol,
            x0: self.x0,
            c0: self.c0,
            dt: self.dt,
            horizon: self.horizon,
            paths: self.paths,
            seed: self.seed,
            strategy: self.strategy.clone(),
            antithetic: self.antithetic,
            bridge: self.bridge,
            trace: self.trace,
            out: self.out.clone(),
            ..RawConfig::default()
        }
    }
}

fn execute(experiment: Experiment, args: &CommonArgs) -> divdraw::Result<Vec<PathBuf>> {
    let mut raw = args.to_raw();
    if let Some(path) = &args.config {
        raw = raw.or(RawConfig::from_file(path)?);
    }
    let cfg = RunConfig::resolve(experiment, raw)?;
    report::run(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Solve(a) => (Experiment::Solve, a),
        Command::Boundaries(a) => (Experiment::Boundaries, a),
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Verify(a) => (Experiment::Verify, a),
        Command::Figures(a) => (Experiment::Figures, a),
    };
    match execute(experiment, args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e @ (Error::Config(_) | Error::InvalidParams(_))) => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            let json = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            println!("{json}");
            ExitCode::from(1)
        }
    }
}
