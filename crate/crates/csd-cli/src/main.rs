use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use csd_cli::{cmd_rate, cmd_run, cmd_sweep, ExperimentSpec};

/// Saddle-point search on constrained manifolds: discrete constrained saddle
/// dynamics with optional heavy-ball momentum and one-step reflector updates.
#[derive(Parser)]
#[command(name = "csd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single run and write its CSV record plus metadata sidecar.
    Run(RunArgs),
    /// Run several momentum parameters concurrently and tabulate them.
    Sweep(RunArgs),
    /// Estimate the tail convergence rate of an existing CSV record.
    Rate(RateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Problem family: sphere | cylinder | thomson | rayleigh | bec
    #[arg(long)]
    problem: String,

    /// Sphere polynomial conditioning parameter
    #[arg(long, default_value_t = 2.0)]
    a: f64,

    /// Particle count for the Thomson problem
    #[arg(long = "M", default_value_t = 5)]
    particles: usize,

    /// Ambient dimension for the Rayleigh quotient
    #[arg(long, default_value_t = 100)]
    n: usize,

    /// Column count for the Rayleigh quotient
    #[arg(long, default_value_t = 2)]
    p: usize,

    /// Nodes per dimension (boundary included) for the condensate grid
    #[arg(long = "grid-n", default_value_t = 32)]
    grid_n: usize,

    /// Interaction strength of the condensate functional
    #[arg(long, default_value_t = 300.0)]
    beta: f64,

    /// csd (gamma = 0) or mcsd (gamma > 0)
    #[arg(long, default_value = "csd")]
    method: String,

    /// Unstable-direction update: exact | euler
    #[arg(long, default_value = "exact")]
    eig: String,

    /// Step size
    #[arg(long, default_value_t = 0.01)]
    dt: f64,

    /// Momentum parameter; repeat the flag to sweep
    #[arg(long = "gamma")]
    gamma: Vec<f64>,

    /// Saddle index (defaults to the problem's benchmark target)
    #[arg(long)]
    k: Option<usize>,

    #[arg(long = "max-iters", default_value_t = 20_000)]
    max_iters: usize,

    /// Stop when the Riemannian gradient norm falls below this
    #[arg(long = "grad-tol")]
    grad_tol: Option<f64>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Initial-condition descriptor (defaults per problem)
    #[arg(long)]
    init: Option<String>,

    /// Output directory for CSV records and sidecars
    #[arg(long, default_value = "runs")]
    out: PathBuf,

    /// Derive dt and gamma from the Hessian spectrum at the known saddle
    #[arg(long = "auto-hb", default_value_t = false)]
    auto_hb: bool,
}

#[derive(Args)]
struct RateArgs {
    /// CSV record produced by `run` or `sweep`
    #[arg(long)]
    csv: PathBuf,

    /// Fraction of usable rows fitted (from the tail)
    #[arg(long = "tail-fraction", default_value_t = 0.4)]
    tail_fraction: f64,
}

impl RunArgs {
    fn into_spec(self) -> ExperimentSpec {
        ExperimentSpec {
            problem: self.problem,
            a: self.a,
            particles: self.particles,
            n: self.n,
            p: self.p,
            grid_n: self.grid_n,
            beta: self.beta,
            method: self.method,
            eig: self.eig,
            dt: self.dt,
            gamma: self.gamma,
            k: self.k,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            seed: self.seed,
            init: self.init,
            out: self.out,
            auto_hb: self.auto_hb,
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(&args.into_spec()),
        Command::Sweep(args) => cmd_sweep(&args.into_spec()),
        Command::Rate(args) => cmd_rate(&args.csv, args.tail_fraction),
    };
    std::process::exit(code);
}
