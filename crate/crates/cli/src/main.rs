mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Heat kernels of divergence-form operators in degenerate random
/// environments.
#[derive(Debug, Parser)]
#[command(name = "heatlab", version, about)]
pub struct Cli {
    /// Worker threads; HEATLAB_WORKERS overrides this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or summarise environments.
    #[command(subcommand)]
    Env(EnvCmd),
    /// Inspect the discrete generator.
    #[command(subcommand)]
    Op(OpCmd),
    /// Heat kernels and random walkers.
    #[command(subcommand)]
    Heat(HeatCmd),
    /// Intrinsic distance maps.
    #[command(subcommand)]
    Metric(MetricCmd),
    /// Check a kernel inequality against stored kernels.
    Verify(VerifyArgs),
    /// Stochastic checks: chained averages, Rosenthal, moment scaling.
    #[command(subcommand)]
    Stoch(StochCmd),
    /// Green's function solves and the scaling limit.
    #[command(subcommand)]
    Green(GreenCmd),
    /// Run a pinned verification suite end to end.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Subcommand)]
pub enum EnvCmd {
    /// Sample an environment from a JSON spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Box moments and ball-average curves.
    Stats {
        #[arg(long)]
        env: PathBuf,
        /// JSON array of centre points.
        #[arg(long)]
        centers: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        radii: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum OpCmd {
    /// Write the generator in coordinate text format.
    Export {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Periodic)]
        boundary: BoundaryArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoundaryArg {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Subcommand)]
pub enum HeatCmd {
    /// Crank–Nicolson kernel column from one source.
    Kernel {
        #[arg(long)]
        env: PathBuf,
        /// Source cell as comma-separated indices.
        #[arg(long, value_delimiter = ',')]
        x0: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continuous-time walkers compared against the kernel.
    Walkers {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Vec<usize>,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1_000_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum MetricCmd {
    /// Intrinsic distances from one source.
    Map {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Vec<usize>,
        /// Neighbourhood size: 4, 8 or 16 in 2D; 6 or 26 in 3D.
        #[arg(long)]
        nbhd: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Euclidean comparison and sandwich bounds for a stored map.
    Compare {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        metric: PathBuf,
        /// Target cells, taken on an even stride through the grid.
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VerifyKind {
    Upper,
    UpperEuclid,
    Lower,
    Longrange,
    Floor,
    Sobolev,
    Maximal,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub kind: VerifyKind,
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Kernel directories; repeat for an ensemble.
    #[arg(long)]
    pub kern: Vec<PathBuf>,
    /// Metric directories, paired with the kernels in order.
    #[arg(long)]
    pub metric: Vec<PathBuf>,
    #[arg(long, default_value_t = 24.0)]
    pub max_distance: f64,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub max_slope: f64,
    #[arg(long, default_value_t = 0.1)]
    pub stability: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub scales: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub t_floor: f64,
    /// Time for the near-diagonal floor.
    #[arg(long)]
    pub t: Option<f64>,
    /// Ball or cylinder radius for the Sobolev and maximal probes.
    #[arg(long, default_value_t = 8.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 16)]
    pub trials: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum StochCmd {
    /// Chained ball averages along a segment.
    Chain {
        #[arg(long)]
        spec: PathBuf,
        /// Chain endpoint relative to the origin.
        #[arg(long, value_delimiter = ',', default_value = "24,0")]
        endpoint: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        radii: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        sequences: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive Rosenthal ratios over random small ensembles.
    Rosenthal {
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, value_delimiter = ',', default_value = "3,4")]
        exponents: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Moment scaling of centred region integrals; also writes a CSV.
    Moments {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 1.5)]
        xi: f64,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024")]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
        #[arg(long)]
        segment: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum GreenCmd {
    /// Green's function of a 3D environment with Dirichlet far-field data.
    Solve {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Vec<usize>,
        /// Use the Newtonian potential of this scalar covariance as boundary
        /// data instead of zero.
        #[arg(long)]
        newtonian: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scaling errors e_n against the Brownian Green's function.
    Limit {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0.375)]
        r1: f64,
        #[arg(long, default_value_t = 0.75)]
        r2: f64,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        n: Vec<f64>,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        /// Known scalar covariance; estimated when absent.
        #[arg(long)]
        sigma: Option<f64>,
        /// Prefactor for the negative control.
        #[arg(long)]
        wrong_a: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Suite name, for example gaussian-sanity or upper-d2.
    pub suite: String,
    #[arg(long, default_value = "small")]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scale computed kernels by 1.05 before checking.
    #[arg(long)]
    pub corrupt: bool,
    /// Abort with exit code 3 after this many seconds.
    #[arg(long)]
    pub max_seconds: Option<f64>,
    /// Refuse suites whose largest grid has more nodes than this.
    #[arg(long)]
    pub max_cells: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    ExitCode::from(commands::run(cli, args))
}
