use clap::{ArgGroup, Args, Parser, Subcommand};
use std::path::PathBuf;
use xcforge::random::Mode;

#[derive(Debug, Parser)]
#[command(name = "xcforge", version, about = "Explicit nonnegative factorizations of slack matrices")]
pub struct Cli {
    /// Directory for reports, plots and CSV dumps.
    #[arg(long, global = true, default_value = "xcforge-out")]
    pub out: PathBuf,
    /// Also dump the factor matrices as CSV.
    #[arg(long, global = true)]
    pub csv: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Random polytope from points on the sphere or in the ball.
    Random(RandomArgs),
    /// Cyclic polygon from an angle file or a random angle model.
    Cyclic(CyclicArgs),
    /// Rank and nonnegative-rank bounds of the separation matrix.
    Separation(SeparationArgs),
    /// Check a factorization M = T U given as CSV files.
    Verify(VerifyArgs),
    /// Five-factor factorization of the regular hexagon.
    HexagonDemo(HexagonArgs),
}

#[derive(Debug, Args, serde::Serialize)]
pub struct RandomArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..=3))]
    pub dim: u32,
    /// Sample size; a comma-separated list runs each size.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value = "sphere")]
    pub mode: Mode,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Cap radius (default n^{-1/(2(d-1))}).
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub near_factor: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Args, serde::Serialize)]
#[group(skip)]
#[command(group(ArgGroup::new("source").required(true).args(["angles", "uniform", "clustered"])))]
pub struct CyclicArgs {
    /// File with one angle in radians per line.
    #[arg(long)]
    pub angles: Option<PathBuf>,
    /// Uniform random angles; a comma-separated list runs each size.
    #[arg(long, value_delimiter = ',')]
    pub uniform: Option<Vec<usize>>,
    /// 90% of the angles in one quadrant.
    #[arg(long, value_delimiter = ',')]
    pub clustered: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct SeparationArgs {
    #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub r_list: Vec<u32>,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub t: PathBuf,
    #[arg(long)]
    pub u: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct HexagonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
