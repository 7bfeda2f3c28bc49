use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dna", version, about = "Diverse near-optimal alternatives on grid MDPs")]
pub struct Cli {
    /// Worker threads for searches and rollouts (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Benchmark tables: V*, Q* and the greedy policy.
    Solve(SolveArgs),
    /// Corridor search from a start state.
    Search(SearchArgs),
    /// Monte Carlo traversal statistics for searched options.
    Simulate(SimulateArgs),
    /// Property suites for the value and traversal guarantees.
    Verify(VerifyArgs),
    /// Plot layers: corridor overlays, policy arrows and option diffs.
    Render(RenderArgs),
    /// HTTP API over a directory of maps.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Map text file (S start, F frozen, H hole, G goal).
    #[arg(long)]
    pub map: PathBuf,
    /// JSON configuration; defaults to the map path with a .json extension
    /// when that exists, else built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Qlearn,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: Mode,
    /// Value-iteration stopping threshold.
    #[arg(long, default_value_t = dna::solver::ORACLE_TOL)]
    pub tol: f64,
    /// Learner seed.
    #[arg(long, env = "DNA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Learner episode cap (default: the learner's own default).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Output directory for vstar.json, vstar.csv and qtable.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Start state as `y,x`.
    #[arg(long, value_parser = parse_coords)]
    pub start: Coords,
    #[arg(long)]
    pub epsilon: f64,
    /// Cells per corridor.
    #[arg(long)]
    pub cells: usize,
    /// Cell half-width (default: from the config).
    #[arg(long)]
    pub d: Option<usize>,
    /// Distance between neighboring cell centers (default: from the config).
    #[arg(long)]
    pub spacing: Option<usize>,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: Mode,
    /// Learner seed for `--mode qlearn`.
    #[arg(long, env = "DNA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// A search document written by `dna search`.
    #[arg(long)]
    pub options: PathBuf,
    /// Option ids or ranks to simulate (default: all).
    #[arg(long = "option")]
    pub selected: Vec<String>,
    #[arg(long, default_value_t = dna::sim::DEFAULT_ROLLOUTS)]
    pub n: usize,
    #[arg(long, env = "DNA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Steps per rollout (default: 10 |S|).
    #[arg(long)]
    pub step_cap: Option<usize>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// One CSV row per option.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Sample trajectories per option written to `--samples-out`.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[arg(long, requires = "samples")]
    pub samples_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Lemmas,
    Theorem1,
    Theorem2,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Random instances for the lemma and theorem1 suites.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// First instance seed; instances use consecutive seeds.
    #[arg(long, env = "DNA_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Map for the theorem2 suite (default: the bundled 10x10 lake).
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long, requires = "map")]
    pub config: Option<PathBuf>,
    /// Start state for the theorem2 suite (default: the map's start).
    #[arg(long, value_parser = parse_coords)]
    pub start: Option<Coords>,
    #[arg(long, default_value_t = 0.9)]
    pub epsilon: f64,
    /// Cells per corridor for the theorem2 suite (default: 5).
    #[arg(long)]
    pub cells: Option<usize>,
    /// Rollouts per option for the theorem2 suite.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub options: PathBuf,
    /// Option ids or ranks to overlay (default: all).
    #[arg(long = "option")]
    pub selected: Vec<String>,
    /// Two option ids or ranks whose local policies to compare.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub diff: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of `<id>.txt` maps with optional `<id>.json` configs.
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Directory for finished search documents.
    #[arg(long)]
    pub persist: Option<PathBuf>,
}

/// A grid coordinate given as `y,x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coords(pub Vec<i64>);

pub fn parse_coords(text: &str) -> Result<Coords, String> {
    text.split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| format!("bad coordinate {p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Coords)
}
