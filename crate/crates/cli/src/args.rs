use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rann", version, about = "Robust approximate nearest-neighbor search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// k-robust search under an L_p norm
    Robust,
    /// Search under per-coordinate ignore costs (L1)
    Budgeted,
    /// Data-sensitive Hamming LSH
    Dslsh,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Robust => "robust",
            Mode::Budgeted => "budgeted",
            Mode::Dslsh => "dslsh",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostsProfile {
    /// Every coordinate costs 1/k
    Uniform,
    /// Costs uniform in [--cost-lo, --cost-hi]
    Random,
    /// Costs read from --costs-file
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Exact,
    Lsh,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted instance: data, queries and ground truth
    Gen(GenArgs),
    /// Build an index over a dataset file
    Build(BuildArgs),
    /// Answer queries against a saved index
    Query(QueryArgs),
    /// Exhaustive ground truth for a query set
    Oracle(OracleArgs),
    /// Run the statistical self-checks
    Lemmas(LemmaArgs),
    /// Join query results with ground truth into a summary
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "robust")]
    pub mode: Mode,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long, default_value_t = 50)]
    pub queries: usize,
    /// Corrupted coordinates per query (robust), or 1/cost (uniform budgeted profile)
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Planted clean distance; an integer bit count in dslsh mode
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Minimum corruption magnitude [default: 10 r]
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    pub costs_profile: CostsProfile,
    #[arg(long)]
    pub costs_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub cost_lo: f64,
    #[arg(long, default_value_t = 0.5)]
    pub cost_hi: f64,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub data: PathBuf,
    /// Index file to write
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinates to ignore (robust)
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    /// Base approximation factor (robust)
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// Robust: switch to the (1+eps) mode. Budgeted and dslsh: accuracy [default: 0.5]
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub l_scale: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub backend: Backend,
    /// LSH backend: tables per substructure
    #[arg(long, default_value_t = 24)]
    pub lsh_tables: u32,
    #[arg(long, default_value_t = 16)]
    pub lsh_bits: u32,
    #[arg(long, default_value_t = 32)]
    pub lsh_buckets: u32,
    /// Cost file (budgeted)
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Near radius in bits (dslsh)
    #[arg(long)]
    pub r: Option<u32>,
    #[arg(long, default_value_t = 8.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3.0)]
    pub c3: f64,
    /// Coordinate duplication factor [default: automatic]
    #[arg(long)]
    pub dup: Option<u32>,
    #[arg(long)]
    pub early_exit: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Expected index mode; checked against the file
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Output file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Include every substructure's candidate in the stats
    #[arg(long)]
    pub full_stats: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Approximation used above the exact-enumeration dimension (budgeted)
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Multiplier on every sample size
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit with status 3 when a check fails
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Output of `query`
    #[arg(long)]
    pub results: PathBuf,
    /// Output of `gen` or `oracle`
    #[arg(long)]
    pub truth: PathBuf,
    /// Index used for the lightness test; needs --queries
    #[arg(long, requires = "queries")]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
