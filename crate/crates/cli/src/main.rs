//! `qls`: quantile least squares from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 unreadable or malformed input,
//! 3 numerical failure (estimation, non-positive scale, bootstrap).

mod commands;
mod data;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "qls",
    version,
    about = "Quantile least squares estimation and diagnostics for location-scale families"
)]
pub struct Cli {
    /// Output format. Table-producing commands print CSV for `text`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Seed for every random draw; overrides the seed in a study file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for bootstrap and simulation work.
    #[arg(long, global = true, env = "QLS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate location and scale from a data file
    Fit(FitArgs),
    /// Goodness-of-fit test of one family, or of every family with `--family all`
    Gof(GofArgs),
    /// Asymptotic relative efficiency against maximum likelihood
    Are(AreArgs),
    /// Influence function of an oQLS or gQLS estimator
    Influence(InfluenceArgs),
    /// Run a Monte Carlo, power or timing study from a TOML file
    Simulate(SimulateArgs),
    /// Time estimators on simulated samples
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone, Copy)]
pub struct GridArgs {
    /// Lowest probability level
    #[arg(long, default_value_t = 0.05)]
    pub a: f64,
    /// Highest probability level
    #[arg(long, default_value_t = 0.95)]
    pub b: f64,
    /// Number of equally spaced levels
    #[arg(long, default_value_t = 25)]
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Oqls,
    Gqls,
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QlsKind {
    Oqls,
    Gqls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    LocationScale,
    /// σ known (pass --sigma)
    Location,
    /// μ known (pass --mu)
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Test {
    W,
    Wout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Layout {
    /// One row per cell: family,kind,mode,a,b,k,are
    Long,
    /// One row per (grid, family, mode) with a column per k
    Wide,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub family: String,
    /// Data file (one value per line), or `-` for standard input
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Method::Gqls)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = Mode::LocationScale)]
    pub mode: Mode,
    /// Known location for `--mode scale`
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Known scale for `--mode location`
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GofArgs {
    /// Family name, or `all` for a comparison across every family
    #[arg(long)]
    pub family: String,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value_t = Test::W)]
    pub test: Test,
    /// Bootstrap replicates for `--test wout`
    #[arg(long = "B", alias = "bootstrap", default_value_t = 1000)]
    pub bootstrap: usize,
    /// Out-of-sample levels: a count r (levels (j - 0.5)/r) or a comma list
    #[arg(long)]
    pub out_levels: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct AreArgs {
    #[arg(long, value_enum, default_value_t = QlsKind::Gqls)]
    pub kind: QlsKind,
    /// Comma-separated family names, or `all`
    #[arg(long, default_value = "cauchy,laplace,logistic,normal,gumbel")]
    pub families: String,
    /// Comma-separated `a:b` pairs
    #[arg(long, default_value = "0.05:0.95")]
    pub grids: String,
    /// Comma-separated values or inclusive `lo:hi` ranges of k
    #[arg(long, default_value = "15,20,25")]
    pub k_range: String,
    /// Comma-separated targets: joint, location, scale, location-in-joint, scale-in-joint
    #[arg(long, default_value = "location-in-joint,scale-in-joint,joint")]
    pub mode: String,
    #[arg(long, value_enum, default_value_t = Layout::Long)]
    pub layout: Layout,
}

#[derive(Args, Debug)]
pub struct InfluenceArgs {
    #[arg(long)]
    pub family: String,
    #[arg(long, value_enum, default_value_t = QlsKind::Gqls)]
    pub kind: QlsKind,
    #[command(flatten)]
    pub grid: GridArgs,
    /// `lo:hi`; defaults to the jump range padded by a quarter of its width
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Study description (TOML)
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Ascending sample sizes; `1e6` style is accepted
    #[arg(long, default_value = "1000,10000,100000,1000000")]
    pub sizes: String,
    #[arg(long, default_value = "normal,cauchy")]
    pub families: String,
    #[arg(long, default_value = "oqls,gqls,mle")]
    pub methods: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Seconds after which a method is marked and larger sizes skipped
    #[arg(long, default_value_t = 600.0)]
    pub cap: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Usage(String),
    Input(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Input(m) => write!(f, "input: {m}"),
            Failure::Numeric(m) => write!(f, "{m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: usage: --threads must be at least 1");
            return ExitCode::from(1);
        }
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match commands::run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
