use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "perc", version, about = "Bond percolation laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Graph {
    Hypercubic,
    Slab,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true, value_enum, default_value = "hypercubic")]
    pub graph: Graph,
    /// Dimension.
    #[arg(long, global = true, default_value_t = 2)]
    pub d: usize,
    /// Slab thickness (slab graphs only).
    #[arg(long, global = true, default_value_t = 1)]
    pub k: u32,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub m: Option<u32>,
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// Sample budget (maximum samples for conditional estimators).
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    #[arg(long, global = true, env = "PERC_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value = "perc-out")]
    pub out: PathBuf,
    /// Flat `key = value` file; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Geometry {
    /// Graph-metric ball `B(0,n)`.
    Ball,
    /// `[-n,n]^d`, or `Q(n)` on a slab.
    Box,
    /// The `(n+1) x n` crossing rectangle.
    Rectangle,
    /// `[0,n]^2` (times every slab layer).
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Census {
    Crossing,
    TwoPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorEvent {
    Sure,
    Edge,
}

#[derive(Debug, Clone, Args)]
pub struct TransferArgs {
    #[arg(long, default_value_t = 8)]
    pub top_k: usize,
    #[arg(long, default_value_t = 100_000)]
    pub row_budget: u64,
    #[arg(long, default_value_t = 4_000)]
    pub column_budget: u64,
    #[arg(long, default_value_t = 400)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    /// Boundary event (see the event syntax in the README).
    #[arg(long, default_value = "star")]
    pub event: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plain Monte Carlo probability of an event.
    Estimate {
        #[arg(long)]
        event: String,
        #[arg(long, value_enum, default_value = "ball")]
        geometry: Geometry,
    },
    /// Rejection-sampled conditional probability.
    Conditional {
        #[arg(long)]
        target: String,
        #[arg(long)]
        condition: String,
        #[arg(long, value_enum, default_value = "ball")]
        geometry: Geometry,
        #[arg(long, default_value_t = 100)]
        min_accepted: u64,
        /// Stop once this many samples are accepted.
        #[arg(long)]
        stop_at: Option<u64>,
    },
    /// Quasi-multiplicativity ratios (shell probe, or slab constants).
    Qm {
        /// Reference critical value reported alongside slab constants.
        #[arg(long)]
        pc: Option<f64>,
    },
    /// `P[E | 0 <-> S(n)]` along increasing n.
    IicFirst {
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<u32>,
        #[arg(long, default_value = "star")]
        event: String,
        /// Accepted samples per point; the budget caps the draws.
        #[arg(long)]
        accepted: Option<u64>,
    },
    /// `P_p[E | 0 <-> S(proxy_n)]` along decreasing p above pc.
    IicSecond {
        #[arg(long, value_delimiter = ',')]
        p_list: Vec<f64>,
        #[arg(long)]
        pc: Option<f64>,
        #[arg(long)]
        proxy_n: u32,
        #[arg(long, default_value = "star")]
        event: String,
        #[arg(long)]
        accepted: Option<u64>,
    },
    /// Scale search for small two-crossing probability.
    Scales {
        #[arg(long)]
        eps: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        p_grid: Vec<f64>,
        #[arg(long)]
        max_n: u32,
    },
    /// One transfer matrix between schedule indices i and j.
    Matrix {
        #[arg(long, value_delimiter = ',')]
        scales: Vec<u32>,
        #[arg(long)]
        i: usize,
        #[arg(long)]
        j: usize,
        #[command(flatten)]
        transfer: TransferArgs,
    },
    /// Transfer-matrix chain with cross ratios and oscillations.
    Hopf {
        #[arg(long, value_delimiter = ',')]
        scales: Vec<u32>,
        #[arg(long, value_delimiter = ',')]
        indices: Vec<usize>,
        #[command(flatten)]
        transfer: TransferArgs,
    },
    /// Checks the column modification map on sampled slab configurations.
    SlabVerify {
        /// Stop after this many bad-event samples.
        #[arg(long)]
        hits: Option<u64>,
    },
    /// Critical point from rectangle crossings.
    Pc {
        #[arg(long, default_value_t = 0.002)]
        tolerance: f64,
    },
    /// Exploratory cluster statistics.
    Census {
        #[arg(long, value_enum, default_value = "crossing")]
        mode: Census,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        distances: Vec<u32>,
        #[arg(long, default_value_t = 4)]
        margin: u32,
    },
    /// Exact event probability by enumeration (small regions only).
    Oracle {
        #[arg(long)]
        event: String,
        #[arg(long, value_enum, default_value = "ball")]
        geometry: Geometry,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        p_grid: Vec<f64>,
    },
    /// Exact check of `P[E2] <= P[E2|E1] <= sqrt(P[E2])` on `A(0,m,n)`.
    Bk {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
        p_grid: Vec<f64>,
    },
    /// Exact factorization identity on the 5 x 3 strip.
    Factorize {
        #[arg(long, value_enum, default_value = "sure")]
        event: FactorEvent,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
        p_grid: Vec<f64>,
    },
    /// Acceptance suite.
    Suite {
        /// Only the exact, oracle-backed criteria (1 to 3).
        #[arg(long)]
        quick: bool,
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
    /// Re-runs the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate { .. } => "estimate",
            Command::Conditional { .. } => "conditional",
            Command::Qm { .. } => "qm",
            Command::IicFirst { .. } => "iic-first",
            Command::IicSecond { .. } => "iic-second",
            Command::Scales { .. } => "scales",
            Command::Matrix { .. } => "matrix",
            Command::Hopf { .. } => "hopf",
            Command::SlabVerify { .. } => "slab-verify",
            Command::Pc { .. } => "pc",
            Command::Census { .. } => "census",
            Command::Oracle { .. } => "oracle",
            Command::Bk { .. } => "bk",
            Command::Factorize { .. } => "factorize",
            Command::Suite { .. } => "suite",
            Command::Replay { .. } => "replay",
        }
    }
}
