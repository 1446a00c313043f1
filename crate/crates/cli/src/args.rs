use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "streamrc", version, about = "Stream-processing rate-control simulator")]
pub struct Cli {
    /// Run batch commands on a server's HTTP API instead of in-process.
    #[arg(long, global = true, value_name = "URL")]
    pub remote: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one topology under a fixed fraction or an action script.
    Simulate(SimulateArgs),
    /// Run every static fraction and report the best one.
    Sweep(RunArgs),
    /// Compare a candidate policy with the default (full-rate) run.
    Compare(CompareArgs),
    /// Serve environments over the line protocol (and optionally HTTP).
    Serve(ServeArgs),
    /// Print a random tree-shaped topology document.
    GenTopology(GenArgs),
    /// Render SVG charts from a window CSV or a training-reward CSV.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Built-in or registered topology name, or a path to a topology file.
    #[arg(long)]
    pub topology: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300.0)]
    pub duration_s: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, conflicts_with = "actions", required_unless_present = "actions")]
    pub fraction: Option<f64>,
    /// File with one action index (0 to 9) per window, separated by commas or whitespace.
    #[arg(long)]
    pub actions: Option<PathBuf>,
    /// Window length in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub k_s: f64,
    /// Also write the event trace.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Candidate fraction; the best static fraction when neither this nor `--actions` is given.
    #[arg(long, conflicts_with = "actions")]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub actions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = streamrc_core::wire::DEFAULT_PORT)]
    pub port: u16,
    /// Directory of extra topology documents (`*.toml`).
    #[arg(long)]
    pub topologies: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    /// Also serve the HTTP API on this port.
    #[arg(long)]
    pub http_port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory; defaults to the input's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
