//! `dlim` — simulate and analyze delay-line oscillator Ising machines.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};

/// Errors split by exit code: input errors exit 1, runtime failures 2.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dlim",
    version,
    about = "Delay-line oscillator Ising machine simulator",
    after_help = "Default operating point (frequencies given divided by 2pi): \
                  omega0 = 1.0, omega_e = 2.003, gamma0 = 0.05, K = 0.06, \
                  Ke = 0.01, kappa = 0.003, tau = 10, p0 = 1. Integration runs \
                  in a frame co-rotating at omega_e/2 with step 0.05 unless \
                  --frame lab is selected (step 0.005)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the Ising instance comes from.
#[derive(Args, Debug, Clone)]
pub struct GraphArgs {
    /// Named built-in instance: mobius8, fig1b, fig1c, fig1d.
    #[arg(long, conflicts_with_all = ["problem", "mobius", "random"])]
    graph: Option<String>,
    /// Load a problem file (line 1: n; then n rows of J; then one row of h).
    #[arg(long)]
    problem: Option<String>,
    /// Moebius ladder on this many nodes (even, >= 4).
    #[arg(long, conflicts_with = "problem")]
    mobius: Option<usize>,
    /// Edge weight for --mobius [default: -1].
    #[arg(long, requires = "mobius", allow_hyphen_values = true)]
    coupling: Option<f64>,
    /// Random connected instance on this many spins.
    #[arg(long, conflicts_with_all = ["problem", "mobius"])]
    random: Option<usize>,
    /// Edge probability for --random, in (0, 1].
    #[arg(long, requires = "random")]
    density: Option<f64>,
    /// Comma-separated weight set for --random, e.g. "-1,1".
    #[arg(long, requires = "random", allow_hyphen_values = true)]
    weights: Option<String>,
    /// Generator seed for --random [default: 1].
    #[arg(long, requires = "random")]
    graph_seed: Option<u64>,
}

/// Overrides shared by trial and sweep runs.
#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// Config file (strict TOML; unknown keys rejected).
    #[arg(long)]
    config: Option<String>,
    /// Gain-compression coefficient beta_r.
    #[arg(long, allow_hyphen_values = true)]
    beta_r: Option<f64>,
    /// Nonlinear frequency-shift coefficient beta_i.
    #[arg(long, allow_hyphen_values = true)]
    beta_i: Option<f64>,
    /// Mutual coupling strength kappa/2pi.
    #[arg(long)]
    kappa: Option<f64>,
    /// Injection strength Ke/2pi.
    #[arg(long)]
    ke: Option<f64>,
    /// Injection frequency omega_e/2pi.
    #[arg(long)]
    omega_e: Option<f64>,
    /// Integration span (time units).
    #[arg(long)]
    t_end: Option<f64>,
    /// Integration frame: rotating (omega_e/2) or lab.
    #[arg(long)]
    frame: Option<String>,
    /// Relative sigma of per-oscillator frequency offsets (0 disables).
    #[arg(long)]
    dispersion_sigma: Option<f64>,
    /// Initial amplitude as a fraction of sqrt(p0).
    #[arg(long)]
    amplitude_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the exact ground state of an instance (n <= 24).
    GroundTruth {
        #[command(flatten)]
        graph: GraphArgs,
    },
    /// Run one stochastic trial and print its readout.
    Trial {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Trial seed (drives initial phases and dispersion draws).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the full trajectory trace to this CSV file.
        #[arg(long)]
        trace: Option<String>,
    },
    /// Run a parameter sweep and write its tables.
    Sweep {
        /// beta-plane | arnold | kappa | detuning | single-point
        /// (falls back to [sweep].kind in the config).
        #[arg(long)]
        kind: Option<String>,
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for CSV and matrix files
        /// (falls back to [output].dir, then "out").
        #[arg(long)]
        out: Option<String>,
        /// Worker threads (fallback: DLIM_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Desk-scale profile: coarser grid, 50 trials per point.
        #[arg(long)]
        fast: bool,
        /// Trials per grid point.
        #[arg(long)]
        trials: Option<usize>,
        /// Master seed for deterministic trial derivation.
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Generate an instance and write it as a problem file.
    GenGraph {
        #[command(flatten)]
        graph: GraphArgs,
        /// Destination problem file.
        #[arg(long)]
        out: String,
    },
    /// Parse a config file strictly and echo the resolved values.
    ValidateConfig {
        /// Config file to check.
        #[arg(long)]
        config: String,
    },
}

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::GroundTruth { graph } => commands::ground_truth(&graph),
        Command::Trial {
            graph,
            run,
            seed,
            trace,
        } => commands::trial(&graph, &run, seed, trace.as_deref()),
        Command::Sweep {
            kind,
            graph,
            run,
            out,
            threads,
            fast,
            trials,
            master_seed,
        } => commands::sweep(
            kind.as_deref(),
            &graph,
            &run,
            out.as_deref(),
            threads,
            fast,
            trials,
            master_seed,
        ),
        Command::GenGraph { graph, out } => commands::gen_graph(&graph, &out),
        Command::ValidateConfig { config } => commands::validate_config(&config),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            std::process::exit(1);
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            std::process::exit(2);
        }
    }
}
