//! `forgetcurve` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use forgetcurve::scheduler::Strategy;
use forgetcurve::stats::DEFAULT_K_PERCENTS;

#[derive(Debug, Parser)]
#[command(name = "forgetcurve", version, about = "Per-sample forgetting analysis and replay scheduling")]
struct Cli {
    /// Print errors to stderr as a JSON object.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a decay constant per sample.
    Fit {
        bundle: PathBuf,
        /// Number of grid points for the coarse scan.
        #[arg(long, default_value_t = 2001)]
        grid: usize,
        /// Bracket width at which refinement stops.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Forgetting events, first-learned epochs and retention rates.
    Stats {
        bundle: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Top-k overlap between two runs' fits.
    CompareArch {
        fits_a: PathBuf,
        fits_b: PathBuf,
        /// Top-k percentages.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_K_PERCENTS)]
        k: Vec<u32>,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the per-sample λ rank correlation and mean R² as JSON.
        #[arg(long)]
        spearman_out: Option<PathBuf>,
    },
    /// Pairwise rank correlation of λ across runs, with bootstrap intervals.
    CompareSeeds {
        #[arg(required = true, num_args = 2..)]
        fits: Vec<PathBuf>,
        /// Bootstrap resamples per pair (0 disables the intervals).
        #[arg(long, default_value_t = 10_000)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Per-class mean λ and never-forgotten share.
    ClassTable {
        fits: PathBuf,
        bundle: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Rank correlation between warmup loss and λ.
    EarlyLoss {
        fits: PathBuf,
        bundle: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Simulate a sampling schedule and export per-epoch weights.
    Schedule {
        fits: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        epochs: usize,
        /// Draws per epoch.
        #[arg(long)]
        draws: usize,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Floor applied to λ before spaced-repetition scheduling.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long)]
        seed: u64,
        /// Bundle with warmup losses and class labels (curriculum,
        /// anti-curriculum and inverse-frequency sampling).
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Random strategy: weight samples by inverse class frequency.
        #[arg(long)]
        inverse_frequency: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate a synthetic bundle with known decay constants.
    Synth {
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Samples per λ value.
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        epochs: usize,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        seed: u64,
        /// First-learned epoch of every sample.
        #[arg(long, default_value_t = 0)]
        first_learned: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Mean and population standard deviation of each column.
    Aggregate {
        values: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Bernoulli,
    Threshold,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if std::env::args().any(|a| a == "--json-errors") {
                report_json("usage", &e.kind().to_string());
            } else {
                let _ = e.print();
            }
            return ExitCode::from(2);
        }
    };

    let level = if cli.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<forgetcurve::Error>()
                .map_or("io", forgetcurve::Error::kind);
            if cli.json_errors {
                report_json(kind, &format!("{e:#}"));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}

fn report_json(kind: &str, message: &str) {
    let obj = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{obj}");
}
