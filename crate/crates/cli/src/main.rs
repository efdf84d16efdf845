use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stackelberg::asset::{DEFAULT_PATHS, DEFAULT_SEED};
use stackelberg::{Category, DEFAULT_GRID_N};

mod commands;

/// Exit code for command-line usage errors.
const EXIT_USAGE: u8 = 64;
/// Exit code when a verification ran but found a violated property.
const EXIT_CHECK_FAILED: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "stackelberg", version, about = "Closed-loop Stackelberg equilibria of linear-quadratic stochastic games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
struct GridArgs {
    /// Number of time steps N.
    #[arg(long = "grid-n", env = "ERE_DEFAULT_GRID_N", default_value_t = DEFAULT_GRID_N)]
    grid_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum IntegratorArg {
    Euler,
    Rk4,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the equilibrium Riccati system and write P1, P2 and the gains as CSV.
    Solve {
        /// Game specification (TOML, or JSON by extension).
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Time stepping scheme.
        #[arg(long, value_enum, default_value_t = IntegratorArg::Euler)]
        integrator: IntegratorArg,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate closed-loop paths under a gain schedule and estimate both costs.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Gain CSV with `t` and `theta1_*` columns (`theta2_*` optional).
        #[arg(long)]
        gains: PathBuf,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Initial state as comma-separated values; defaults to `x0` in the spec.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Simulation worker threads; all cores when omitted.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a specification and classify its well-posedness case.
    Check {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Attest that B2 and R2 are continuously differentiable in time.
        #[arg(long)]
        smooth: bool,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the spike, follower and leader checks on the computed equilibrium.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Randomized deviations per dominance check.
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Randomized spike tests.
        #[arg(long, default_value_t = 20)]
        spikes: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Solve the open-loop example and restart it mid-horizon.
    DemoInconsistency {
        /// Restart time as a fraction of the horizon.
        #[arg(long, default_value_t = 0.5)]
        t_split: f64,
        #[command(flatten)]
        grid: GridArgs,
        /// Initial state.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        x0: f64,
        /// Restart at every interior node and write the deviations as CSV.
        #[arg(long)]
        sweep: bool,
        /// Output CSV for `--sweep`; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Reproduce the reference asset-management run: fig1.csv, fig2.csv, fig3.csv,
    /// diagnostics.csv and summary.txt.
    ReproduceTable2 {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = DEFAULT_PATHS)]
        paths: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Initial wealth override.
        #[arg(long)]
        x0: Option<f64>,
        /// Wealth target override.
        #[arg(long)]
        z: Option<f64>,
        /// Accept a target below x0·exp(rT).
        #[arg(long)]
        force: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn exit_code(category: Category) -> u8 {
    match category {
        Category::Validation => 2,
        Category::Singularity => 3,
        Category::Monitor => 4,
        Category::Io => 5,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_have_distinct_codes() {
        let codes = [Category::Validation, Category::Singularity, Category::Monitor, Category::Io].map(exit_code);
        assert_eq!(codes, [2, 3, 4, 5]);
    }

    #[test]
    fn grid_default_is_the_library_default() {
        let cli = Cli::try_parse_from(["stackelberg", "check", "--spec", "x.toml"]).unwrap();
        match cli.command {
            Command::Check { grid, smooth, .. } => {
                assert!(!smooth);
                if std::env::var_os("ERE_DEFAULT_GRID_N").is_none() {
                    assert_eq!(grid.grid_n, DEFAULT_GRID_N);
                }
            }
            other => panic!("parsed {other:?}"),
        }
    }
}
