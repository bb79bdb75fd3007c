use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levysub_cli::{load_config, run_exponent, run_simulate, run_verify, CliError, Overrides};

/// Exit status for runs that could not complete (bad config, I/O).
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(
    name = "levysub",
    version,
    about = "Strong and weak subordination of multivariate Lévy processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a characteristic exponent on the θ grid (exponent.csv).
    Exponent(Common),
    /// Simulate strong or weak subordination (samples.csv or paths/).
    Simulate(Common),
    /// Run the configured equality-in-law scenario (report.json). Exit status
    /// 0 iff the scenario passes; for negative_control, iff a mismatch is seen.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default from config, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the replicate count.
    #[arg(long)]
    replicates: Option<usize>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            replicates: self.replicates,
            output_dir: self.out.clone(),
        }
    }
}

fn execute(command: &Command) -> Result<bool, CliError> {
    match command {
        Command::Exponent(c) => {
            let path = run_exponent(&load_config(&c.config, &c.overrides())?)?;
            if !c.quiet {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Simulate(c) => {
            let written = run_simulate(&load_config(&c.config, &c.overrides())?)?;
            if !c.quiet {
                println!(
                    "wrote {} file(s) under {}",
                    written.len(),
                    common_dir(&written)
                );
            }
            Ok(true)
        }
        Command::Verify(c) => {
            let (output, path) = run_verify(&load_config(&c.config, &c.overrides())?)?;
            if !c.quiet {
                print!("{}", output.report.summary());
                println!("report: {}", path.display());
            }
            Ok(output.passed)
        }
    }
}

fn common_dir(paths: &[PathBuf]) -> String {
    paths
        .last()
        .and_then(|p| p.parent())
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::from(EXIT_ERROR)
        }
    }
}
