use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sqforms::exterior::Backend;
use sqforms::models::MODEL_CATALOG;
use sqforms_cli::run::{run_file, Overrides, REPORT_FILE};

#[derive(Parser)]
#[command(
    name = "sqforms",
    version,
    about = "Spectra of stochastic evolution operators on differential forms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Fd,
    Fourier,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tasks of a JSON configuration.
    Run {
        config: PathBuf,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulation seed (overrides the configuration).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
    },
    /// List bundled models and their parameters.
    Models,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Models => {
            for (name, params) in MODEL_CATALOG {
                println!("{name}: {params}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            seed,
            backend,
        } => {
            let overrides = Overrides {
                out,
                seed,
                backend: backend.map(|b| match b {
                    BackendArg::Fd => Backend::FiniteDifference,
                    BackendArg::Fourier => Backend::Fourier,
                }),
            };
            match run_file(&config, &overrides) {
                Ok((report, dir)) => {
                    for w in &report.warnings {
                        eprintln!("warning: {w}");
                    }
                    println!("{}", dir.join(REPORT_FILE).display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
