use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lowres_cli::{run, validate, RunOptions};

#[derive(Parser)]
#[command(name = "lowres", about = "Train networks with low-resolution weights", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep cell of a configuration.
    Run {
        config: PathBuf,
        /// Directory that relative data paths are resolved against.
        #[arg(long, env = "LOWRES_DATA_DIR")]
        data_dir: Option<PathBuf>,
        /// Write artifacts here instead of the configured output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// Print the version.
    Version,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            data_dir,
            output_dir,
        } => run(&config, &RunOptions { data_dir, output_dir }).map(|summary| {
            println!(
                "wrote {} rows to {}",
                summary.records.len(),
                summary.output_dir.join("results.csv").display()
            );
        }),
        Command::Validate { config } => validate(&config).map(|c| {
            println!("{}: ok ({})", config.display(), c.experiment.name);
        }),
        Command::Version => {
            println!("lowres {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
