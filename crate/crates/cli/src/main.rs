use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weyl_lab::config::Experiment;
use weyl_lab::{load_config, run, EXIT_PASS};

#[derive(Parser)]
#[command(name = "weyl-lab", version, about = "Spectral asymptotics experiments for infinite-order operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Directory for CSV outputs and summary.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads (overrides the config).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the available experiments.
    ListExperiments,
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<18}{}", e.name(), e.description());
            }
            exit(EXIT_PASS)
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(r) => {
                println!("{}: valid {} config", config.display(), r.config.experiment);
                exit(EXIT_PASS)
            }
            Err(e) => {
                eprintln!("{e}");
                exit(weyl_lab::EXIT_CONFIG)
            }
        },
        Command::Run { config, out, threads } => {
            let resolved = match load_config(&config) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return exit(weyl_lab::EXIT_CONFIG);
                }
            };
            match run(resolved, &out, threads) {
                Ok(report) => {
                    for c in &report.summary.checks {
                        println!(
                            "{} {} = {:.6e}",
                            if c.pass { "PASS" } else { "FAIL" },
                            c.name,
                            c.value
                        );
                    }
                    if let Some(e) = &report.error {
                        eprintln!("error: {e}");
                    }
                    exit(report.exit_code())
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit(e.exit_code())
                }
            }
        }
    }
}
