use std::path::PathBuf;
use std::process::ExitCode;

use awpds::experiment::{exit_code, run_experiment, validate_config, RunOverrides};
use clap::{Parser, Subcommand};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  command-line usage error
  3  config file cannot be parsed
  4  config is invalid (diagnostics are printed)
  5  I/O error (reading the config or writing artifacts)
  6  numerical failure inside a run
  7  a closed-loop run terminated abnormally (state blowup, boundary
     approach, region of interest left) and the config sets
     output.fail_on_abnormal_termination = true; artifacts are still written";

/// Config-driven experiments for anti-windup PI loops and projected dynamics.
#[derive(Parser)]
#[command(name = "awpds", version, after_help = EXIT_CODES)]
struct Cli {
    /// Output directory (overrides output.dir in the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed (overrides numerics.seed in the config).
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => {
            let overrides = RunOverrides {
                out: cli.out,
                seed: cli.seed,
            };
            match run_experiment(&config, &overrides) {
                Ok(summary) => {
                    println!("{} ({}): {}", summary.name, summary.experiment, summary.status);
                    for s in &summary.segments {
                        println!(
                            "  segment {:>2}: {:<24} final error {:.3e}",
                            s.index, s.termination, s.final_error_norm
                        );
                    }
                    for (k, v) in &summary.metrics {
                        println!("  {k} = {v}");
                    }
                    for m in &summary.manifest {
                        println!("  wrote {} ({} bytes)", m.file, m.bytes);
                    }
                    if summary.is_ok() {
                        exit_code::OK
                    } else {
                        exit_code::ABNORMAL_TERMINATION
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Validate { config } => match validate_config(&config) {
            Ok(diags) if diags.is_empty() => {
                println!("{}: valid", config.display());
                exit_code::OK
            }
            Ok(diags) => {
                for d in &diags {
                    eprintln!("{d}");
                }
                exit_code::CONFIG_INVALID
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
