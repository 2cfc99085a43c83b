use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use natgrad_vi::harness::{compare_runs, parse_config, run};
use natgrad_vi::Error;

#[derive(Parser)]
#[command(
    name = "natgrad",
    version,
    about = "Run natural-gradient VI experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config value, e.g. `--set optimizer.n_mc=4`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run several configs and write an epoch-aligned comparison CSV.
    Compare {
        /// Comma-separated config paths.
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = match parse_config(&config, &overrides) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match run(&cfg) {
                Ok(out) => {
                    if let Some(last) = out.trace.last() {
                        println!(
                            "epoch {}  log2-loss {:.4}  accuracy {:.4}  elbo {:.4}",
                            last.epoch, last.test_log2_loss, last.test_accuracy, last.train_elbo
                        );
                    }
                    if let Some(dir) = &cfg.output_dir {
                        println!("wrote {}", dir.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Compare { configs, out } => {
            let mut parsed = Vec::with_capacity(configs.len());
            for p in &configs {
                match parse_config(p, &[]) {
                    Ok(c) => parsed.push(c),
                    Err(e) => return fail(&e),
                }
            }
            match compare_runs(&parsed, &out) {
                Ok(report) => {
                    println!("wrote {}", report.path.display());
                    match report.failures.first() {
                        Some((label, e)) => {
                            eprintln!("{label} aborted");
                            fail(e)
                        }
                        None => ExitCode::SUCCESS,
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
