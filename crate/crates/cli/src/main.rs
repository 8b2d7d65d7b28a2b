//! `sharpib`: validate, run, resume, post-process and report flow cases.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sharpib::case::run::{checkpoint_path, FINAL_CHECKPOINT};
use sharpib::case::{parse_config, post_process, render_report, run_case, CaseConfig, RunOptions, Summary};
use sharpib::error::{ConfigError, Error};

#[derive(Parser)]
#[command(name = "sharpib", version, about = "Sharp immersed-boundary flow solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a case file and print it with every default filled in.
    Validate {
        #[arg(long)]
        case: PathBuf,
    },
    /// Run a case from its initial condition.
    Run(RunArgs),
    /// Continue a case from a checkpoint (the final one of the output directory by default).
    Resume {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Recompute the summary and wall profiles from the stored final state.
    Post {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the summary next to the reference values for the case.
    Report {
        #[arg(long)]
        case: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    case: PathBuf,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides the case file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Steps to take in this invocation.
    #[arg(long)]
    max_steps: Option<u64>,
}

/// Exit codes: 0 success, 1 invalid case, 2 divergence, 3 solver failure,
/// 4 I/O or post-processing failure.
const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 4;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Grid(_) | Error::Geometry(_) => EXIT_INVALID,
                _ => EXIT_IO,
            })
        }
    }
}

fn load(path: &Path) -> Result<CaseConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn output_dir(config: &CaseConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| config.output_dir())
}

fn execute(args: RunArgs, resume: Option<PathBuf>) -> Result<u8, Error> {
    let config = load(&args.case)?;
    let output = output_dir(&config, args.out);
    let opts = RunOptions { workers: args.workers, max_steps: args.max_steps, output: Some(output), resume };
    let outcome = run_case(&config, &opts)?;
    print!("{}", render_report(&outcome.summary));
    println!("artifacts in {}", outcome.output.display());
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    Ok(outcome.summary.status.exit_code() as u8)
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Validate { case } => {
            let text = std::fs::read_to_string(&case)
                .map_err(|e| ConfigError::Parse(format!("{}: {e}", case.display())))?;
            match parse_config(&text) {
                Ok(config) => {
                    println!("# config_hash = {}", config.hash());
                    print!("{}", config.canonical());
                    Ok(0)
                }
                Err(e) => {
                    eprintln!("{}: {e}", case.display());
                    Ok(EXIT_INVALID)
                }
            }
        }
        Command::Run(args) => execute(args, None),
        Command::Resume { run, resume } => {
            let checkpoint = match resume {
                Some(p) => p,
                None => {
                    let config = load(&run.case)?;
                    checkpoint_path(&output_dir(&config, run.out.clone()), FINAL_CHECKPOINT)
                }
            };
            execute(run, Some(checkpoint))
        }
        Command::Post { case, out } => {
            let config = load(&case)?;
            let summary = post_process(&config, &output_dir(&config, out))?;
            print!("{}", render_report(&summary));
            Ok(0)
        }
        Command::Report { case, out } => {
            let config = load(&case)?;
            let summary = Summary::read(&output_dir(&config, out))?;
            if summary.config_hash != config.hash() {
                log::warn!("summary was produced by config {}, not {}", summary.config_hash, config.hash());
            }
            print!("{}", render_report(&summary));
            Ok(0)
        }
    }
}
