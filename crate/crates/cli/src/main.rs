use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use promptevo_core::runner::{self, RunError, RunOptions, RunSummary};

/// Evolve classification prompts with an LLM as the mutation operator.
#[derive(Debug, Parser)]
#[command(name = "promptevo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Start a new run in a fresh directory under `run.output_dir`.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Dotted `section.key=value`, applied on top of the config file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Checkpoint and exit once this round has finished.
        #[arg(long, value_name = "ROUND")]
        stop_after: Option<u32>,
    },
    /// Continue an interrupted run from its checkpoint.json.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_name = "ROUND")]
        stop_after: Option<u32>,
    },
    /// Write best-fitness-vs-round CSV and SVG; one series per log.
    Report {
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
        /// Output path stem; `.csv` and `.svg` are written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn install_stop_handler() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let installed = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
        eprintln!("interrupt: finishing the current round, then checkpointing (again to abort)");
    });
    if let Err(e) = installed {
        log::warn!("cannot install interrupt handler: {e}");
    }
    stop
}

fn print_summary(s: &RunSummary) {
    let status = if s.completed { "completed" } else { "stopped" };
    println!("{status} at round {}/{}", s.round, s.rounds);
    println!("best {}: {:.4}", s.fitness_kind.as_str(), s.best_fitness);
    println!("best prompt: {}", s.best_prompt);
    println!("run directory: {}", s.run_dir.display());
    if !s.completed {
        println!(
            "resume with: promptevo resume --checkpoint {}",
            s.run_dir.join(runner::CHECKPOINT_FILE).display()
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let stop = install_stop_handler();
    let options = |stop_after| RunOptions {
        stop: Some(Arc::clone(&stop)),
        stop_after_round: stop_after,
    };
    let result: Result<(), RunError> = match cli.command {
        Command::Run {
            config,
            overrides,
            stop_after,
        } => runner::run(&config, &overrides, &options(stop_after)).map(|s| print_summary(&s)),
        Command::Resume {
            checkpoint,
            stop_after,
        } => runner::resume(&checkpoint, &options(stop_after)).map(|s| print_summary(&s)),
        Command::Report { logs, out } => {
            let out = out.unwrap_or_else(|| {
                logs[0]
                    .parent()
                    .map(|d| d.join("curve"))
                    .unwrap_or_else(|| PathBuf::from("curve"))
            });
            runner::report(&logs, &out).map(|r| {
                for (label, train, test) in &r.series {
                    println!("{label}: {train} train points, {test} test points");
                }
                println!("wrote {} and {}", r.csv_path.display(), r.svg_path.display());
            })
        }
    };
    match result {
        Ok(()) if stop.load(Ordering::SeqCst) => ExitCode::from(130),
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
