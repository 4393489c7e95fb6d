use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use protolayer_cli::alloc::TrackingAllocator;
use protolayer_cli::config::RunConfig;
use protolayer_cli::run::{cmd_eval, cmd_train, Split};
use protolayer_cli::tools::{bench_csv, cmd_bench, cmd_export_protos, cmd_gradcheck};
use protolayer_cli::{CliError, CliResult};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

#[derive(Parser)]
#[command(name = "protolayer", version, about = "Prototype-based layers: train, evaluate, check, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured model; writes metrics.csv and checkpoint.bin.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a checkpoint on the config's dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        /// Report path; defaults to eval_<split>.txt next to the checkpoint.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Finite-difference check of every differentiable operation.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
    /// Time and peak allocation of the naive and efficient responses (CSV on stdout).
    Bench {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        protos: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write prototypes as P5 graymaps (or raw CSV with --csv).
    ExportProtos {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let art = cmd_train(&cfg)?;
            for m in art.outcome.metrics.iter().rev().take(2).rev() {
                println!(
                    "epoch {} {}: loss {:.6} accuracy {:.4} reject_rate {:.4}",
                    m.epoch, m.split, m.loss, m.accuracy, m.reject_rate
                );
            }
            println!("wrote {} and {}", art.metrics.display(), art.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            config,
            split,
            report,
        } => {
            let cfg = RunConfig::load(&config)?;
            let (e, path) = cmd_eval(&checkpoint, &cfg, split, report.as_deref())?;
            println!(
                "loss {:.6} accuracy {:.4} reject_rate {:.4} (report: {})",
                e.loss,
                e.accuracy,
                e.reject_rate,
                path.display()
            );
        }
        Command::Gradcheck { config, tol, points } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", cmd_gradcheck(&cfg, tol, points)?);
        }
        Command::Bench {
            dims,
            protos,
            repeats,
            seed,
        } => print!("{}", bench_csv(&cmd_bench(&dims, &protos, repeats, seed)?)?),
        Command::ExportProtos { checkpoint, out, csv } => {
            let files = cmd_export_protos(&checkpoint, &out, csv)?;
            println!("wrote {} file(s) to {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail(CliError::usage(first));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{e}");
    ExitCode::from(e.exit_code() as u8)
}
