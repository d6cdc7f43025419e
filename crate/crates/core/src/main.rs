use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use peghole::harness::{self, EvalMode, HarnessError};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "peghole", about = "Train and evaluate the peg-in-hole insertion agent")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train from a TOML run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint, or fresh weights with `--mode fnt`.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mode: EvalMode,
        #[arg(long, default_value_t = 24)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration; defaults to config.toml beside the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference gradient check on the small network.
    Gradcheck {
        #[arg(long, value_delimiter = ',', default_values_t = harness::GRADCHECK_SEEDS)]
        seeds: Vec<u64>,
        /// Perturb one analytic gradient entry (negative control).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Turn run logs into plot-ready CSV series.
    ExportPlots {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Train { config, out } => {
            let s = harness::cmd_train(&config, &out)?;
            println!(
                "trained {} episodes, {} env steps, {} optimizer steps -> {}",
                s.episodes,
                s.env_steps,
                s.optimizer_steps,
                s.checkpoint.display()
            );
        }
        Cmd::Eval { checkpoint, mode, episodes, out, config } => {
            let r = harness::cmd_eval(checkpoint.as_deref(), mode, episodes, &out, config.as_deref())?;
            print!("{}", r.summary());
        }
        Cmd::Gradcheck { seeds, corrupt } => {
            let print = |rs: &[peghole::nn::gradcheck::GradcheckReport]| {
                for r in rs {
                    println!(
                        "seed {}: {} params, max relative error {:.3e} ({}[{}]) {}",
                        r.seed,
                        r.params_checked,
                        r.max_rel_error,
                        r.worst.0,
                        r.worst.1,
                        if r.passed() { "ok" } else { "FAIL" }
                    );
                }
            };
            match harness::cmd_gradcheck(&seeds, corrupt) {
                Ok(rs) => print(&rs),
                Err((rs, e)) => {
                    print(&rs);
                    return Err(e);
                }
            }
        }
        Cmd::ExportPlots { input, out } => {
            let s = harness::cmd_export_plots(&input, &out)?;
            println!(
                "{} ER rows, {} completion rows, {} loss rows, {} wrench rows",
                s.er_rows, s.completion_rows, s.loss_rows, s.wrench_rows
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
