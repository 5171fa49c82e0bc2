use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bezsched_cli::{commands, CliError};

/// Learned monotone Bézier interpolation schedulers for few-step ODE
/// sampling, with exact Gaussian-mixture fields in place of a network.
#[derive(Parser)]
#[command(name = "bezsched", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train scheduler logits against an adaptive teacher and write
    /// run_report.json, scheduler.json, and loss_curve.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides out_dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Also export this many sample trajectory CSV triples
        /// (teacher / initial / trained) under <out>/traj.
        #[arg(long, default_value_t = 0)]
        trajectories: usize,
    },
    /// Evaluate a saved scheduler across NFE budgets and write
    /// eval_report.csv.
    Eval {
        #[arg(long)]
        scheduler: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated NFE list (defaults to eval_nfes from the config).
        #[arg(long, value_delimiter = ',')]
        nfe: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overlay trajectory CSVs into an SVG; optionally draw a scheduler's
    /// coefficient curves.
    Plot {
        /// Trajectory CSV files (as exported by train/eval tooling).
        trajectories: Vec<PathBuf>,
        #[arg(long)]
        scheduler: Option<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Run every registered library property and report pass/fail lines.
    Verify,
    /// Fit scheduler logits onto an explicit timestep set.
    FitTimesteps {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated timesteps starting at 0 and ending at 1.
        #[arg(long, value_delimiter = ',')]
        timesteps: Vec<f64>,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            trajectories,
        } => {
            let report = commands::cmd_train(&config, out.as_deref(), seed, trajectories)?;
            println!(
                "best validation loss {:.6} at epoch {} (initial {:.6})",
                report.best_val_loss(),
                report.selected_epoch,
                report.initial_val_loss()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            scheduler,
            config,
            nfe,
            out,
        } => {
            let report = commands::cmd_eval(&scheduler, &config, nfe, out.as_deref())?;
            print!("{}", report.to_csv_string());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot {
            trajectories,
            scheduler,
            out,
        } => {
            let written = commands::cmd_plot(&trajectories, scheduler.as_deref(), &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let failures = commands::cmd_verify();
            if failures == 0 {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::FitTimesteps {
            config,
            timesteps,
            tol,
            out,
        } => {
            let report = commands::cmd_fit(&config, &timesteps, tol, out.as_deref())?;
            println!(
                "residual {:.3e} after {} iterations (converged: {})",
                report.residual, report.iterations, report.converged
            );
            if report.converged {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // worker pool size for pair generation, gradients, and evaluation
    if let Ok(workers) = std::env::var("BEZSCHED_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
