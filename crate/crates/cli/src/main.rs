use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cosparse_cli::{certify_dir, exit, run, sweep, validate_frame_file, CliError, ExperimentConfig, SweepSpec};

/// Generate, solve and certify analysis-LASSO experiments.
#[derive(Parser)]
#[command(name = "cosparse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts to the config's output_dir.
    Run {
        /// Experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a grid or list of experiments in parallel and write sweep.csv.
    Sweep {
        /// Sweep spec (JSON) with `base` + `grid` or `configs`.
        #[arg(long)]
        grid: PathBuf,
    },
    /// Report frame bounds of a frame, instance or matrix document.
    ValidateFrame {
        /// Input file (JSON).
        #[arg(long = "in")]
        input: PathBuf,
        /// Tolerance for the tightness and uniform-row-norm flags.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Re-certify an existing run directory.
    Certify {
        /// Run directory written by `run`.
        #[arg(long)]
        trace: PathBuf,
        /// Write the report here instead of printing a summary only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::STRUCTURAL as u8)
        }
    }
}

fn status(pass: bool) -> i32 {
    if pass {
        exit::OK
    } else {
        exit::CERTIFICATES_FAILED
    }
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = run(&cfg)?;
            println!(
                "fingerprint {}  converged {}  iters {}  certificates {}  worst margin {:.3e}",
                s.fingerprint,
                s.converged,
                s.iters_run,
                if s.overall_pass { "pass" } else { "FAIL" },
                s.worst_margin
            );
            for f in &s.failed_checks {
                println!("  failed: {f}");
            }
            println!("artifacts in {}", cfg.output_dir.display());
            Ok(status(s.overall_pass))
        }
        Command::Sweep { grid } => {
            let spec = SweepSpec::load(&grid)?;
            let rows = sweep(&spec)?;
            let mut all_pass = true;
            for r in &rows {
                match &r.result {
                    Ok(s) => {
                        all_pass &= s.overall_pass;
                        println!("run {:03}: certificates {}", r.run, if s.overall_pass { "pass" } else { "FAIL" });
                    }
                    Err(e) => {
                        all_pass = false;
                        println!("run {:03}: error: {e}", r.run);
                    }
                }
            }
            println!("wrote {}", spec.output_dir.join("sweep.csv").display());
            Ok(status(all_pass))
        }
        Command::ValidateFrame { input, tol } => {
            let r = validate_frame_file(&input, tol)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(exit::OK)
        }
        Command::Certify { trace, out } => {
            let (report, replayed) = certify_dir(&trace)?;
            if replayed {
                println!("no iterates.json; replayed the solve from config.json");
            }
            for c in &report.checks {
                println!(
                    "{:<22} {:?}  records {}  violations {}  worst {}",
                    c.name,
                    c.status,
                    c.records,
                    c.violations,
                    c.worst_margin.map(|m| format!("{m:.3e}")).unwrap_or_else(|| "-".into())
                );
            }
            if let Some(path) = out {
                cosparse_cli::pipeline::write_json(&path, &report)?;
            }
            Ok(status(report.overall_pass))
        }
    }
}
