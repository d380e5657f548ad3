//! Command-line harness: condition numbers of stored decompositions,
//! Gauss-Newton solves with CSV traces, the seeded perturbation experiments,
//! and the property-check suites.
//!
//! Exit codes: 0 on success, 1 on solver or property failure, 2 on input
//! errors (bad files, bad flags, malformed data).

use clap::{Parser, Subcommand, ValueEnum};
use rgn_core::checks;
use rgn_core::cpd::condition_number;
use rgn_core::error::Error;
use rgn_core::experiment::{run_experiment, write_experiment, ExperimentKind, ExperimentSpec};
use rgn_core::io::{read_decomposition, read_tensor, write_trace_csv};
use rgn_core::solver::{solve, SolverConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rgn", about = "Riemannian Gauss-Newton for low-rank tensor approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the geometric condition number of a stored decomposition.
    Condition {
        /// Decomposition JSON file.
        #[arg(long)]
        dec: PathBuf,
    },
    /// Run the Gauss-Newton iteration and write the trace as CSV.
    Solve {
        /// Target tensor JSON file.
        #[arg(long)]
        tensor: PathBuf,
        /// Initial decomposition JSON file.
        #[arg(long)]
        init: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-12)]
        grad_tol: f64,
        #[arg(long, default_value_t = 1e-14)]
        step_tol: f64,
        /// Output CSV path for the iteration trace.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Run the perturbation experiments and write per-s bundles.
    Experiment {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Family parameters, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0,1,3,5")]
        s: Vec<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Magnitude of the on-manifold start perturbation.
        #[arg(long, default_value_t = 1e-4)]
        start_pert: f64,
        /// Magnitude of the ambient data perturbation.
        #[arg(long, default_value_t = 1e-8)]
        data_pert: f64,
        /// Solve only the exact-target (zero-residual) regime.
        #[arg(long)]
        zero_residual: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded property-check suite.
    Check {
        #[arg(long, value_enum)]
        property: PropertyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Random,
    Adversarial,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropertyArg {
    Taylor,
    Retraction,
    Wedin,
    Weyl,
    Gradient,
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::IllConditionedJacobian { .. } | Error::RetractionFailed { .. } => {
            ExitCode::from(1)
        }
        _ => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Condition { dec } => {
            let point = read_decomposition(&dec)?;
            let report = condition_number(&point)?;
            println!("kappa = {:.6e}", report.kappa);
            println!("sigma_min = {:.6e}", report.sigma_min);
            println!("tangent_dim = {}", report.full_spectrum.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve {
            tensor,
            init,
            max_iters,
            grad_tol,
            step_tol,
            trace,
        } => {
            let target = read_tensor(&tensor)?;
            let x0 = read_decomposition(&init)?;
            let cfg = SolverConfig {
                max_iters,
                grad_tol,
                step_tol,
                record_reference: None,
            };
            let (solution, tr) = solve(&target, &x0, &cfg)?;
            write_trace_csv(&tr, &trace)?;
            let report = condition_number(&solution)?;
            let final_residual = tr
                .records
                .last()
                .map(|r| r.residual_norm)
                .unwrap_or(f64::NAN);
            println!("status = {}", tr.status);
            println!("iterations = {}", tr.records.len());
            println!("residual = {final_residual:.6e}");
            println!("kappa = {:.6e}", report.kappa);
            if tr.status.is_converged() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Experiment {
            kind,
            s,
            seed,
            start_pert,
            data_pert,
            zero_residual,
            out,
        } => {
            let spec = ExperimentSpec {
                kind: match kind {
                    KindArg::Random => ExperimentKind::Random,
                    KindArg::Adversarial => ExperimentKind::Adversarial,
                },
                s_values: s,
                start_perturbation: start_pert,
                data_perturbation: data_pert,
                seed,
                zero_residual,
            };
            let output = run_experiment(&spec)?;
            write_experiment(&output, &out)?;
            let mut all_converged = true;
            for bundle in &output.bundles {
                let status = bundle.primary().trace.status.clone();
                println!(
                    "s={}: status={} kappa={:.3e} residual={:.3e}",
                    bundle.s, status, bundle.bounds.kappa_star, bundle.bounds.residual_star
                );
                all_converged &= status.is_converged();
            }
            println!("wrote {}", out.display());
            if all_converged {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
        Command::Check { property, seed } => {
            let outcome = match property {
                PropertyArg::Taylor => checks::check_taylor(seed, 100)?,
                PropertyArg::Retraction => checks::check_retraction(seed, 100)?,
                PropertyArg::Wedin => checks::check_wedin(seed, 1000)?,
                PropertyArg::Weyl => checks::check_weyl(seed, 1000)?,
                PropertyArg::Gradient => checks::check_gradient(seed, 20)?,
            };
            println!("{outcome}");
            if outcome.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
