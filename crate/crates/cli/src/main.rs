use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eakf_cli::assimilate::{self, AssimilateArgs};
use eakf_cli::instance::Range;
use eakf_cli::twin::{self, TwinConfig};
use eakf_cli::verify::{self, VerifyConfig};
use eakf_cli::{demo, EXIT_FAIL, EXIT_PASS, EXIT_USAGE};
use eakf_core::OrderingMode;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "eakf",
    version,
    about = "Ensemble adjustment Kalman filter checks and tools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Correct,
    Misordered,
}

#[derive(Subcommand)]
enum Command {
    /// Random-instance sweep against the dense Kalman posterior.
    Verify {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        n_min: usize,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        #[arg(long, default_value_t = 2)]
        m_min: usize,
        #[arg(long, default_value_t = 12)]
        m_max: usize,
        #[arg(long, default_value_t = 1)]
        p_min: usize,
        #[arg(long, default_value_t = 20)]
        p_max: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Include m−1 < n and zero-spread ensembles.
        #[arg(long)]
        rank_deficient: bool,
        /// Include coordinate observations with rank(S) < rank(Z).
        #[arg(long)]
        partial_obs: bool,
        /// Include H = 0.
        #[arg(long)]
        zero_h: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correct vs misordered eigenvector columns on two instances.
    DemoPitfall {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// One analysis from CSV inputs.
    Assimilate {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long = "H")]
        h: PathBuf,
        #[arg(long = "R")]
        r: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_enum, default_value = "correct")]
        mode: Mode,
        /// Permutation seed for the misordered mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Cycled linear-Gaussian twin experiment.
    Twin {
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 12)]
        m: usize,
        #[arg(long, default_value_t = 0.95)]
        decay: f64,
        #[arg(long, default_value_t = 0.1)]
        model_var: f64,
        #[arg(long, default_value_t = 0.5)]
        obs_var: f64,
        #[arg(long, default_value_t = 1)]
        obs_every: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        series: Option<PathBuf>,
    },
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), String> {
    let json = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match path {
        Some(p) => std::fs::write(p, json).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<i32, (i32, String)> {
    let usage = |e: String| (EXIT_USAGE, e);
    match cli.command {
        Command::Verify {
            trials,
            seed,
            n_min,
            n_max,
            m_min,
            m_max,
            p_min,
            p_max,
            tol,
            rank_deficient,
            partial_obs,
            zero_h,
            out,
        } => {
            let cfg = VerifyConfig {
                trials,
                seed,
                n_range: Range::new(n_min, n_max),
                m_range: Range::new(m_min, m_max),
                p_range: Range::new(p_min, p_max),
                tolerance: tol,
                include_rank_deficient: rank_deficient,
                include_partial_obs: partial_obs,
                include_zero_h: zero_h,
            };
            let report = verify::run(&cfg).map_err(|e| usage(e.to_string()))?;
            emit_json(&report, out.as_deref()).map_err(usage)?;
            eprintln!(
                "verify: {}/{} trials passed, max relative error {:.3e}",
                report.trials.len() - report.failed_trials.len(),
                report.trials.len(),
                report.max_rel_err
            );
            Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::DemoPitfall { seed, json } => {
            let report = demo::run(seed).map_err(|e| (EXIT_FAIL, e.to_string()))?;
            print!("{}", demo::render(&report));
            if let Some(path) = json {
                emit_json(&report, Some(&path)).map_err(usage)?;
            }
            Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Assimilate {
            ensemble,
            h,
            r,
            y,
            mode,
            seed,
            out_prefix,
        } => {
            let args = AssimilateArgs {
                ensemble,
                h,
                r,
                y,
                out_prefix,
                mode: match mode {
                    Mode::Correct => OrderingMode::Correct,
                    Mode::Misordered => OrderingMode::Misordered { seed },
                },
            };
            let report = assimilate::run(&args).map_err(|e| usage(e.to_string()))?;
            eprintln!(
                "assimilate: relative error {:.3e}, trace deficit {:.3e}",
                report.comparison.frobenius_rel, report.comparison.trace_deficit
            );
            Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
        }
        Command::Twin {
            steps,
            n,
            m,
            decay,
            model_var,
            obs_var,
            obs_every,
            seed,
            out,
            series,
        } => {
            let cfg = TwinConfig {
                steps,
                n,
                m,
                dynamics_decay: decay,
                model_noise_var: model_var,
                obs_every,
                obs_noise_var: obs_var,
                seed,
            };
            let metrics = twin::run(&cfg).map_err(|e| usage(e.to_string()))?;
            emit_json(&metrics, out.as_deref()).map_err(usage)?;
            if let Some(path) = series {
                std::fs::write(&path, twin::series_csv(&metrics))
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            }
            Ok(if metrics.all_finite {
                EXIT_PASS
            } else {
                EXIT_FAIL
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
