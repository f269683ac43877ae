//! Scenario-driven command line front end: run a scheme, run a step
//! refinement study, or run the finite-volume moment reference.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 nondegeneracy
//! guard violation, 3 degenerate weight, 4 solver failure.

use clap::{Parser, Subcommand};
use kinproj::diagnostics::{convergence_study, OracleComparison, StudyInputs};
use kinproj::error::Error;
use kinproj::oracle;
use kinproj::scenario::{load_scenario, Scenario};
use kinproj::scheme;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kinproj", about = "Transport-projection splitting schemes for moment closures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the scenario's scheme and write states, ledger and moments.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Step-refinement convergence study across a list of h values.
    Study {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated h values; defaults to the scenario's study list.
        #[arg(long, value_delimiter = ',')]
        h_list: Option<Vec<f64>>,
    },
    /// Finite-volume reference solution of the limiting moment system.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            scenario,
            out,
            jobs,
            seed,
        } => dispatch(&scenario, &out, jobs, |s, out| cmd_run(s, out, seed)),
        Command::Study {
            scenario,
            out,
            jobs,
            seed,
            h_list,
        } => dispatch(&scenario, &out, jobs, |s, out| cmd_study(s, out, seed, h_list.clone())),
        Command::Oracle { scenario, out, jobs } => dispatch(&scenario, &out, jobs, cmd_oracle),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(
    scenario_path: &Path,
    out: &Path,
    jobs: usize,
    f: impl Fn(&Scenario, &Path) -> kinproj::Result<ExitCode>,
) -> kinproj::Result<ExitCode> {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    }
    let scenario = load_scenario(scenario_path)?;
    std::fs::create_dir_all(out)?;
    f(&scenario, out)
}

fn abort_exit_code(e: &Error) -> u8 {
    match e {
        Error::HypothesisViolation { .. } | Error::TailUnbounded { .. } => 2,
        Error::DegenerateWeight { .. } => 3,
        Error::SolverFailure { .. } | Error::NoConvergence { .. } => 4,
        _ => 1,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> kinproj::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn cmd_run(s: &Scenario, out: &Path, _seed: Option<u64>) -> kinproj::Result<ExitCode> {
    let traj = scheme::run(&s.config, s.l0.clone(), &s.entropy, &s.quad)?;

    if s.state_stride > 0 {
        for (n, state) in traj.states.iter().enumerate() {
            if n % s.state_stride == 0 {
                let mut f = BufWriter::new(File::create(out.join(format!("state_{n:05}.csv")))?);
                state.write_csv(&mut f)?;
            }
        }
    }
    let mut f = BufWriter::new(File::create(out.join("state_final.csv"))?);
    traj.final_state().write_csv(&mut f)?;

    write_json(&out.join("ledger.json"), &traj.ledger.to_json(s.config.h))?;

    let moments = oracle::moment_field_of(traj.final_state(), &s.quad, &s.entropy)?;
    let mut f = BufWriter::new(File::create(out.join("moments.csv"))?);
    moments.write_csv(&mut f)?;

    match &traj.abort {
        None => Ok(ExitCode::SUCCESS),
        Some(abort) => {
            let code = abort_exit_code(&abort.cause);
            write_json(
                &out.join("abort.json"),
                &serde_json::json!({
                    "step": abort.step,
                    "exit_code": code,
                    "cause": format!("{}", abort.cause),
                }),
            )?;
            eprintln!("run aborted at step {}: {}", abort.step, abort.cause);
            Ok(ExitCode::from(code))
        }
    }
}

fn cmd_study(
    s: &Scenario,
    out: &Path,
    seed: Option<u64>,
    h_list: Option<Vec<f64>>,
) -> kinproj::Result<ExitCode> {
    let h_list = h_list.unwrap_or_else(|| s.study_h_list.clone());
    let inputs = StudyInputs {
        config: &s.config,
        l0: &s.l0,
        entropy: &s.entropy,
        quad: &s.quad,
        h_list: &h_list,
        cloud_size: s.study_cloud_size,
        seed: seed.unwrap_or(s.seed),
        oracle: Some(OracleComparison {
            n_cells: s.oracle_n_cells,
            cfl: s.oracle_cfl,
        }),
    };
    let report = convergence_study(&inputs)?;
    write_json(&out.join("convergence.json"), &serde_json::to_value(&report)?)?;
    if report.complete {
        println!(
            "study complete: distances {:?}, rates {:?}",
            report.pair_distances, report.rates
        );
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "study incomplete: {}",
            report.cause.as_deref().unwrap_or("unknown cause")
        );
        Ok(ExitCode::from(2))
    }
}

fn cmd_oracle(s: &Scenario, out: &Path) -> kinproj::Result<ExitCode> {
    let u0 = oracle::moment_field_resampled(&s.l0, s.oracle_n_cells, &s.quad, &s.entropy)?;
    let dt = s.oracle_cfl * u0.dx() / s.quad.r_quad();
    let gamma_init = s.l0.gamma_at(0);
    let result = oracle::solve_moment_pde(
        &u0,
        dt,
        s.config.t_final,
        &gamma_init,
        s.basis.as_ref(),
        &s.quad,
        &s.entropy,
    );
    match result {
        Ok(field) => {
            let mut f = BufWriter::new(File::create(out.join("oracle_moments.csv"))?);
            field.write_csv(&mut f)?;
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("oracle failed: {e}");
            Ok(ExitCode::from(abort_exit_code(&e)))
        }
    }
}
