//! Executes a [`RunConfig`] and writes its artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use sasaki_core::cone;
use sasaki_core::functionals::{self, FunctionalError};
use sasaki_core::problems;
use sasaki_core::solver::{self, SolverError};
use sasaki_core::verify;
use sasaki_core::{SpatialField, TransverseModel};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{Boundary, Command, Rhs, RunConfig};
use crate::dump::{self, DumpError};

pub const EXIT_OK: u8 = 0;
pub const EXIT_SOLVER: u8 = 1;
pub const EXIT_CHECK: u8 = 2;
pub const EXIT_CONFIG: u8 = 64;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error("cannot write output: {0}")]
    Output(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Input(_) => EXIT_CONFIG,
            RunError::CheckFailed(_) => EXIT_CHECK,
            RunError::Solver(_) | RunError::Functional(_) | RunError::Output(_) => EXIT_SOLVER,
        }
    }
}

fn output_err<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Output(e.to_string())
}

fn input_err(what: &str, e: DumpError) -> RunError {
    RunError::Input(format!("{what}: {e}"))
}

pub fn boundary_fields(cfg: &RunConfig, model: &TransverseModel) -> Result<(SpatialField, SpatialField), RunError> {
    Ok(match &cfg.boundary {
        Boundary::Constants { phi0, phi1 } => {
            (SpatialField::constant(model, *phi0), SpatialField::constant(model, *phi1))
        }
        Boundary::Cosine { amplitude, frequency, axis } => {
            (SpatialField::constant(model, 0.0), problems::cosine(model, *amplitude, *frequency, *axis))
        }
        Boundary::Random { seed, amplitude, max_mode } => (
            problems::random_bandlimited(model, *seed, *amplitude, *max_mode),
            problems::random_bandlimited(model, seed.wrapping_add(1), *amplitude, *max_mode),
        ),
        Boundary::File { phi0, phi1 } => (
            dump::read_field(phi0, &cfg.grid).map_err(|e| input_err("boundary.phi0", e))?,
            dump::read_field(phi1, &cfg.grid).map_err(|e| input_err("boundary.phi1", e))?,
        ),
    })
}

pub fn rhs_field(cfg: &RunConfig, model: &TransverseModel) -> Result<SpatialField, RunError> {
    match &cfg.rhs {
        Rhs::Constant { value } => Ok(SpatialField::constant(model, *value)),
        Rhs::File { path } => {
            let f = dump::read_field(path, &cfg.grid).map_err(|e| input_err("rhs.path", e))?;
            if f.values().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(RunError::Input("rhs.path: f must be positive and finite everywhere".into()));
            }
            Ok(f)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(output_err)?;
    text.push('\n');
    fs::write(path, text).map_err(output_err)
}

/// Runs the configured command. Returns a one-line summary on success.
pub fn run(cfg: &RunConfig) -> Result<String, RunError> {
    let model = TransverseModel::flat(cfg.n, &cfg.grid).map_err(|e| RunError::Input(e.to_string()))?;
    fs::create_dir_all(&cfg.output).map_err(output_err)?;
    match cfg.command {
        Command::Solve => solve(cfg, &model),
        Command::Distance => distance(cfg, &model),
        Command::Verify => run_verify(cfg, &model),
        Command::IdentityCheck => identity(cfg, &model),
    }
}

fn solve(cfg: &RunConfig, model: &TransverseModel) -> Result<String, RunError> {
    let (phi0, phi1) = boundary_fields(cfg, model)?;
    let f = rhs_field(cfg, model)?;
    let (path, report) = match solver::solve_geodesic(&phi0, &phi1, &cfg.solver, model, &f) {
        Ok(out) => out,
        Err(SolverError::NotConverged { eps, iterations, residual, report }) => {
            // Keep the partial report for inspection.
            write_json(&cfg.output.join("report.json"), &report)?;
            return Err(SolverError::NotConverged { eps, iterations, residual, report }.into());
        }
        Err(e) => return Err(e.into()),
    };
    let file = fs::File::create(cfg.output.join("solution.bin")).map_err(output_err)?;
    dump::write_path(BufWriter::new(file), &path, &cfg.grid).map_err(output_err)?;
    write_json(&cfg.output.join("report.json"), &report)?;
    let diagnostics = functionals::path_diagnostics(&path, model)?;
    fs::write(cfg.output.join("diagnostics.csv"), diagnostics.to_csv()).map_err(output_err)?;
    let last = report.final_stage().expect("at least one stage");
    Ok(format!(
        "solved to eps = {:e} in {} stages (max |R| = {:.2e}), length {:.6}",
        last.eps,
        report.stages.len(),
        last.residual,
        diagnostics.length
    ))
}

fn distance(cfg: &RunConfig, model: &TransverseModel) -> Result<String, RunError> {
    let (phi0, phi1) = boundary_fields(cfg, model)?;
    let d = functionals::distance(&phi0, &phi1, &cfg.solver, model)?;
    let out = json!({
        "distance": d,
        "eps": cfg.solver.eps_min,
        "nt": cfg.solver.nt,
        "grid": cfg.grid,
    });
    write_json(&cfg.output.join("distance.json"), &out)?;
    Ok(format!("distance {d:.9} at eps = {:e}", cfg.solver.eps_min))
}

fn run_verify(cfg: &RunConfig, model: &TransverseModel) -> Result<String, RunError> {
    let report = verify::run_suite(cfg.level, model, &cfg.solver);
    write_json(&cfg.output.join("verify.json"), &report)?;
    for c in &report.checks {
        let tag = if c.negative_control { " (control)" } else { "" };
        println!("[{}] {}{tag}: {:.3e} vs {:.3e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.measured, c.bound);
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    if report.passed {
        Ok(format!("{} suite: all {} checks pass", cfg.level, report.checks.len()))
    } else {
        Err(RunError::CheckFailed(format!("{} suite: {failed} of {} checks failed", cfg.level, report.checks.len())))
    }
}

fn identity(cfg: &RunConfig, model: &TransverseModel) -> Result<String, RunError> {
    let (phi0, phi1) = boundary_fields(cfg, model)?;
    let f = rhs_field(cfg, model)?;
    let (path, _) = solver::solve_geodesic(&phi0, &phi1, &cfg.solver, model, &f)?;
    let check = cone::cone_identity_check(&path, model, cfg.solver.eps_min, &f).map_err(SolverError::from)?;
    let out = json!({
        "eps": cfg.solver.eps_min,
        "nt": cfg.solver.nt,
        "grid": cfg.grid,
        "identity_discrepancy": check.identity_discrepancy,
        "equation_discrepancy": check.equation_discrepancy,
    });
    write_json(&cfg.output.join("identity.json"), &out)?;
    Ok(format!(
        "cone identity discrepancy {:.3e}, equation discrepancy {:.3e}",
        check.identity_discrepancy, check.equation_discrepancy
    ))
}
