//! Damped Newton continuity solver for the regularized geodesic equation.
//!
//! The unknowns are the interior slices `φ(t_k, ·)`, `1 ≤ k ≤ nt − 1`. Each
//! Newton step solves `J δ = −R` for the log-determinant residual `R`, with
//! `dR = tr(A^{−1} dA)` assembled from the same stencils as `A` itself, then
//! backtracks until `A ≻ 0` everywhere and `max |R|` decreases. The
//! regularization runs down a geometric schedule `ε_start → ε_min`, each stage
//! warm-started from the previous one, the first from the explicit
//! subsolution `(1−t)φ₀ + tφ₁ + m t(t−1)`.

use std::time::Instant;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{self, Assembler, ConeError, PotentialPath};
use crate::geometry::{self, GeometryError, SpatialField, TransverseModel};
use crate::herm;
use crate::stencil::Stencil;
use crate::C64;

type Triplets = Vec<Triplet<usize, usize, f64>>;

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("boundary slice {which} is not an admissible potential")]
    BoundaryNotAdmissible { which: &'static str },
    #[error("subsolution not positive even with m = {m}")]
    SubsolutionCap { m: f64 },
    #[error("line search reached the step floor at eps = {eps} (max |R| = {residual:e})")]
    LineSearchFailed { eps: f64, residual: f64 },
    #[error("singular Newton system: {0}")]
    SingularSystem(String),
    #[error("no convergence at eps = {eps} after {iterations} iterations (max |R| = {residual:e})")]
    NotConverged { eps: f64, iterations: usize, residual: f64, report: Box<SolveReport> },
    #[error(transparent)]
    Cone(#[from] ConeError),
}

impl From<GeometryError> for SolverError {
    fn from(e: GeometryError) -> Self {
        SolverError::Cone(e.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of time intervals.
    pub nt: usize,
    pub eps_start: f64,
    pub eps_min: f64,
    /// Ratio of the geometric ε schedule.
    pub eps_factor: f64,
    /// Target on `max |R|` over interior nodes.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub backtrack: f64,
    pub min_step: f64,
    /// Initial `m` of the subsolution; doubled until it is positive.
    pub m_init: f64,
    pub m_doublings: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            nt: 32,
            eps_start: 1.0,
            eps_min: 1e-3,
            eps_factor: 0.5,
            newton_tol: 1e-9,
            max_newton: 50,
            backtrack: 0.5,
            min_step: 1e-6,
            m_init: 1.0,
            m_doublings: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if self.nt < 2 {
            return bad("nt must be at least 2");
        }
        if !(self.eps_min > 0.0) {
            return bad("eps_min must be positive");
        }
        if !(self.eps_start >= self.eps_min) || !self.eps_start.is_finite() {
            return bad("eps_start must be finite and at least eps_min");
        }
        if !(self.eps_factor > 0.0 && self.eps_factor < 1.0) {
            return bad("eps_factor must lie in (0, 1)");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if self.max_newton == 0 {
            return bad("max_newton must be positive");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.min_step > 0.0 && self.min_step < 1.0) {
            return bad("min_step must lie in (0, 1)");
        }
        if !(self.m_init > 0.0) || !self.m_init.is_finite() {
            return bad("m_init must be positive");
        }
        Ok(())
    }

    /// `ε_start, ε_start·q, …`, ending exactly at `ε_min`.
    pub fn eps_schedule(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut eps = self.eps_start;
        while eps > self.eps_min * (1.0 + 1e-12) {
            out.push(eps);
            eps *= self.eps_factor;
        }
        out.push(self.eps_min);
        out
    }

    /// Single-stage solve at `eps`.
    pub fn at_eps(&self, eps: f64) -> SolverConfig {
        SolverConfig { eps_start: eps, eps_min: eps, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub eps: f64,
    pub iterations: usize,
    /// `max |R|`, re-evaluated on the returned path.
    pub residual: f64,
    pub min_schur: f64,
    pub sup_phi_tt: f64,
    pub sup_laplacian: f64,
    /// `sup (|φ_tt| + |Δ_T φ|)` over interior nodes.
    pub sup_c2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub stages: Vec<StageReport>,
    /// `m` of the subsolution used as the initial iterate.
    pub subsolution_m: f64,
    pub converged: bool,
    /// Kept out of serialized artifacts so repeated runs stay byte-identical.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl SolveReport {
    pub fn final_stage(&self) -> Option<&StageReport> {
        self.stages.last()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub alpha: f64,
    pub residual_before: f64,
    pub residual_after: f64,
}

/// `(1−t)φ₀ + tφ₁ + m t(t−1)`, with `m` doubled from `m` until the space-time
/// matrix is positive at every interior node.
pub fn build_subsolution(
    phi0: &SpatialField,
    phi1: &SpatialField,
    nt: usize,
    m: f64,
    model: &TransverseModel,
) -> Result<(PotentialPath, f64), SolverError> {
    build_subsolution_capped(phi0, phi1, nt, m, 20, model)
}

pub fn build_subsolution_capped(
    phi0: &SpatialField,
    phi1: &SpatialField,
    nt: usize,
    m: f64,
    max_doublings: u32,
    model: &TransverseModel,
) -> Result<(PotentialPath, f64), SolverError> {
    model.check(phi0)?;
    model.check(phi1)?;
    if nt < 2 {
        return Err(SolverError::InvalidConfig("nt must be at least 2".into()));
    }
    if !(m > 0.0) {
        return Err(SolverError::InvalidConfig("subsolution m must be positive".into()));
    }
    let asm = Assembler::new(model, nt);
    let mut m_try = m;
    for _ in 0..=max_doublings {
        let path = subsolution_path(phi0, phi1, nt, m_try)?;
        let positive = (1..nt).all(|k| (0..model.len()).into_par_iter().all(|s| asm.node(&path, k, s).is_positive()));
        if positive {
            return Ok((path, m_try));
        }
        m_try *= 2.0;
    }
    Err(SolverError::SubsolutionCap { m: m_try / 2.0 })
}

fn subsolution_path(phi0: &SpatialField, phi1: &SpatialField, nt: usize, m: f64) -> Result<PotentialPath, ConeError> {
    let mut slices: Vec<SpatialField> = (0..=nt)
        .map(|k| {
            let t = k as f64 / nt as f64;
            phi0.combine(1.0 - t, phi1, t).map(|v| v + m * t * (t - 1.0))
        })
        .collect();
    // Exact Dirichlet data, free of the (1−t), t rounding.
    slices[0] = phi0.clone();
    slices[nt] = phi1.clone();
    PotentialPath::new(slices)
}

/// Solves the linear comparison equation on the cone grid,
/// `(r²/4) ρ_rr + ¼ Δ_T ρ + n + 1 = 0`, `ρ(1) = φ₀`, `ρ(3/2) = φ₁ + 4 log(3/2)`,
/// and returns the unlifted path. This is the cone operator
/// `(r²/4)Δ_ḡρ − (r²/4)Δ_ḡ r ∂_rρ + n + 1` restricted to basic functions.
pub fn solve_supersolution(
    phi0: &SpatialField,
    phi1: &SpatialField,
    nt: usize,
    model: &TransverseModel,
) -> Result<PotentialPath, SolverError> {
    model.check(phi0)?;
    model.check(phi1)?;
    if nt < 2 {
        return Err(SolverError::InvalidConfig("nt must be at least 2".into()));
    }
    let n = model.n();
    let ns = model.len();
    let grid = model.grid();
    let dr = 0.5 / nt as f64;
    let radii: Vec<f64> = (0..=nt).map(|k| cone::radius(k as f64 / nt as f64)).collect();
    let lower = phi0.clone();
    let upper = phi1.map(|v| v + 4.0 * 1.5f64.ln());

    // ¼Δ_T = ½ tr(h⁻¹ ∂∂̄), one real stencil per node.
    let lap_taps = |s: usize| -> Vec<(usize, f64)> {
        let hinv = model.h_inv(s);
        let mut taps = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = hinv[(j, i)] * 0.5;
                for tap in &model.stencils().hess[i][j].taps {
                    let v = (w * tap.coef).re;
                    if v != 0.0 {
                        taps.push((Stencil::resolve(tap, grid, s), v));
                    }
                }
            }
        }
        taps
    };

    let rows: Vec<(Triplets, f64)> = (0..(nt - 1) * ns)
        .into_par_iter()
        .map(|row| {
            let (k, s) = (row / ns + 1, row % ns);
            let r = radii[k];
            let wr = r * r / (4.0 * dr * dr);
            let mut trip = vec![Triplet::new(row, row, -2.0 * wr)];
            let mut rhs = -((n + 1) as f64);
            for (kk, boundary) in [(k - 1, &lower), (k + 1, &upper)] {
                if kk == 0 || kk == nt {
                    rhs -= wr * boundary.values()[s];
                } else {
                    trip.push(Triplet::new(row, (kk - 1) * ns + s, wr));
                }
            }
            for (s2, v) in lap_taps(s) {
                trip.push(Triplet::new(row, (k - 1) * ns + s2, v));
            }
            (trip, rhs)
        })
        .collect();
    let mut triplets = Vec::new();
    let mut rhs = Vec::with_capacity(rows.len());
    for (t, b) in rows {
        triplets.extend(t);
        rhs.push(b);
    }
    let rho = sparse_solve((nt - 1) * ns, &triplets, &rhs)?;
    let mut slices = Vec::with_capacity(nt + 1);
    slices.push(lower);
    for k in 1..nt {
        slices.push(SpatialField::new(rho[(k - 1) * ns..k * ns].to_vec()));
    }
    slices.push(upper);
    let grid = cone::ConeGrid { radii, slices };
    Ok(cone::unlift(&grid)?)
}

fn sparse_solve(n: usize, triplets: &[Triplet<usize, usize, f64>], rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    SparseSolver::default().solve(n, triplets, rhs)
}

/// Sparse LU that keeps the symbolic analysis across systems with the same
/// triplet pattern.
#[derive(Default)]
struct SparseSolver {
    symbolic: Option<(usize, SymbolicLu<usize>)>,
}

impl SparseSolver {
    fn solve(
        &mut self,
        n: usize,
        triplets: &[Triplet<usize, usize, f64>],
        rhs: &[f64],
    ) -> Result<Vec<f64>, SolverError> {
        let singular = |e: &dyn std::fmt::Debug| SolverError::SingularSystem(format!("{e:?}"));
        // Sequential factorization keeps results bit-identical across thread counts.
        faer::set_global_parallelism(faer::Par::Seq);
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, triplets).map_err(|e| singular(&e))?;
        let symbolic = match &self.symbolic {
            Some((len, s)) if *len == n => s.clone(),
            _ => {
                let s = SymbolicLu::try_new(a.symbolic()).map_err(|e| singular(&e))?;
                self.symbolic = Some((n, s.clone()));
                s
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_ref()).map_err(|e| singular(&e))?;
        let mut b = Col::<f64>::from_fn(n, |i| rhs[i]);
        lu.solve_in_place(b.as_mat_mut());
        let x: Vec<f64> = (0..n).map(|i| b[i]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::SingularSystem("non-finite solution".into()));
        }
        Ok(x)
    }
}

/// Residual and exact Jacobian of the log-determinant residual.
fn linearize(
    path: &PotentialPath,
    asm: &Assembler<'_>,
    eps: f64,
    f: &SpatialField,
) -> Result<(Vec<f64>, Triplets), SolverError> {
    let model = asm.model;
    let n = model.n();
    let ns = model.len();
    let nt = path.nt();
    let grid = model.grid();
    let rows: Vec<Result<(f64, Triplets), SolverError>> = (0..path.interior_len())
        .into_par_iter()
        .map(|row| {
            let (k, s) = (row / ns + 1, row % ns);
            let node = asm.node(path, k, s);
            if !node.is_positive() {
                return Err(ConeError::NotPositive { k, node: s }.into());
            }
            let inv = herm::inverse(&node.matrix)
                .ok_or_else(|| SolverError::SingularSystem(format!("A singular at slice {k}, node {s}")))?;
            let r = node.log_det() - (0.5 * eps * f.values()[s] * model.det_h(s)).ln();
            let mut trip = Vec::new();
            for a in 0..=n {
                for b in 0..=n {
                    let w: C64 = inv[(b, a)];
                    for tap in &asm.entry(a, b).taps {
                        let kk = k as i32 + tap.dt;
                        if kk <= 0 || kk >= nt as i32 {
                            continue;
                        }
                        let col = (kk as usize - 1) * ns + Stencil::resolve(tap, grid, s);
                        // Zeros are kept so the pattern never changes.
                        trip.push(Triplet::new(row, col, (w * tap.coef).re));
                    }
                }
            }
            Ok((r, trip))
        })
        .collect();
    let mut residual = Vec::with_capacity(rows.len());
    let mut triplets = Vec::new();
    for row in rows {
        let (r, t) = row?;
        residual.push(r);
        triplets.extend(t);
    }
    Ok((residual, triplets))
}

/// One damped Newton step for `R(φ) = 0` at fixed `eps`.
pub fn newton_step(
    path: &PotentialPath,
    model: &TransverseModel,
    eps: f64,
    f: &SpatialField,
    cfg: &SolverConfig,
) -> Result<(PotentialPath, StepStats), SolverError> {
    path.check_model(model)?;
    cone::check_rhs(eps, f, model)?;
    let asm = Assembler::new(model, path.nt());
    let (path, stats) = step_with(path, &asm, eps, f, cfg, &mut SparseSolver::default())?;
    Ok((path, stats))
}

fn step_with(
    path: &PotentialPath,
    asm: &Assembler<'_>,
    eps: f64,
    f: &SpatialField,
    cfg: &SolverConfig,
    lin: &mut SparseSolver,
) -> Result<(PotentialPath, StepStats), SolverError> {
    let (residual, triplets) = linearize(path, asm, eps, f)?;
    let before = cone::max_abs(&residual);
    if before == 0.0 {
        let stats = StepStats { alpha: 0.0, residual_before: 0.0, residual_after: 0.0 };
        return Ok((path.clone(), stats));
    }
    let rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
    let delta = lin.solve(path.interior_len(), &triplets, &rhs)?;
    let mut alpha = 1.0;
    while alpha >= cfg.min_step {
        let candidate = path.with_interior_update(&delta, alpha);
        if let Ok(r) = cone::ma_residual(&candidate, asm.model, eps, f) {
            let after = cone::max_abs(&r);
            if after < before {
                let stats = StepStats { alpha, residual_before: before, residual_after: after };
                return Ok((candidate, stats));
            }
        }
        alpha *= cfg.backtrack;
    }
    Err(SolverError::LineSearchFailed { eps, residual: before })
}

/// Newton iterations at fixed `eps` until `max |R| ≤ newton_tol`.
/// Returns the path, the number of accepted steps and the final residual.
pub fn newton_solve(
    initial: &PotentialPath,
    model: &TransverseModel,
    eps: f64,
    f: &SpatialField,
    cfg: &SolverConfig,
) -> Result<(PotentialPath, usize, f64), SolverError> {
    initial.check_model(model)?;
    cone::check_rhs(eps, f, model)?;
    newton_run(initial, model, eps, f, cfg, &mut SparseSolver::default())
}

fn newton_run(
    initial: &PotentialPath,
    model: &TransverseModel,
    eps: f64,
    f: &SpatialField,
    cfg: &SolverConfig,
    lin: &mut SparseSolver,
) -> Result<(PotentialPath, usize, f64), SolverError> {
    let asm = Assembler::new(model, initial.nt());
    let mut path = initial.clone();
    let mut residual = cone::max_abs(&cone::ma_residual(&path, model, eps, f)?);
    let mut iterations = 0;
    while residual > cfg.newton_tol {
        if iterations == cfg.max_newton {
            return Err(SolverError::NotConverged {
                eps,
                iterations,
                residual,
                report: Box::new(SolveReport {
                    stages: Vec::new(),
                    subsolution_m: f64::NAN,
                    converged: false,
                    wall_time_secs: 0.0,
                }),
            });
        }
        let (next, stats) = step_with(&path, &asm, eps, f, cfg, lin)?;
        path = next;
        residual = stats.residual_after;
        iterations += 1;
    }
    Ok((path, iterations, residual))
}

fn stage_report(
    path: &PotentialPath,
    model: &TransverseModel,
    eps: f64,
    f: &SpatialField,
    iterations: usize,
) -> Result<StageReport, SolverError> {
    let residual = cone::max_abs(&cone::ma_residual(path, model, eps, f)?);
    let asm = Assembler::new(model, path.nt());
    let dt = path.dt();
    let mut min_schur = f64::INFINITY;
    let mut sup_phi_tt: f64 = 0.0;
    let mut sup_laplacian: f64 = 0.0;
    let mut sup_c2: f64 = 0.0;
    for k in 1..path.nt() {
        let nodes = asm.slice(path, k);
        min_schur = nodes.iter().map(|n| n.schur).fold(min_schur, f64::min);
        let lap = geometry::transverse_laplacian(path.slice(k), model)?;
        for s in 0..model.len() {
            let tt = (path.slice(k + 1).values()[s] - 2.0 * path.slice(k).values()[s] + path.slice(k - 1).values()[s])
                / (dt * dt);
            let l = lap.values()[s];
            sup_phi_tt = sup_phi_tt.max(tt.abs());
            sup_laplacian = sup_laplacian.max(l.abs());
            sup_c2 = sup_c2.max(tt.abs() + l.abs());
        }
    }
    Ok(StageReport { eps, iterations, residual, min_schur, sup_phi_tt, sup_laplacian, sup_c2 })
}

/// Runs the ε continuation from `initial`.
pub fn solve_geodesic_from(
    initial: PotentialPath,
    subsolution_m: f64,
    cfg: &SolverConfig,
    model: &TransverseModel,
    f: &SpatialField,
) -> Result<(PotentialPath, SolveReport), SolverError> {
    cfg.validate()?;
    initial.check_model(model)?;
    let started = Instant::now();
    let mut report = SolveReport { stages: Vec::new(), subsolution_m, converged: false, wall_time_secs: 0.0 };
    cone::check_rhs(cfg.eps_min, f, model)?;
    let mut lin = SparseSolver::default();
    // Last two converged stages, oldest first.
    let mut history: Vec<(f64, PotentialPath)> = Vec::with_capacity(2);
    for eps in cfg.eps_schedule() {
        let start = match history.as_slice() {
            [] => initial.clone(),
            [(_, last)] => last.clone(),
            [(e0, older), (e1, last)] => predict(older, *e0, last, *e1, eps, model),
            _ => unreachable!(),
        };
        match newton_run(&start, model, eps, f, cfg, &mut lin) {
            Ok((next, iterations, _)) => {
                report.stages.push(stage_report(&next, model, eps, f, iterations)?);
                if history.len() == 2 {
                    history.remove(0);
                }
                history.push((eps, next));
            }
            Err(SolverError::NotConverged { iterations, residual, .. }) => {
                report.wall_time_secs = started.elapsed().as_secs_f64();
                return Err(SolverError::NotConverged { eps, iterations, residual, report: Box::new(report) });
            }
            Err(e) => return Err(e),
        }
    }
    let path = history.pop().map(|(_, p)| p).unwrap_or(initial);
    report.converged = true;
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((path, report))
}

/// Secant predictor in ε from the last two converged stages, falling back to
/// the last stage when the extrapolation leaves the positive cone.
fn predict(
    older: &PotentialPath,
    eps_older: f64,
    last: &PotentialPath,
    eps_last: f64,
    eps: f64,
    model: &TransverseModel,
) -> PotentialPath {
    let w = (eps - eps_last) / (eps_last - eps_older);
    let slices = last.slices().iter().zip(older.slices()).map(|(a, b)| a.combine(1.0 + w, b, -w)).collect();
    let mut slices: Vec<SpatialField> = slices;
    // Boundary slices must stay bit-exact.
    let nt = last.nt();
    slices[0] = last.start().clone();
    slices[nt] = last.end().clone();
    let guess = match PotentialPath::new(slices) {
        Ok(p) => p,
        Err(_) => return last.clone(),
    };
    let asm = Assembler::new(model, last.nt());
    let positive =
        (1..last.nt()).all(|k| (0..model.len()).into_par_iter().all(|s| asm.node(&guess, k, s).is_positive()));
    if positive {
        guess
    } else {
        last.clone()
    }
}

/// ε-approximate geodesic between `phi0` and `phi1` at `cfg.eps_min`.
pub fn solve_geodesic(
    phi0: &SpatialField,
    phi1: &SpatialField,
    cfg: &SolverConfig,
    model: &TransverseModel,
    f: &SpatialField,
) -> Result<(PotentialPath, SolveReport), SolverError> {
    cfg.validate()?;
    if !geometry::metric_matrix(phi0, model)?.admissible {
        return Err(SolverError::BoundaryNotAdmissible { which: "phi0" });
    }
    if !geometry::metric_matrix(phi1, model)?.admissible {
        return Err(SolverError::BoundaryNotAdmissible { which: "phi1" });
    }
    cone::check_rhs(cfg.eps_min, f, model)?;
    let (initial, m) = build_subsolution_capped(phi0, phi1, cfg.nt, cfg.m_init, cfg.m_doublings, model)?;
    solve_geodesic_from(initial, m, cfg, model, f)
}

/// Solves from subsolutions with each `m` in `seeds` and returns the largest
/// pairwise sup-distance between the converged paths.
pub fn check_uniqueness(
    phi0: &SpatialField,
    phi1: &SpatialField,
    cfg: &SolverConfig,
    model: &TransverseModel,
    f: &SpatialField,
    seeds: &[f64],
) -> Result<f64, SolverError> {
    cfg.validate()?;
    let mut paths = Vec::with_capacity(seeds.len());
    for &m in seeds {
        let (initial, m_used) = build_subsolution_capped(phi0, phi1, cfg.nt, m, cfg.m_doublings, model)?;
        paths.push(solve_geodesic_from(initial, m_used, cfg, model, f)?.0);
    }
    let mut worst: f64 = 0.0;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            worst = worst.max(paths[i].sup_distance(&paths[j]));
        }
    }
    Ok(worst)
}
