//! Executable check campaign.
//!
//! [`run_suite`] runs every named check in a fixed order and returns one
//! [`CheckResult`] per comparison. Tolerances are measured per run: the
//! truncation of the homogeneous supersolution, Richardson estimates from a
//! half-resolution solve, and fitted drift constants. Each equality-type check
//! has a negative control that feeds it deliberately wrong data; a control
//! passes when the comparison it wraps is violated.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{self, HermitianNode, PotentialPath};
use crate::functionals::{self, FunctionalError};
use crate::geometry::{self, SpatialField, TransverseModel};
use crate::problems;
use crate::solver::{self, SolverConfig, SolverError};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Quick,
    Full,
}

impl FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown suite level '{other}' (expected quick or full)")),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Quick => "quick",
            Level::Full => "full",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

impl Relation {
    pub fn holds(self, measured: f64, bound: f64) -> bool {
        match self {
            Relation::AtMost => measured <= bound,
            Relation::AtLeast => measured >= bound,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
    /// For ordinary checks: `measured relation bound` holds. For negative
    /// controls: it does not.
    pub pass: bool,
    pub negative_control: bool,
    /// Grid, time steps and ε the check ran at.
    pub context: String,
}

impl CheckResult {
    fn new(name: &str, measured: f64, relation: Relation, bound: f64, context: String) -> Self {
        let pass = relation.holds(measured, bound);
        CheckResult { name: name.to_string(), measured, bound, relation, pass, negative_control: false, context }
    }

    pub fn at_most(name: &str, measured: f64, bound: f64, context: String) -> Self {
        Self::new(name, measured, Relation::AtMost, bound, context)
    }

    pub fn at_least(name: &str, measured: f64, bound: f64, context: String) -> Self {
        Self::new(name, measured, Relation::AtLeast, bound, context)
    }

    /// Turns a comparison on corrupted data into a negative control.
    pub fn control(mut self) -> Self {
        self.negative_control = true;
        self.pass = !self.relation.holds(self.measured, self.bound);
        self
    }

    fn failed(name: &str, context: String) -> Self {
        CheckResult {
            name: name.to_string(),
            measured: f64::NAN,
            bound: f64::NAN,
            relation: Relation::AtMost,
            pass: false,
            negative_control: false,
            context,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub level: Level,
    pub grid: Vec<usize>,
    pub nt: usize,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("a refinement study needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("invalid refinement levels: {0}")]
    InvalidLevels(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Cone(#[from] cone::ConeError),
}

type CheckOutput = Result<Vec<CheckResult>, VerifyError>;

/// Time-step count and model of the quick suite (17 slices over a 16² torus).
pub fn quick_setup() -> (TransverseModel, SolverConfig) {
    let model = TransverseModel::flat(1, &[16, 16]).expect("valid grid");
    (model, SolverConfig { nt: 16, ..SolverConfig::default() })
}

/// Runs the named checks in a fixed order. `cfg.nt` and the Newton settings
/// are used for every solve; each check chooses its own ε.
pub fn run_suite(level: Level, model: &TransverseModel, cfg: &SolverConfig) -> SuiteReport {
    let mut checks = Vec::new();
    let grids: Vec<(TransverseModel, SolverConfig)> = match level {
        Level::Quick => vec![(model.clone(), cfg.clone())],
        Level::Full => {
            let dims: Vec<usize> = model.grid_dims().iter().map(|d| 2 * d).collect();
            let fine = TransverseModel::flat(model.n(), &dims).expect("refined grid");
            vec![(model.clone(), cfg.clone()), (fine, SolverConfig { nt: 2 * cfg.nt, ..cfg.clone() })]
        }
    };
    let sweep: &[f64] = match level {
        Level::Quick => &[1e-2],
        Level::Full => &[1e-1, 1e-2, 1e-3],
    };

    fn record(checks: &mut Vec<CheckResult>, name: &str, ctx: String, out: CheckOutput) {
        match out {
            Ok(results) => checks.extend(results),
            Err(e) => checks.push(CheckResult::failed(name, format!("{ctx}; error: {e}"))),
        }
    }
    let mut run = |name: &str, ctx: String, out: CheckOutput| record(&mut checks, name, ctx, out);

    run("block_determinant_identity", String::new(), check_block_determinant(10_000));
    for (m, c) in &grids {
        let ctx = context(m, c.nt, None);
        run("cone_identity", ctx.clone(), check_cone_identity(m));
        run("homogeneous_closed_form", ctx.clone(), check_closed_form(m, c));
        for &eps in sweep {
            let ctx = context(m, c.nt, Some(eps));
            match solve_cosine(m, c, eps) {
                Ok(solved) => {
                    run("newton_residual", ctx.clone(), check_residual(m, c, eps, &solved.path));
                    run("sandwich", ctx.clone(), check_sandwich(m, c, &solved));
                    run("slope_bounds", ctx.clone(), check_slopes(m, c, &solved.path));
                    run("uniqueness", ctx.clone(), check_uniqueness(m, c, eps));
                    run("i_second_difference", ctx.clone(), check_i_second_difference(m, c, eps, &solved.path));
                    run("k_energy_convexity", ctx.clone(), check_k_energy_convexity(m, eps, &solved.path));
                }
                Err(e) => run("cosine_solve", ctx, Err(e.into())),
            }
        }
        run("energy_drift", ctx.clone(), check_energy_drift(m, c));
        run("k_energy_hessian_refinement", ctx.clone(), check_hessian_refinement(m, c.nt));
        run("metric_axioms", ctx.clone(), check_metric_axioms(m, c));
        run("c2_uniform_trend", ctx, check_c2_trend(m, c));
    }
    if level == Level::Full {
        let small = coarse_model(model);
        for problem in [StudyProblem::Homogeneous, StudyProblem::Wavy] {
            let ctx = context(&small, 0, Some(1e-2));
            let out = refinement_study(problem, &[16, 32, 64], &small, cfg).map(|table| {
                let order = table.min_order();
                vec![CheckResult::at_least(
                    &format!("refinement_order_{}", problem.name()),
                    order,
                    1.7,
                    format!("{ctx}; levels {:?}; errors {:?}", table.levels, table.errors),
                )]
            });
            run("refinement_order", ctx, out);
        }
    }
    let passed = checks.iter().all(|c| c.pass);
    SuiteReport { level, grid: model.grid_dims().to_vec(), nt: cfg.nt, passed, checks }
}

fn context(model: &TransverseModel, nt: usize, eps: Option<f64>) -> String {
    let grid: Vec<String> = model.grid_dims().iter().map(|d| d.to_string()).collect();
    let mut s = format!("grid {}, nt {nt}", grid.join("x"));
    if let Some(eps) = eps {
        s.push_str(&format!(", eps {eps:e}"));
    }
    s
}

fn coarse_model(model: &TransverseModel) -> TransverseModel {
    let dims: Vec<usize> = model.grid_dims().iter().map(|d| (d / 2).max(4)).collect();
    TransverseModel::flat(model.n(), &dims).expect("coarse grid")
}

fn ones(model: &TransverseModel) -> SpatialField {
    SpatialField::constant(model, 1.0)
}

/// Cosine boundary problem `0 → 0.05 cos(2πx₁)` with `f ≡ 1`.
pub fn cosine_boundary(model: &TransverseModel) -> (SpatialField, SpatialField) {
    (SpatialField::constant(model, 0.0), problems::cosine(model, 0.05, 1, 0))
}

struct Solved {
    path: PotentialPath,
    subsolution_m: f64,
}

fn solve_cosine(model: &TransverseModel, cfg: &SolverConfig, eps: f64) -> Result<Solved, SolverError> {
    let (phi0, phi1) = cosine_boundary(model);
    let cfg = SolverConfig { eps_min: eps, eps_start: cfg.eps_start.max(eps), ..cfg.clone() };
    let (path, report) = solver::solve_geodesic(&phi0, &phi1, &cfg, model, &ones(model))?;
    Ok(Solved { path, subsolution_m: report.subsolution_m })
}

fn random_node(rng: &mut ChaCha8Rng, n: usize) -> HermitianNode {
    let size = n + 1;
    let b =
        DMatrix::<C64>::from_fn(size, size, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let a = &b * b.adjoint() + DMatrix::<C64>::identity(size, size).scale(0.05);
    HermitianNode::from_matrix(crate::herm::hermitian_part(&a))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn check_block_determinant(count: usize) -> CheckOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let mut worst: f64 = 0.0;
    let mut control: f64 = 0.0;
    for n in [1, 2] {
        for _ in 0..count {
            let node = random_node(&mut rng, n);
            worst = worst.max(relative_gap(node.det_block(), node.det_direct()));
            let mut bumped = node.matrix.clone();
            let corner = bumped[(0, 0)].re;
            bumped[(0, 0)] += C64::new(1e-6 * corner, 0.0);
            control = control.max(relative_gap(node.det_block(), crate::herm::det(&bumped)));
        }
    }
    let ctx = format!("{count} random positive nodes for n = 1 and n = 2");
    Ok(vec![
        CheckResult::at_most("block_determinant_identity", worst, 1e-12, ctx.clone()),
        CheckResult::at_most(
            "block_determinant_identity_control",
            control,
            1e-12,
            format!("{ctx}; one entry bumped by 1e-6"),
        )
        .control(),
    ])
}

fn homogeneous_path(model: &TransverseModel, nt: usize, eps: f64) -> PotentialPath {
    PotentialPath::from_fn(nt, |t| SpatialField::constant(model, problems::homogeneous_solution(0.0, 1.0, eps, t)))
        .expect("finite path")
}

fn check_cone_identity(model: &TransverseModel) -> CheckOutput {
    let eps = 0.1;
    let f = ones(model);
    let coarse = cone::cone_identity_check(&homogeneous_path(model, 32, eps), model, eps, &f)?;
    let fine = cone::cone_identity_check(&homogeneous_path(model, 64, eps), model, eps, &f)?;
    let ratio = coarse.identity_discrepancy / fine.identity_discrepancy;

    let mut corrupted = homogeneous_path(model, 64, eps).slices().to_vec();
    let bump = problems::cosine(model, 0.1, 1, 0);
    corrupted[32] = corrupted[32].combine(1.0, &bump, 1.0);
    let corrupted = PotentialPath::new(corrupted)?;
    let control = match cone::cone_identity_check(&corrupted, model, eps, &f) {
        Ok(c) => c.equation_discrepancy,
        Err(_) => f64::INFINITY,
    };
    let ctx = format!("homogeneous 0 -> 1, eps {eps:e}, nt 32 and 64");
    Ok(vec![
        CheckResult::at_most("cone_identity", fine.identity_discrepancy, 1e-3, ctx.clone()),
        CheckResult::at_least("cone_identity_refinement", ratio, 3.5, ctx.clone()),
        CheckResult::at_most("cone_equation_control", control, 1e-3, format!("{ctx}; 0.1 cos added at t = 1/2"))
            .control(),
    ])
}

fn check_closed_form(model: &TransverseModel, cfg: &SolverConfig) -> CheckOutput {
    let eps = 0.1;
    let zero = SpatialField::constant(model, 0.0);
    let one = ones(model);
    let cfg = SolverConfig { eps_min: eps, eps_start: cfg.eps_start.max(eps), ..cfg.clone() };
    let (path, _) = solver::solve_geodesic(&zero, &one, &cfg, model, &one)?;
    let err_to = |e: f64| path.sup_distance(&homogeneous_path(model, cfg.nt, e));
    let ctx = context(model, cfg.nt, Some(eps));
    Ok(vec![
        CheckResult::at_most("homogeneous_closed_form", err_to(eps), 1e-8, ctx.clone()),
        CheckResult::at_most(
            "homogeneous_closed_form_control",
            err_to(eps * 1.001),
            1e-8,
            format!("{ctx}; oracle at 1.001 eps"),
        )
        .control(),
    ])
}

fn check_residual(model: &TransverseModel, cfg: &SolverConfig, eps: f64, path: &PotentialPath) -> CheckOutput {
    let f = ones(model);
    let bound = 10.0 * cfg.newton_tol;
    let measured = cone::max_abs(&cone::ma_residual(path, model, eps, &f)?);
    let mut slices = path.slices().to_vec();
    let k = cfg.nt / 2;
    slices[k] = slices[k].combine(1.0, &problems::cosine(model, 0.1, 1, 0), 1.0);
    let corrupted = PotentialPath::new(slices)?;
    let control = match cone::ma_residual(&corrupted, model, eps, &f) {
        Ok(r) => cone::max_abs(&r),
        Err(_) => f64::INFINITY,
    };
    Ok(vec![
        CheckResult::at_most("newton_residual", measured, bound, "cosine problem".into()),
        CheckResult::at_most(
            "newton_residual_control",
            control,
            bound,
            "cosine problem; 0.1 cos added at t = 1/2".into(),
        )
        .control(),
    ])
}

/// `max_t |ρ̂_h(t) − ρ̂(t)|` for the homogeneous supersolution at this `nt`.
fn supersolution_truncation(model: &TransverseModel, nt: usize) -> Result<f64, SolverError> {
    let zero = SpatialField::constant(model, 0.0);
    let rho = solver::solve_supersolution(&zero, &zero, nt, model)?;
    let mut worst: f64 = 0.0;
    for k in 0..=nt {
        let exact = problems::homogeneous_supersolution(model.n(), rho.time(k));
        worst = worst.max(rho.slice(k).values().iter().fold(0.0, |m, v| m.max((v - exact).abs())));
    }
    Ok(worst)
}

fn check_sandwich(model: &TransverseModel, cfg: &SolverConfig, solved: &Solved) -> CheckOutput {
    let (phi0, phi1) = cosine_boundary(model);
    let path = &solved.path;
    let (sub, _) = solver::build_subsolution(&phi0, &phi1, cfg.nt, solved.subsolution_m, model)?;
    let sup = solver::solve_supersolution(&phi0, &phi1, cfg.nt, model)?;
    let tol = 10.0 * supersolution_truncation(model, cfg.nt)?;
    let mut below: f64 = 0.0;
    let mut above: f64 = 0.0;
    let mut control: f64 = 0.0;
    for k in 0..=cfg.nt {
        for s in 0..model.len() {
            let v = path.slice(k).values()[s];
            below = below.max(sub.slice(k).values()[s] - v);
            above = above.max(v - sup.slice(k).values()[s]);
            // Supersolution pulled down by 0.05 in the interior.
            let lowered = sup.slice(k).values()[s] - if k > 0 && k < cfg.nt { 0.05 } else { 0.0 };
            control = control.max(v - lowered);
        }
    }
    let ctx = format!("cosine problem, m = {}; tolerance 10x supersolution truncation", solved.subsolution_m);
    Ok(vec![
        CheckResult::at_most("sandwich_subsolution", below, tol, ctx.clone()),
        CheckResult::at_most("sandwich_supersolution", above, tol, ctx.clone()),
        CheckResult::at_most("sandwich_control", control, tol, format!("{ctx}; supersolution lowered by 0.05"))
            .control(),
    ])
}

/// Largest violation of `(φ(t₁) − φ(0))/dt ≤ φ₁ − φ₀ ≤ (φ(1) − φ(t_{nt−1}))/dt`.
pub fn slope_violation(path: &PotentialPath) -> f64 {
    let nt = path.nt();
    let dt = path.dt();
    let mut worst: f64 = 0.0;
    for s in 0..path.nodes() {
        let v = |k: usize| path.slice(k).values()[s];
        let chord = v(nt) - v(0);
        let forward = (v(1) - v(0)) / dt;
        let backward = (v(nt) - v(nt - 1)) / dt;
        worst = worst.max(forward - chord).max(chord - backward);
    }
    worst
}

fn check_slopes(model: &TransverseModel, cfg: &SolverConfig, path: &PotentialPath) -> CheckOutput {
    let tol = 10.0 * supersolution_truncation(model, cfg.nt)?;
    Ok(vec![CheckResult::at_most("slope_bounds", slope_violation(path), tol, "cosine problem".into())])
}

fn check_uniqueness(model: &TransverseModel, cfg: &SolverConfig, eps: f64) -> CheckOutput {
    let (phi0, phi1) = cosine_boundary(model);
    let cfg = SolverConfig { eps_min: eps, eps_start: cfg.eps_start.max(eps), ..cfg.clone() };
    let f = ones(model);
    let gap = solver::check_uniqueness(&phi0, &phi1, &cfg, model, &f, &[1.0, 4.0])?;
    let (a, _) = solver::solve_geodesic(&phi0, &phi1, &cfg, model, &f)?;
    let (b, _) = solver::solve_geodesic(&phi0, &phi1, &cfg, model, &f.map(|v| 1.01 * v))?;
    let bound = 10.0 * cfg.newton_tol;
    Ok(vec![
        CheckResult::at_most("uniqueness", gap, bound, "cosine problem, subsolution m = 1 and 4".into()),
        CheckResult::at_most(
            "uniqueness_control",
            a.sup_distance(&b),
            bound,
            "cosine problem; f scaled by 1.01".into(),
        )
        .control(),
    ])
}

/// `max_k |Δ²_t 𝓘(φ(t_k)) − target|` over interior slices.
fn i_second_difference_defect(path: &PotentialPath, model: &TransverseModel, target: f64) -> Result<f64, VerifyError> {
    let values: Vec<f64> =
        path.slices().iter().map(|s| functionals::i_functional(s, model)).collect::<Result<_, _>>()?;
    let dt2 = path.dt() * path.dt();
    Ok((1..path.nt())
        .map(|k| ((values[k + 1] - 2.0 * values[k] + values[k - 1]) / dt2 - target).abs())
        .fold(0.0, f64::max))
}

fn check_i_second_difference(
    model: &TransverseModel,
    cfg: &SolverConfig,
    eps: f64,
    path: &PotentialPath,
) -> CheckOutput {
    let f = ones(model);
    let target = eps * model.integrate(f.values());
    let fine = i_second_difference_defect(path, model, target)?;
    let coarse_model = coarse_model(model);
    let coarse_cfg = SolverConfig { nt: (cfg.nt / 2).max(4), ..cfg.clone() };
    let coarse_path = solve_cosine(&coarse_model, &coarse_cfg, eps)?.path;
    let coarse = i_second_difference_defect(&coarse_path, &coarse_model, target)?;
    // Richardson: for a second-order defect, coarse − fine ≈ 3·fine.
    let truncation = (coarse - fine).abs() / 3.0;
    let bound = 5.0 * truncation;
    let control = i_second_difference_defect(path, model, 2.0 * target)?;
    let ctx = format!("cosine problem; truncation {truncation:e} from nt {} vs {}", coarse_cfg.nt, cfg.nt);
    Ok(vec![
        CheckResult::at_most("i_second_difference", fine, bound, ctx.clone()),
        CheckResult::at_most("i_second_difference_control", control, bound, format!("{ctx}; target 2 eps")).control(),
    ])
}

fn max_drift(path: &PotentialPath, model: &TransverseModel) -> Result<f64, FunctionalError> {
    let e = functionals::path_energy(path, model)?;
    Ok(e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max))
}

fn check_energy_drift(model: &TransverseModel, cfg: &SolverConfig) -> CheckOutput {
    let mut out = Vec::new();
    // Homogeneous 0 -> 1: drift is exactly 2|b − a|ε.
    let homogeneous = max_drift(&homogeneous_path(model, cfg.nt, 0.1), model)?;
    out.push(CheckResult::at_most(
        "energy_drift_homogeneous",
        (homogeneous - 0.2).abs(),
        1e-12,
        "homogeneous 0 -> 1, eps 1e-1; exact drift 0.2".into(),
    ));
    let drift = |eps: f64| -> Result<f64, VerifyError> { Ok(max_drift(&solve_cosine(model, cfg, eps)?.path, model)?) };
    let c = drift(0.1)? / 0.1;
    for eps in [0.05, 0.025] {
        out.push(CheckResult::at_most(
            "energy_drift",
            drift(eps)?,
            c * eps,
            format!("cosine problem, eps {eps:e}; C = {c:e} fitted at eps 1e-1"),
        ));
    }
    Ok(out)
}

fn check_k_energy_convexity(model: &TransverseModel, eps: f64, path: &PotentialPath) -> CheckOutput {
    let mu = functionals::k_energy(path, model)?;
    let dt2 = path.dt() * path.dt();
    let min_second = (1..path.nt()).map(|k| (mu[k + 1] - 2.0 * mu[k] + mu[k - 1]) / dt2).fold(f64::INFINITY, f64::min);
    let defect = functionals::k_energy_hessian_check(path, model)?.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    // −(Q, S^T − S̄) = −ε ∫ f (S^T − S̄) dμ_0 is bounded by ε·C, C = max_k ∫ |S^T| dμ_0.
    let mut c: f64 = 0.0;
    for slice in path.slices() {
        let s = geometry::transverse_scalar_curvature(slice, model)?;
        c = c.max(model.integrate(&s.values().iter().map(|v| v.abs()).collect::<Vec<_>>()));
    }
    let bound = -(10.0 * defect + c * eps);
    Ok(vec![CheckResult::at_least(
        "k_energy_convexity",
        min_second,
        bound,
        format!("cosine problem; tolerance 10x Hessian-identity defect {defect:e}, C = {c:e}"),
    )])
}

/// Straight line `t·a cos(2πx₁)`; the Hessian-identity defect at two
/// resolutions (`nt`, grid) and (`2nt`, 2×grid). With `drop_dbar` the `|∂̄V|²`
/// term is left out of the identity.
fn hessian_defects(model: &TransverseModel, nt: usize, drop_dbar: bool) -> Result<(f64, f64), VerifyError> {
    let mut out = [0.0; 2];
    for (level, scale) in [1usize, 2].into_iter().enumerate() {
        let dims: Vec<usize> = model.grid_dims().iter().map(|d| d * scale).collect();
        let m = TransverseModel::flat(model.n(), &dims)?;
        let wavy = problems::cosine(&m, 0.05, 1, 0);
        let path = PotentialPath::from_fn(nt * scale, |t| wavy.map(|v| t * v))?;
        let defects = if drop_dbar {
            let mu = functionals::k_energy(&path, &m)?;
            let sbar = functionals::s_bar(&m)?;
            let dt2 = path.dt() * path.dt();
            let mut d = Vec::new();
            for k in 1..path.nt() {
                let q = functionals::q_field(&path, &m, k)?;
                let s = geometry::transverse_scalar_curvature(path.slice(k), &m)?;
                let u = SpatialField::new(q.values().iter().zip(s.values()).map(|(q, s)| -q * (s - sbar)).collect());
                let rhs = geometry::integral(&u, path.slice(k), &m)?;
                d.push((mu[k + 1] - 2.0 * mu[k] + mu[k - 1]) / dt2 - rhs);
            }
            d
        } else {
            functionals::k_energy_hessian_check(&path, &m)?
        };
        // Compare at the coarse interior times only.
        out[level] =
            defects.iter().enumerate().filter(|(i, _)| (i + 1) % scale == 0).fold(0.0, |a: f64, (_, v)| a.max(v.abs()));
    }
    Ok((out[0], out[1]))
}

fn check_hessian_refinement(model: &TransverseModel, nt: usize) -> CheckOutput {
    let (coarse, fine) = hessian_defects(model, nt, false)?;
    let (c0, c1) = hessian_defects(model, nt, true)?;
    let ctx = context(model, nt, None) + "; line 0 -> 0.05 cos, refined x2 in time and space";
    Ok(vec![
        CheckResult::at_least(
            "k_energy_hessian_refinement",
            coarse / fine,
            3.5,
            format!("{ctx}; defects {coarse:e}, {fine:e}"),
        ),
        CheckResult::at_least(
            "k_energy_hessian_control",
            c0 / c1,
            3.5,
            format!("{ctx}; dbar term dropped; defects {c0:e}, {c1:e}"),
        )
        .control(),
    ])
}

fn check_metric_axioms(model: &TransverseModel, cfg: &SolverConfig) -> CheckOutput {
    let m = coarse_model(model);
    let cfg = SolverConfig { eps_min: 1e-3, ..cfg.clone() };
    let tol = cfg.newton_tol;
    let d = |a: &SpatialField, b: &SpatialField| functionals::distance(a, b, &cfg, &m);
    let ctx = context(&m, cfg.nt, Some(cfg.eps_min));
    let mut out = Vec::new();

    let base = problems::cosine(&m, 0.05, 1, 0);
    let shift = d(&base, &base.map(|v| v + 2.0))?;
    out.push(CheckResult::at_most("metric_constant_shift", (shift - 2.0).abs(), 1e-3, ctx.clone()));
    out.push(
        CheckResult::at_most(
            "metric_constant_shift_control",
            (shift - 2.01).abs(),
            1e-3,
            format!("{ctx}; oracle 2.01"),
        )
        .control(),
    );

    let fields: Vec<SpatialField> = (0..15).map(|seed| problems::random_bandlimited(&m, 1000 + seed, 0.3, 1)).collect();
    let mut symmetry: f64 = 0.0;
    let mut triangle = f64::NEG_INFINITY;
    let mut positivity = f64::INFINITY;
    for triple in fields.chunks(3) {
        let (a, b, c) = (&triple[0], &triple[1], &triple[2]);
        let ab = d(a, b)?;
        let bc = d(b, c)?;
        let ac = d(a, c)?;
        let ba = d(b, a)?;
        symmetry = symmetry.max((ab - ba).abs());
        triangle = triangle.max(ac - ab - bc);
        positivity = positivity.min(ab);
    }
    out.push(CheckResult::at_most("metric_symmetry", symmetry, 2.0 * tol, ctx.clone()));
    out.push(CheckResult::at_most("metric_triangle", triangle, 3.0 * tol, format!("{ctx}; 5 random triples")));
    out.push(CheckResult::at_least(
        "metric_positivity",
        positivity,
        f64::MIN_POSITIVE,
        format!("{ctx}; 5 random pairs"),
    ));
    Ok(out)
}

fn check_c2_trend(model: &TransverseModel, cfg: &SolverConfig) -> CheckOutput {
    let (phi0, phi1) = cosine_boundary(model);
    let f = ones(model);
    let coarse_cfg = SolverConfig { eps_min: 1e-2, ..cfg.clone() };
    let (path, report) = solver::solve_geodesic(&phi0, &phi1, &coarse_cfg, model, &f)?;
    let at_1e2 = report.final_stage().map_or(f64::NAN, |s| s.sup_c2);
    let fine_cfg = SolverConfig { eps_start: 1e-2, eps_min: 1e-3, ..cfg.clone() };
    let (_, report) = solver::solve_geodesic_from(path, report.subsolution_m, &fine_cfg, model, &f)?;
    let at_1e3 = report.final_stage().map_or(f64::NAN, |s| s.sup_c2);
    Ok(vec![CheckResult::at_most(
        "c2_uniform_trend",
        at_1e3 / at_1e2,
        1.1,
        format!("cosine problem; sup(|phi_tt| + |lap phi|) = {at_1e2:e} at eps 1e-2, {at_1e3:e} at eps 1e-3"),
    )])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyProblem {
    /// Constant data `0 → 1`, compared to the closed form.
    Homogeneous,
    /// Cosine data, compared to the finest level.
    Wavy,
}

impl StudyProblem {
    pub fn name(self) -> &'static str {
        match self {
            StudyProblem::Homogeneous => "homogeneous",
            StudyProblem::Wavy => "wavy",
        }
    }
}

/// Errors below this are rounding; a pair of such levels counts as exact.
pub const EXACT_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub problem: StudyProblem,
    pub eps: f64,
    pub levels: Vec<usize>,
    /// Sup error per compared level.
    pub errors: Vec<f64>,
    /// `log₂(e_h / e_{h/2})` per consecutive pair; `None` when both errors
    /// are below [`EXACT_FLOOR`].
    pub orders: Vec<Option<f64>>,
}

impl ConvergenceTable {
    /// Smallest observed order; exact pairs count as infinite order.
    pub fn min_order(&self) -> f64 {
        self.orders.iter().map(|o| o.unwrap_or(f64::INFINITY)).fold(f64::INFINITY, f64::min)
    }
}

/// Time-refinement study at ε = 1e-2 over `levels` (numbers of time steps,
/// each doubling the previous one).
pub fn refinement_study(
    problem: StudyProblem,
    levels: &[usize],
    model: &TransverseModel,
    cfg: &SolverConfig,
) -> Result<ConvergenceTable, VerifyError> {
    if levels.len() < 2 {
        return Err(VerifyError::TooFewLevels(levels.len()));
    }
    if levels.windows(2).any(|w| w[1] != 2 * w[0]) || levels[0] < 2 {
        return Err(VerifyError::InvalidLevels(format!("{levels:?} must double from level to level")));
    }
    let eps = 1e-2;
    let f = ones(model);
    let (phi0, phi1) = match problem {
        StudyProblem::Homogeneous => (SpatialField::constant(model, 0.0), SpatialField::constant(model, 1.0)),
        StudyProblem::Wavy => cosine_boundary(model),
    };
    let mut paths = Vec::with_capacity(levels.len());
    for &nt in levels {
        let c = SolverConfig { nt, eps_min: eps, eps_start: cfg.eps_start.max(eps), ..cfg.clone() };
        paths.push(solver::solve_geodesic(&phi0, &phi1, &c, model, &f)?.0);
    }
    let finest = paths.last().expect("at least two levels");
    let fine_nt = *levels.last().expect("at least two levels");
    let (compared, errors): (Vec<usize>, Vec<f64>) = match problem {
        StudyProblem::Homogeneous => {
            levels.iter().zip(&paths).map(|(&nt, p)| (nt, p.sup_distance(&homogeneous_path(model, nt, eps)))).unzip()
        }
        StudyProblem::Wavy => levels[..levels.len() - 1]
            .iter()
            .zip(&paths)
            .map(|(&nt, p)| {
                let stride = fine_nt / nt;
                let err = (0..=nt).map(|k| p.slice(k).sup_distance(finest.slice(k * stride))).fold(0.0, f64::max);
                (nt, err)
            })
            .unzip(),
    };
    if errors.len() < 2 {
        return Err(VerifyError::InvalidLevels("the wavy study needs at least 3 levels".into()));
    }
    let orders = errors
        .windows(2)
        .map(|w| if w[0] < EXACT_FLOOR && w[1] < EXACT_FLOOR { None } else { Some((w[0] / w[1]).log2()) })
        .collect();
    Ok(ConvergenceTable { problem, eps, levels: compared, errors, orders })
}
