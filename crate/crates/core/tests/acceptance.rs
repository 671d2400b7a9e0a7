//! Acceptance criteria, one line per criterion. Run with
//! `cargo test -p sasaki-core --test acceptance`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sasaki_core::cone::{self, HermitianNode, PotentialPath};
use sasaki_core::functionals;
use sasaki_core::geometry::{self, SpatialField, TransverseModel};
use sasaki_core::herm;
use sasaki_core::problems;
use sasaki_core::solver::{self, SolverConfig};
use sasaki_core::verify::{self, Level};
use sasaki_core::C64;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Result<Outcome, String> {
    Ok(Outcome { ok, detail })
}

fn flat(dims: &[usize]) -> TransverseModel {
    TransverseModel::flat(dims.len() / 2, dims).unwrap()
}

fn ones(m: &TransverseModel) -> SpatialField {
    SpatialField::constant(m, 1.0)
}

fn homogeneous(m: &TransverseModel, nt: usize, eps: f64) -> PotentialPath {
    PotentialPath::from_fn(nt, |t| SpatialField::constant(m, problems::homogeneous_solution(0.0, 1.0, eps, t))).unwrap()
}

fn cosine_pair(m: &TransverseModel) -> (SpatialField, SpatialField) {
    (SpatialField::constant(m, 0.0), problems::cosine(m, 0.05, 1, 0))
}

fn cfg(nt: usize, eps_min: f64) -> SolverConfig {
    SolverConfig { nt, eps_min, ..SolverConfig::default() }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn closed_form() -> Result<Outcome, String> {
    let m = flat(&[8, 8]);
    let (path, _) = solver::solve_geodesic(&SpatialField::constant(&m, 0.0), &ones(&m), &cfg(32, 0.1), &m, &ones(&m))
        .map_err(err)?;
    let mut worst: f64 = 0.0;
    for k in 0..=32 {
        let t = path.time(k);
        let exact = t + 0.05 * t * (t - 1.0);
        worst = path.slice(k).values().iter().fold(worst, |w, v| w.max((v - exact).abs()));
    }
    outcome(worst <= 1e-8, format!("max error {worst:.3e} (limit 1e-8)"))
}

fn determinant_identity() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for n in [1usize, 2] {
        for _ in 0..10_000 {
            let b = nalgebra::DMatrix::<C64>::from_fn(n + 1, n + 1, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let a = herm::hermitian_part(
                &(&b * b.adjoint() + nalgebra::DMatrix::<C64>::identity(n + 1, n + 1).scale(0.05)),
            );
            let node = HermitianNode::from_matrix(a);
            if !node.is_positive() {
                return Err("random node is not positive".into());
            }
            worst = worst.max((node.det_block() - node.det_direct()).abs() / node.det_direct().abs());
        }
    }
    outcome(worst <= 1e-12, format!("max relative gap {worst:.3e} over 2x10^4 nodes (limit 1e-12)"))
}

fn cone_equivalence() -> Result<Outcome, String> {
    let m = flat(&[8, 8]);
    let eps = 0.1;
    let at = |nt| cone::cone_identity_check(&homogeneous(&m, nt, eps), &m, eps, &ones(&m)).map_err(err);
    let coarse = at(32)?.identity_discrepancy;
    let fine = at(64)?.identity_discrepancy;
    let ratio = coarse / fine;
    outcome(
        fine <= 1e-3 && ratio >= 3.5,
        format!("discrepancy {fine:.3e} at nt 64 (limit 1e-3), ratio {ratio:.2} from nt 32 (limit 3.5)"),
    )
}

fn supersolution_truncation(m: &TransverseModel, nt: usize) -> Result<f64, String> {
    let zero = SpatialField::constant(m, 0.0);
    let rho = solver::solve_supersolution(&zero, &zero, nt, m).map_err(err)?;
    Ok((0..=nt)
        .map(|k| {
            let exact = problems::homogeneous_supersolution(1, rho.time(k));
            rho.slice(k).values().iter().fold(0.0, |w: f64, v| w.max((v - exact).abs()))
        })
        .fold(0.0, f64::max))
}

fn sandwich_and_slopes() -> Result<Outcome, String> {
    let m = flat(&[16, 16]);
    let nt = 32;
    let eps = 1e-2;
    let tol = 10.0 * supersolution_truncation(&m, nt)?;
    let mut details = Vec::new();
    let mut ok = true;
    let problems_list =
        [("homogeneous", SpatialField::constant(&m, 0.0), ones(&m)), ("cosine", cosine_pair(&m).0, cosine_pair(&m).1)];
    for (name, phi0, phi1) in problems_list {
        let (path, report) = solver::solve_geodesic(&phi0, &phi1, &cfg(nt, eps), &m, &ones(&m)).map_err(err)?;
        let (sub, _) = solver::build_subsolution(&phi0, &phi1, nt, report.subsolution_m, &m).map_err(err)?;
        let sup = solver::solve_supersolution(&phi0, &phi1, nt, &m).map_err(err)?;
        let mut violation: f64 = 0.0;
        for k in 0..=nt {
            for s in 0..m.len() {
                let v = path.slice(k).values()[s];
                violation = violation.max(sub.slice(k).values()[s] - v).max(v - sup.slice(k).values()[s]);
            }
        }
        let slope = verify::slope_violation(&path);
        ok &= violation <= tol && slope <= tol;
        details.push(format!("{name}: sandwich {violation:.1e}, slope {slope:.1e}"));
    }
    outcome(ok, format!("{} (tolerance {tol:.2e})", details.join("; ")))
}

fn c2_trend() -> Result<Outcome, String> {
    let m = flat(&[16, 16]);
    let (phi0, phi1) = cosine_pair(&m);
    let (path, report) = solver::solve_geodesic(&phi0, &phi1, &cfg(32, 1e-2), &m, &ones(&m)).map_err(err)?;
    let coarse = report.final_stage().unwrap().sup_c2;
    let fine_cfg = SolverConfig { eps_start: 1e-2, ..cfg(32, 1e-3) };
    let (_, report) = solver::solve_geodesic_from(path, report.subsolution_m, &fine_cfg, &m, &ones(&m)).map_err(err)?;
    let fine = report.final_stage().unwrap().sup_c2;
    let growth = fine / coarse - 1.0;
    outcome(
        growth < 0.1,
        format!("C2 sup {coarse:.4} at eps 1e-2, {fine:.4} at eps 1e-3, growth {:.2}% (limit 10%)", 100.0 * growth),
    )
}

fn drift(path: &PotentialPath, m: &TransverseModel) -> Result<f64, String> {
    let e = functionals::path_energy(path, m).map_err(err)?;
    Ok(e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max))
}

fn energy_drift() -> Result<Outcome, String> {
    let m = flat(&[16, 16]);
    let nt = 32;
    let (phi0, phi1) = cosine_pair(&m);
    let solved_drift = |eps: f64| -> Result<f64, String> {
        let (p, _) = solver::solve_geodesic(&phi0, &phi1, &cfg(nt, eps), &m, &ones(&m)).map_err(err)?;
        drift(&p, &m)
    };
    let c = solved_drift(0.1)? / 0.1;
    let d1 = solved_drift(0.05)?;
    let d2 = solved_drift(0.025)?;
    let mut ok = d1 <= c * 0.05 && d2 <= c * 0.025;
    // Homogeneous 0 -> 1: drift is 2|b − a|ε.
    let hm = flat(&[8, 8]);
    let mut homogeneous_gap: f64 = 0.0;
    for eps in [0.1, 0.05, 0.025] {
        let (p, _) =
            solver::solve_geodesic(&SpatialField::constant(&hm, 0.0), &ones(&hm), &cfg(nt, eps), &hm, &ones(&hm))
                .map_err(err)?;
        homogeneous_gap = homogeneous_gap.max((drift(&p, &hm)? - 2.0 * eps).abs());
    }
    ok &= homogeneous_gap <= 1e-8;
    outcome(
        ok,
        format!(
            "C = {c:.3e}; drift {d1:.3e} <= {:.3e} at 0.05, {d2:.3e} <= {:.3e} at 0.025; homogeneous gap to 2 eps {homogeneous_gap:.1e}",
            c * 0.05,
            c * 0.025
        ),
    )
}

fn i_defect(path: &PotentialPath, m: &TransverseModel, target: f64) -> Result<f64, String> {
    let i: Vec<f64> =
        path.slices().iter().map(|s| functionals::i_functional(s, m)).collect::<Result<_, _>>().map_err(err)?;
    let dt2 = path.dt() * path.dt();
    Ok((1..path.nt()).map(|k| ((i[k + 1] - 2.0 * i[k] + i[k - 1]) / dt2 - target).abs()).fold(0.0, f64::max))
}

fn i_second_difference() -> Result<Outcome, String> {
    let eps = 1e-2;
    let fine_m = flat(&[16, 16]);
    let coarse_m = flat(&[8, 8]);
    let solve = |m: &TransverseModel, nt| {
        let (phi0, phi1) = cosine_pair(m);
        solver::solve_geodesic(&phi0, &phi1, &cfg(nt, eps), m, &ones(m)).map(|r| r.0).map_err(err)
    };
    let fine = i_defect(&solve(&fine_m, 32)?, &fine_m, eps)?;
    let coarse = i_defect(&solve(&coarse_m, 16)?, &coarse_m, eps)?;
    let truncation = (coarse - fine).abs() / 3.0;
    outcome(
        fine <= 5.0 * truncation,
        format!("max slice defect {fine:.3e}, 5x truncation {:.3e} (Richardson from nt 16 / 8^2)", 5.0 * truncation),
    )
}

fn k_energy() -> Result<Outcome, String> {
    let eps = 1e-2;
    let m = flat(&[16, 16]);
    let (phi0, phi1) = cosine_pair(&m);
    let (path, _) = solver::solve_geodesic(&phi0, &phi1, &cfg(32, eps), &m, &ones(&m)).map_err(err)?;
    let mu = functionals::k_energy(&path, &m).map_err(err)?;
    let dt2 = path.dt() * path.dt();
    let min_second = (1..path.nt()).map(|k| (mu[k + 1] - 2.0 * mu[k] + mu[k - 1]) / dt2).fold(f64::INFINITY, f64::min);
    let defect =
        functionals::k_energy_hessian_check(&path, &m).map_err(err)?.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    let mut c: f64 = 0.0;
    for s in path.slices() {
        let st = geometry::transverse_scalar_curvature(s, &m).map_err(err)?;
        c = c.max(m.integrate(&st.values().iter().map(|v| v.abs()).collect::<Vec<_>>()));
    }
    let floor = -(10.0 * defect + c * eps);

    // Identity defect along the line t·0.05 cos at (nt, 16²) and (2nt, 32²).
    let line_defect = |nt: usize, d: usize| -> Result<f64, String> {
        let lm = flat(&[d, d]);
        let w = problems::cosine(&lm, 0.05, 1, 0);
        let line = PotentialPath::from_fn(nt, |t| w.map(|v| t * v)).map_err(err)?;
        let stride = nt / 16;
        let defects = functionals::k_energy_hessian_check(&line, &lm).map_err(err)?;
        Ok(defects.iter().enumerate().filter(|(i, _)| (i + 1) % stride == 0).fold(0.0, |a: f64, (_, v)| a.max(v.abs())))
    };
    let ratio = line_defect(16, 16)? / line_defect(32, 32)?;
    outcome(
        min_second >= floor && ratio >= 3.5,
        format!(
            "min second difference of mu {min_second:.3e} >= {floor:.3e}; identity defect ratio {ratio:.2} (limit 3.5)"
        ),
    )
}

fn metric_axioms() -> Result<Outcome, String> {
    let m = flat(&[8, 8]);
    let c = cfg(16, 1e-3);
    let tol = c.newton_tol;
    let d = |a: &SpatialField, b: &SpatialField| functionals::distance(a, b, &c, &m).map_err(err);
    let base = problems::cosine(&m, 0.05, 1, 0);
    let shift = d(&base, &base.map(|v| v + 2.0))?;
    let fields: Vec<SpatialField> = (0..15).map(|s| problems::random_bandlimited(&m, 500 + s, 0.3, 1)).collect();
    let mut symmetry: f64 = 0.0;
    let mut triangle = f64::NEG_INFINITY;
    for t in fields.chunks(3) {
        let ab = d(&t[0], &t[1])?;
        symmetry = symmetry.max((ab - d(&t[1], &t[0])?).abs());
        triangle = triangle.max(d(&t[0], &t[2])? - ab - d(&t[1], &t[2])?);
    }
    let mut positivity = f64::INFINITY;
    for a in [0.02, 0.04, 0.06, 0.08, 0.09] {
        let wavy = problems::cosine(&m, a, 1, 1);
        positivity = positivity.min(d(&base, &wavy)?);
    }
    let ok = (shift - 2.0).abs() <= 1e-3 && symmetry <= 2.0 * tol && triangle <= 3.0 * tol && positivity > 0.0;
    outcome(
        ok,
        format!(
            "d(phi, phi+2) = {shift:.6}; symmetry gap {symmetry:.1e}; worst triangle slack {triangle:.3e}; min distance {positivity:.3e}"
        ),
    )
}

fn uniqueness() -> Result<Outcome, String> {
    let m = flat(&[16, 16]);
    let (phi0, phi1) = cosine_pair(&m);
    let c = cfg(32, 1e-2);
    let gap = solver::check_uniqueness(&phi0, &phi1, &c, &m, &ones(&m), &[1.0, 4.0]).map_err(err)?;
    outcome(
        gap <= 10.0 * c.newton_tol,
        format!("sup gap {gap:.2e} between m = 1 and m = 4 (limit {:.0e})", 10.0 * c.newton_tol),
    )
}

fn quick_suite() -> Result<Outcome, String> {
    let (m, c) = verify::quick_setup();
    let report = verify::run_suite(Level::Quick, &m, &c);
    let controls = report.checks.iter().filter(|c| c.negative_control).count();
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    let controls_caught =
        report.checks.iter().filter(|c| c.negative_control).all(|c| !c.relation.holds(c.measured, c.bound));
    outcome(
        report.passed && failed.is_empty() && controls_caught && controls > 0,
        format!("{} results, {controls} negative controls, failing: {failed:?}", report.checks.len()),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome, String>, Duration);

fn main() -> ExitCode {
    // The crate's harness passes its own flags; only `--list` needs an answer.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [Criterion; 11] = [
        ("closed-form regularized geodesic", closed_form, Duration::from_secs(1)),
        ("determinant identity", determinant_identity, Duration::from_secs(1)),
        ("cone/time equivalence", cone_equivalence, Duration::from_secs(10)),
        ("sandwich and slope bounds", sandwich_and_slopes, Duration::from_secs(30)),
        ("eps-uniform C2 trend", c2_trend, Duration::from_secs(120)),
        ("energy drift", energy_drift, Duration::from_secs(60)),
        ("second difference of I equals eps", i_second_difference, Duration::from_secs(30)),
        ("K-energy convexity and Hessian identity", k_energy, Duration::from_secs(120)),
        ("metric axioms", metric_axioms, Duration::from_secs(300)),
        ("uniqueness", uniqueness, Duration::from_secs(60)),
        ("verify quick suite", quick_suite, Duration::from_secs(60)),
    ];
    let mut all_ok = true;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(o) => (o.ok && elapsed < *limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all_ok &= ok;
        println!(
            "[{}] {:>2} {name}: {detail}; {:.2}s (limit {}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
