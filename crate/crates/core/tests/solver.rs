use sasaki_core::geometry::{self, SpatialField, TransverseModel};
use sasaki_core::problems;
use sasaki_core::solver::{self, SolverConfig, SolverError};
use sasaki_core::PotentialPath;

fn model(d: usize) -> TransverseModel {
    TransverseModel::flat(1, &[d, d]).unwrap()
}

fn cfg(nt: usize, eps_min: f64) -> SolverConfig {
    SolverConfig { nt, eps_min, ..SolverConfig::default() }
}

#[test]
fn constant_data_reproduce_the_closed_form() {
    let m = model(8);
    let one = SpatialField::constant(&m, 1.0);
    for (a, b) in [(0.0, 1.0), (0.3, -0.7)] {
        let (path, report) = solver::solve_geodesic(
            &SpatialField::constant(&m, a),
            &SpatialField::constant(&m, b),
            &cfg(32, 0.1),
            &m,
            &one,
        )
        .unwrap();
        assert!(report.converged);
        for k in 0..=32 {
            let exact = problems::homogeneous_solution(a, b, 0.1, path.time(k));
            assert!(path.slice(k).sup_distance(&SpatialField::constant(&m, exact)) < 1e-8);
        }
        assert!(report.stages.iter().all(|s| s.iterations <= 12), "{:?}", report.stages);
    }
}

#[test]
fn shifted_endpoint_approaches_the_straight_line() {
    let m = model(16);
    let phi0 = problems::cosine(&m, 0.05, 1, 0);
    let phi1 = phi0.map(|v| v + 0.5);
    let rho = geometry::measure_density(&phi0, &m).unwrap();
    // Freezing the metric at φ₀ gives φ_tt ≈ ε/ρ₀, so the gap to the
    // ε-corrected line is at most about (ε/8)·max|1/ρ₀ − 1|.
    let spread = rho.values().iter().map(|r| (1.0 / r - 1.0).abs()).fold(0.0, f64::max);
    let mut gaps = Vec::new();
    for eps in [0.04, 0.01] {
        let (path, _) =
            solver::solve_geodesic(&phi0, &phi1, &cfg(32, eps), &m, &SpatialField::constant(&m, 1.0)).unwrap();
        let gap = (0..=32)
            .map(|k| {
                let line = phi0.map(|v| v + problems::homogeneous_solution(0.0, 0.5, eps, path.time(k)));
                path.slice(k).sup_distance(&line)
            })
            .fold(0.0, f64::max);
        assert!(gap <= 1.1 * eps * spread / 8.0, "eps {eps}: gap {gap}");
        gaps.push(gap);
    }
    assert!(gaps[0] / gaps[1] > 3.5, "{gaps:?}");
}

#[test]
fn homogeneous_regularization_is_monotone() {
    let m = model(4);
    let one = SpatialField::constant(&m, 1.0);
    let solve =
        |eps| solver::solve_geodesic(&SpatialField::constant(&m, 0.0), &one, &cfg(32, eps), &m, &one).unwrap().0;
    let (a, b) = (solve(0.2), solve(0.05));
    assert!((a.sup_distance(&b) - 0.15 / 8.0).abs() < 1e-9);
    for k in 0..=32 {
        assert!(a.slice(k).max() <= b.slice(k).min() + 1e-12);
    }
}

#[test]
fn wavy_solution_is_independent_of_the_starting_subsolution() {
    let m = model(16);
    let phi0 = problems::cosine(&m, 0.05, 1, 0);
    let phi1 = problems::cosine(&m, 0.04, 1, 1).map(|v| v + 0.2);
    let c = cfg(16, 1e-2);
    let gap =
        solver::check_uniqueness(&phi0, &phi1, &c, &m, &SpatialField::constant(&m, 1.0), &[1.0, 2.0, 8.0]).unwrap();
    assert!(gap <= 10.0 * c.newton_tol, "gap {gap}");
}

#[test]
fn subsolution_has_positive_matrix_and_matches_boundary() {
    let m = model(8);
    let phi0 = problems::cosine(&m, 0.08, 1, 0);
    let phi1 = problems::cosine(&m, 0.08, 1, 1);
    let (path, m_used) = solver::build_subsolution(&phi0, &phi1, 16, 0.01, &m).unwrap();
    assert!(m_used >= 0.01);
    assert_eq!(path.start(), &phi0);
    assert_eq!(path.end(), &phi1);
}

#[test]
fn inadmissible_boundary_is_rejected() {
    let m = model(16);
    let bad = problems::cosine(&m, 0.2, 1, 0);
    let good = SpatialField::constant(&m, 0.0);
    let err = solver::solve_geodesic(&bad, &good, &cfg(8, 0.1), &m, &SpatialField::constant(&m, 1.0)).unwrap_err();
    assert!(matches!(err, SolverError::BoundaryNotAdmissible { .. }), "{err}");
}

#[test]
fn invalid_configs_are_rejected() {
    for c in [
        SolverConfig { nt: 1, ..SolverConfig::default() },
        SolverConfig { eps_min: 0.0, ..SolverConfig::default() },
        SolverConfig { eps_factor: 1.0, ..SolverConfig::default() },
        SolverConfig { eps_min: 2.0, ..SolverConfig::default() },
    ] {
        assert!(matches!(c.validate(), Err(SolverError::InvalidConfig(_))), "{c:?}");
    }
}

#[test]
fn newton_from_the_exact_solution_takes_no_step() {
    let m = model(8);
    let path =
        PotentialPath::from_fn(16, |t| SpatialField::constant(&m, problems::homogeneous_solution(0.0, 1.0, 0.2, t)))
            .unwrap();
    let (out, _, residual) =
        solver::newton_solve(&path, &m, 0.2, &SpatialField::constant(&m, 1.0), &cfg(16, 0.2)).unwrap();
    assert!(residual < 1e-9);
    assert!(out.sup_distance(&path) < 1e-12);
}
