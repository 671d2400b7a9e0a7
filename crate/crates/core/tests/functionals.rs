use sasaki_core::functionals;
use sasaki_core::geometry::{SpatialField, TransverseModel};
use sasaki_core::problems;
use sasaki_core::solver::SolverConfig;
use sasaki_core::PotentialPath;

fn model(d: usize) -> TransverseModel {
    TransverseModel::flat(1, &[d, d]).unwrap()
}

fn k_energy_along(path: &PotentialPath, m: &TransverseModel) -> f64 {
    *functionals::k_energy(path, m).unwrap().last().unwrap()
}

fn line(a: &SpatialField, b: &SpatialField, nt: usize) -> PotentialPath {
    PotentialPath::from_fn(nt, |t| a.combine(1.0 - t, b, t)).unwrap()
}

#[test]
fn k_energy_is_path_independent() {
    let m = model(16);
    let a = problems::cosine(&m, 0.04, 1, 0);
    let b = problems::cosine(&m, 0.03, 1, 1);
    let bump = problems::cosine(&m, 0.02, 1, 1).map(|v| v + 0.1);
    let straight = k_energy_along(&line(&a, &b, 64), &m);
    let bent =
        PotentialPath::from_fn(64, |t| a.combine(1.0 - t, &b, t).combine(1.0, &bump, (std::f64::consts::PI * t).sin()))
            .unwrap();
    let detour = k_energy_along(&bent, &m);
    assert!(straight.abs() > 1e-4, "{straight}");
    assert!((straight - detour).abs() < 1e-5 * straight.abs().max(1.0), "{straight} vs {detour}");
}

#[test]
fn k_energy_is_a_cocycle() {
    let m = model(16);
    let a = problems::cosine(&m, 0.04, 1, 0);
    let b = problems::cosine(&m, 0.03, 1, 1);
    let c = problems::random_bandlimited(&m, 3, 0.3, 1);
    let ab = k_energy_along(&line(&a, &b, 64), &m);
    let bc = k_energy_along(&line(&b, &c, 64), &m);
    let ac = k_energy_along(&line(&a, &c, 64), &m);
    assert!((ab + bc - ac).abs() < 1e-5, "{ab} + {bc} vs {ac}");
    let ba = k_energy_along(&line(&b, &a, 64), &m);
    assert!((ab + ba).abs() < 1e-12);
}

#[test]
fn k_energy_ignores_constant_shifts() {
    let m = model(16);
    let a = problems::cosine(&m, 0.04, 1, 0);
    let shifted = line(&a, &a.map(|v| v + 3.0), 16);
    assert!(k_energy_along(&shifted, &m).abs() < 1e-12);
}

#[test]
fn i_functional_shifts_by_constants() {
    let m = model(16);
    let phi = problems::random_bandlimited(&m, 11, 0.4, 2);
    let base = functionals::i_functional(&phi, &m).unwrap();
    let c = 1e-3;
    let shifted = functionals::i_functional(&phi.map(|v| v + c), &m).unwrap();
    assert!((shifted - base - c).abs() < 1e-12);
    assert!((functionals::i_functional(&SpatialField::constant(&m, 0.7), &m).unwrap() - 0.7).abs() < 1e-14);
}

#[test]
fn constant_shift_distance_is_the_shift() {
    let m = model(8);
    let cfg = SolverConfig { nt: 16, eps_min: 1e-3, ..SolverConfig::default() };
    for (phi, c) in [(SpatialField::constant(&m, 0.0), 1.5), (problems::cosine(&m, 0.05, 1, 0), -0.8)] {
        let d = functionals::distance(&phi, &phi.map(|v| v + c), &cfg, &m).unwrap();
        assert!((d - c.abs()).abs() < 1e-4, "{d} vs {c}");
    }
}

#[test]
fn straight_line_energy_is_the_shift_squared() {
    let m = model(8);
    let a = problems::cosine(&m, 0.05, 1, 0);
    let path = line(&a, &a.map(|v| v + 0.6), 8);
    for e in functionals::path_energy(&path, &m).unwrap() {
        assert!((e - 0.36).abs() < 1e-12);
    }
    assert!((functionals::geodesic_length(&path, &m).unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn diagnostics_csv_has_one_row_per_slice() {
    let m = model(4);
    let path = line(&SpatialField::constant(&m, 0.0), &SpatialField::constant(&m, 1.0), 8);
    let diag = functionals::path_diagnostics(&path, &m).unwrap();
    let csv = diag.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], functionals::PathDiagnostics::CSV_HEADER);
    assert_eq!(lines.len(), 10);
    assert!((diag.slices[4].i - 0.5).abs() < 1e-15);
}
