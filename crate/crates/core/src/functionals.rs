//! Functionals on potentials and along paths: 𝓘, S̄, the K-energy μ and its
//! second variation, the covariant derivative, `|∂̄_B V|²`, path energy,
//! length and distance.
//!
//! Time derivatives use the solver's central stencils at interior slices and
//! second-order one-sided stencils at the two ends.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{Assembler, ConeError, PotentialPath};
use crate::geometry::{self, GeometryError, SpatialField, TransverseModel};
use crate::herm::{self, HermitianMatrix};
use crate::solver::{self, SolverConfig, SolverError};
use crate::stencil::Stencil;
use crate::C64;

#[derive(Debug, Error, Clone)]
pub enum FunctionalError {
    #[error("slice {k} is not admissible")]
    InadmissibleSlice { k: usize },
    #[error("time index {k} is not interior")]
    NotInterior { k: usize },
    #[error("path needs at least {need} intervals, got {got}")]
    TooShort { need: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn slice_metrics(
    path: &PotentialPath,
    model: &TransverseModel,
    k: usize,
) -> Result<Vec<(HermitianMatrix, HermitianMatrix)>, FunctionalError> {
    geometry::inverse_metrics(path.slice(k), model).map_err(|e| match e {
        GeometryError::NotAdmissible { .. } => FunctionalError::InadmissibleSlice { k },
        other => other.into(),
    })
}

/// `∂_t φ` at slice `k`: central inside, one-sided second order at the ends.
pub fn velocity(path: &PotentialPath, k: usize) -> SpatialField {
    let nt = path.nt();
    let dt = path.dt();
    let s = |j: usize| path.slice(j).values();
    let values: Vec<f64> = if nt < 2 {
        let w = 1.0 / dt;
        s(1).iter().zip(s(0)).map(|(a, b)| w * (a - b)).collect()
    } else if k == 0 {
        (0..path.nodes()).map(|i| (-3.0 * s(0)[i] + 4.0 * s(1)[i] - s(2)[i]) / (2.0 * dt)).collect()
    } else if k == nt {
        (0..path.nodes()).map(|i| (3.0 * s(nt)[i] - 4.0 * s(nt - 1)[i] + s(nt - 2)[i]) / (2.0 * dt)).collect()
    } else {
        (0..path.nodes()).map(|i| (s(k + 1)[i] - s(k - 1)[i]) / (2.0 * dt)).collect()
    };
    SpatialField::new(values)
}

/// `φ̇` at every slice, as a field along the same time grid.
pub fn velocity_path(path: &PotentialPath) -> PotentialPath {
    let slices = (0..=path.nt()).map(|k| velocity(path, k)).collect();
    PotentialPath::new(slices).expect("velocity slices share the path's grid")
}

/// `∂_t² φ` at slice `k`: three-point inside, `(2, −5, 4, −1)/dt²` at the ends.
pub fn acceleration(path: &PotentialPath, k: usize) -> SpatialField {
    let nt = path.nt();
    let dt2 = path.dt() * path.dt();
    let s = |j: usize| path.slice(j).values();
    let (taps, w): (Vec<usize>, &[f64]) = if k > 0 && k < nt {
        (vec![k - 1, k, k + 1], &[1.0, -2.0, 1.0])
    } else if nt < 3 {
        (vec![0, 1, 2], &[1.0, -2.0, 1.0])
    } else if k == 0 {
        (vec![0, 1, 2, 3], &[2.0, -5.0, 4.0, -1.0])
    } else {
        (vec![nt, nt - 1, nt - 2, nt - 3], &[2.0, -5.0, 4.0, -1.0])
    };
    let values = (0..path.nodes()).map(|i| taps.iter().zip(w).map(|(&j, w)| w * s(j)[i]).sum::<f64>() / dt2).collect();
    SpatialField::new(values)
}

/// `𝓘(φ) = Σ_p C(n,p)/(p+1) ∫ φ e_p dμ_0`, with `e_p` the normalized mixed
/// density of `(dη)^{n−p} ∧ (i∂∂̄φ)^p` against `(dη)^n`, i.e.
/// `C(n,p)·e_p = σ_p(½ h^{−1} φ_{ij̄})`. Then `d𝓘/dt = ∫ φ̇ dμ_φ`.
pub fn i_functional(phi: &SpatialField, model: &TransverseModel) -> Result<f64, GeometryError> {
    model.check(phi)?;
    let n = model.n();
    let density: Vec<f64> = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let p = model.h_inv(s) * model.hessian_at(phi.values(), s).scale(0.5);
            let sigma = herm::elementary_symmetric(&p);
            let mixed: f64 = (0..=n).map(|p| sigma[p] / (p + 1) as f64).sum();
            phi.values()[s] * mixed
        })
        .collect();
    Ok(model.integrate(&density))
}

/// `S̄ = ∫ S^T dμ / ∫ dμ` at `φ = 0`.
pub fn s_bar(model: &TransverseModel) -> Result<f64, GeometryError> {
    s_bar_at(&SpatialField::constant(model, 0.0), model)
}

/// The same average evaluated at an admissible `φ`; a class invariant.
pub fn s_bar_at(phi: &SpatialField, model: &TransverseModel) -> Result<f64, GeometryError> {
    let s = geometry::transverse_scalar_curvature(phi, model)?;
    let rho = geometry::measure_density(phi, model)?;
    let num = model.integrate(&s.values().iter().zip(rho.values()).map(|(a, b)| a * b).collect::<Vec<_>>());
    Ok(num / model.integrate(rho.values()))
}

/// Integrand of the K-energy along a path: `−(φ̇, S^T − S̄)_φ` per slice.
fn k_energy_rate(path: &PotentialPath, model: &TransverseModel, sbar: f64) -> Result<Vec<f64>, FunctionalError> {
    (0..=path.nt())
        .map(|k| {
            let phi = path.slice(k);
            let curvature = geometry::transverse_scalar_curvature(phi, model).map_err(|e| match e {
                GeometryError::NotAdmissible { .. } => FunctionalError::InadmissibleSlice { k },
                other => other.into(),
            })?;
            let v = velocity(path, k);
            let u = SpatialField::new(v.values().iter().zip(curvature.values()).map(|(a, s)| a * (s - sbar)).collect());
            Ok(-geometry::integral(&u, phi, model)?)
        })
        .collect()
}

/// `μ(φ(t_k))` by trapezoidal integration of `dμ/dt = −(φ̇, S^T − S̄)_φ`,
/// normalized by `μ(t_0) = 0`.
pub fn k_energy(path: &PotentialPath, model: &TransverseModel) -> Result<Vec<f64>, FunctionalError> {
    path.check_model(model)?;
    let rate = k_energy_rate(path, model, s_bar(model)?)?;
    let dt = path.dt();
    let mut mu = Vec::with_capacity(rate.len());
    mu.push(0.0);
    for k in 1..rate.len() {
        mu.push(mu[k - 1] + 0.5 * dt * (rate[k - 1] + rate[k]));
    }
    Ok(mu)
}

/// `D_{φ̇}ψ = ψ_t − ¼⟨d_B ψ, d_B φ̇⟩_φ` at interior slice `k`, for a field
/// `psi` given along the same time grid.
pub fn cov_derivative(
    psi: &PotentialPath,
    path: &PotentialPath,
    model: &TransverseModel,
    k: usize,
) -> Result<SpatialField, FunctionalError> {
    path.check_model(model)?;
    psi.check_model(model)?;
    if k == 0 || k >= path.nt() {
        return Err(FunctionalError::NotInterior { k });
    }
    if psi.nt() != path.nt() {
        return Err(ConeError::InvalidPath("field and path use different time grids".into()).into());
    }
    let psi_t = velocity(psi, k);
    let phi_t = velocity(path, k);
    let metrics = slice_metrics(path, model, k)?;
    let values = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let da = model.dz_at(psi.slice(k).values(), s);
            let db = model.dz_at(phi_t.values(), s);
            let pairing = 2.0 * herm::sesquilinear(&metrics[s].1, &da, &db).re;
            psi_t.values()[s] - 0.25 * pairing
        })
        .collect();
    Ok(SpatialField::new(values))
}

/// Geodesic defect `Q = φ_tt − ¼|d_B φ̇|²_φ` at every slice, from the same
/// stencils as the solver inside (`Q = 2·Schur(A)`), one-sided at the ends.
pub fn q_field(path: &PotentialPath, model: &TransverseModel, k: usize) -> Result<SpatialField, FunctionalError> {
    path.check_model(model)?;
    if k > 0 && k < path.nt() {
        let asm = Assembler::new(model, path.nt());
        slice_metrics(path, model, k)?;
        let values = asm.slice(path, k).iter().map(|node| 2.0 * node.schur).collect();
        return Ok(SpatialField::new(values));
    }
    let metrics = slice_metrics(path, model, k)?;
    let v = velocity(path, k);
    let a = acceleration(path, k);
    let grad = geometry::gradient_norm_sq_with(v.values(), &metrics, model);
    Ok(SpatialField::new(a.values().iter().zip(&grad).map(|(a, g)| a - 0.25 * g).collect()))
}

/// `T^i_{k̄} = ∂_{k̄}((h_φ)^{ij̄} ψ_{j̄})` at every node.
pub fn dbar_v_tensor(
    psi: &SpatialField,
    phi: &SpatialField,
    model: &TransverseModel,
) -> Result<Vec<HermitianMatrix>, GeometryError> {
    model.check(psi)?;
    let metrics = geometry::inverse_metrics(phi, model)?;
    let n = model.n();
    let grid = model.grid();
    let st = model.stencils();
    // V^i = Σ_j (h_φ)^{ij̄} ψ_{j̄}, stored per component.
    let field: Vec<Vec<C64>> = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let dzbar: Vec<C64> = st.dzbar.iter().map(|d| d.apply_real(grid, s, psi.values())).collect();
            (0..n).map(|i| (0..n).map(|j| metrics[s].1[(j, i)] * dzbar[j]).sum()).collect()
        })
        .collect();
    Ok((0..model.len())
        .into_par_iter()
        .map(|s| HermitianMatrix::from_fn(n, n, |i, k| apply_complex(&st.dzbar[k], grid, s, |node| field[node][i])))
        .collect())
}

fn apply_complex(st: &Stencil, grid: &geometry::Grid, node: usize, value: impl Fn(usize) -> C64) -> C64 {
    st.apply(grid, node, |_, s| value(s))
}

/// `|∂̄_B V_{η_φ}(ψ)|²_{g_φ} = tr(h̄_φ · T · h_φ^{−1} · T^H)`: the `i` index
/// lowered with `h_φ`, the `k̄` index raised with `h_φ^{−1}`. This constant
/// makes the K-energy second-variation identity hold.
pub fn dbar_v_norm_sq(
    psi: &SpatialField,
    phi: &SpatialField,
    model: &TransverseModel,
) -> Result<SpatialField, GeometryError> {
    let t = dbar_v_tensor(psi, phi, model)?;
    let metrics = geometry::inverse_metrics(phi, model)?;
    let values = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let (h, hinv) = &metrics[s];
            (h.conjugate() * &t[s] * hinv * t[s].adjoint()).trace().re
        })
        .collect();
    Ok(SpatialField::new(values))
}

/// Per interior slice: the second difference of μ minus
/// `−(D_{φ̇}φ̇, S^T − S̄)_φ + ∫ ½|∂̄_B V(φ̇)|² dμ_φ`.
pub fn k_energy_hessian_check(path: &PotentialPath, model: &TransverseModel) -> Result<Vec<f64>, FunctionalError> {
    path.check_model(model)?;
    let mu = k_energy(path, model)?;
    let sbar = s_bar(model)?;
    let dt = path.dt();
    let mut out = Vec::with_capacity(path.nt().saturating_sub(1));
    for k in 1..path.nt() {
        let lhs = (mu[k + 1] - 2.0 * mu[k] + mu[k - 1]) / (dt * dt);
        out.push(lhs - k_energy_second_variation(path, model, k, sbar)?);
    }
    Ok(out)
}

/// `−(D_{φ̇}φ̇, S^T − S̄)_φ + ∫ ½|∂̄_B V(φ̇)|² dμ_φ` at interior slice `k`,
/// with `D_{φ̇}φ̇ = Q` taken from the solver's stencils.
pub fn k_energy_second_variation(
    path: &PotentialPath,
    model: &TransverseModel,
    k: usize,
    sbar: f64,
) -> Result<f64, FunctionalError> {
    let phi = path.slice(k);
    let v = velocity(path, k);
    let dd = q_field(path, model, k)?;
    let curvature = geometry::transverse_scalar_curvature(phi, model)?;
    let dbar = dbar_v_norm_sq(&v, phi, model)?;
    let u = SpatialField::new(
        (0..model.len()).map(|s| -dd.values()[s] * (curvature.values()[s] - sbar) + 0.5 * dbar.values()[s]).collect(),
    );
    Ok(geometry::integral(&u, phi, model)?)
}

/// `E(t_k) = ∫ φ̇² dμ_{φ(t_k)}`.
pub fn path_energy(path: &PotentialPath, model: &TransverseModel) -> Result<Vec<f64>, FunctionalError> {
    path.check_model(model)?;
    (0..=path.nt())
        .map(|k| {
            let v = velocity(path, k);
            let sq = v.map(|x| x * x);
            geometry::integral(&sq, path.slice(k), model).map_err(Into::into)
        })
        .collect()
}

/// Trapezoidal `∫₀¹ √E dt`.
pub fn geodesic_length(path: &PotentialPath, model: &TransverseModel) -> Result<f64, FunctionalError> {
    let e = path_energy(path, model)?;
    let root: Vec<f64> = e.iter().map(|v| v.max(0.0).sqrt()).collect();
    let dt = path.dt();
    Ok(root.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum())
}

/// Length of the ε-geodesic at `cfg.eps_min` with `f ≡ 1`.
pub fn distance(
    phi0: &SpatialField,
    phi1: &SpatialField,
    cfg: &SolverConfig,
    model: &TransverseModel,
) -> Result<f64, FunctionalError> {
    let f = SpatialField::constant(model, 1.0);
    let (path, _) = solver::solve_geodesic(phi0, phi1, cfg, model, &f)?;
    geodesic_length(&path, model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceDiagnostics {
    pub t: f64,
    pub energy: f64,
    pub i: f64,
    pub mu: f64,
    pub q_mean: f64,
    pub q_max: f64,
    pub sup_abs_phitt: f64,
    pub sup_abs_lap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    pub slices: Vec<SliceDiagnostics>,
    pub length: f64,
    pub s_bar: f64,
}

impl PathDiagnostics {
    pub const CSV_HEADER: &'static str = "t,E,I,mu,Q_mean,Q_max,sup_abs_phitt,sup_abs_lap";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for s in &self.slices {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.t, s.energy, s.i, s.mu, s.q_mean, s.q_max, s.sup_abs_phitt, s.sup_abs_lap
            ));
        }
        out
    }
}

pub fn path_diagnostics(path: &PotentialPath, model: &TransverseModel) -> Result<PathDiagnostics, FunctionalError> {
    path.check_model(model)?;
    if path.nt() < 2 {
        return Err(FunctionalError::TooShort { need: 2, got: path.nt() });
    }
    let energy = path_energy(path, model)?;
    let mu = k_energy(path, model)?;
    let mut slices = Vec::with_capacity(path.nt() + 1);
    for k in 0..=path.nt() {
        let q = q_field(path, model, k)?;
        let lap = geometry::transverse_laplacian(path.slice(k), model)?;
        let acc = acceleration(path, k);
        slices.push(SliceDiagnostics {
            t: path.time(k),
            energy: energy[k],
            i: i_functional(path.slice(k), model)?,
            mu: mu[k],
            q_mean: model.integrate(q.values()),
            q_max: q.max(),
            sup_abs_phitt: acc.max_abs(),
            sup_abs_lap: lap.max_abs(),
        });
    }
    let root: Vec<f64> = energy.iter().map(|v| v.max(0.0).sqrt()).collect();
    let length = root.windows(2).map(|w| 0.5 * path.dt() * (w[0] + w[1])).sum();
    Ok(PathDiagnostics { slices, length, s_bar: s_bar(model)? })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::problems;

    fn flat(dims: &[usize]) -> TransverseModel {
        TransverseModel::flat(dims.len() / 2, dims).unwrap()
    }

    fn homogeneous(m: &TransverseModel, nt: usize, g: impl Fn(f64) -> f64) -> PotentialPath {
        PotentialPath::from_fn(nt, |t| SpatialField::constant(m, g(t))).unwrap()
    }

    #[test]
    fn i_of_constants_and_cosine() {
        let m = flat(&[64, 4]);
        assert!((i_functional(&SpatialField::constant(&m, 0.7), &m).unwrap() - 0.7).abs() < 1e-14);
        let a = 0.05;
        let got = i_functional(&problems::cosine(&m, a, 1, 0), &m).unwrap();
        let exact = -a * a * PI * PI / 4.0;
        assert!((got - exact).abs() < 2e-3 * exact.abs(), "{got} vs {exact}");
    }

    #[test]
    fn i_shift_is_additive_to_first_order() {
        let m = flat(&[16, 16]);
        let phi = problems::random_bandlimited(&m, 3, 0.3, 2);
        let c = 1e-3;
        let shifted = phi.map(|v| v + c);
        let d = i_functional(&shifted, &m).unwrap() - i_functional(&phi, &m).unwrap();
        assert!((d - c).abs() < 1e-12, "{d}");
    }

    #[test]
    fn i_derivative_is_measure_pairing() {
        // d𝓘/ds at φ in direction u equals ∫ u dμ_φ.
        for dims in [vec![16, 16], vec![6, 6, 6, 6]] {
            let m = flat(&dims);
            let phi = problems::random_bandlimited(&m, 11, 0.4, 1);
            let u = problems::random_bandlimited(&m, 12, 0.2, 1);
            let h = 1e-5;
            let plus = i_functional(&phi.combine(1.0, &u, h), &m).unwrap();
            let minus = i_functional(&phi.combine(1.0, &u, -h), &m).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let exact = geometry::integral(&u, &phi, &m).unwrap();
            assert!((fd - exact).abs() < 1e-8, "{fd} vs {exact}");
        }
    }

    #[test]
    fn s_bar_flat_is_zero_and_class_invariant() {
        let m = flat(&[16, 16]);
        assert_eq!(s_bar(&m).unwrap(), 0.0);
        let phi = problems::cosine(&m, 0.05, 1, 0);
        assert!(s_bar_at(&phi, &m).unwrap().abs() < 1e-3);
    }

    #[test]
    fn constant_paths() {
        let m = flat(&[8, 8]);
        let p = homogeneous(&m, 8, |t| 3.0 * t * t - t);
        assert!(k_energy(&p, &m).unwrap().iter().all(|&v| v == 0.0));
        assert!(k_energy_hessian_check(&p, &m).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn velocity_and_acceleration_exact_on_cubics() {
        let m = flat(&[4, 4]);
        let p = homogeneous(&m, 8, |t| t * t * t - 2.0 * t * t + t);
        for k in 0..=8 {
            let t = p.time(k);
            let v = velocity(&p, k).values()[0];
            assert!((v - (3.0 * t * t - 4.0 * t + 1.0)).abs() < 0.05);
            let a = acceleration(&p, k).values()[0];
            assert!((a - (6.0 * t - 4.0)).abs() < 1e-10, "{k}: {a}");
        }
    }

    #[test]
    fn cov_derivative_homogeneous_and_linear() {
        let m = flat(&[8, 8]);
        let eps = 0.1;
        let p = homogeneous(&m, 16, |t| problems::homogeneous_solution(0.0, 1.0, eps, t));
        let v = velocity_path(&p);
        for k in 1..16 {
            let d = cov_derivative(&v, &p, &m, k).unwrap();
            assert!(d.values().iter().all(|v| (v - eps).abs() < 1e-10));
        }
        let phi0 = problems::cosine(&m, 0.05, 1, 0);
        let lin = PotentialPath::from_fn(16, |t| phi0.map(|v| v + 2.0 * t)).unwrap();
        let v = velocity_path(&lin);
        let d = cov_derivative(&v, &lin, &m, 5).unwrap();
        assert!(d.max_abs() < 1e-12);
        assert!(matches!(cov_derivative(&v, &lin, &m, 0), Err(FunctionalError::NotInterior { k: 0 })));
    }

    #[test]
    fn dbar_v_cosine_component() {
        let m = flat(&[64, 4]);
        let zero = SpatialField::constant(&m, 0.0);
        let psi = problems::cosine(&m, 1.0, 1, 0);
        let t = dbar_v_tensor(&psi, &zero, &m).unwrap();
        let mut err: f64 = 0.0;
        for s in 0..m.len() {
            let x = m.grid().coords(s)[0];
            err = err.max((t[s][(0, 0)] - C64::new(-2.0 * PI * PI * (2.0 * PI * x).cos(), 0.0)).norm());
        }
        assert!(err < 0.02 * 2.0 * PI * PI, "{err}");
        let c = dbar_v_norm_sq(&SpatialField::constant(&m, 2.0), &zero, &m).unwrap();
        assert!(c.max_abs() == 0.0);
    }

    #[test]
    fn dbar_v_positive_on_low_modes() {
        let m = flat(&[12, 12]);
        let zero = SpatialField::constant(&m, 0.0);
        for (kx, ky) in [(1, 0), (0, 1), (1, 1), (2, -1)] {
            let psi = SpatialField::from_fn(&m, |x| (2.0 * PI * (kx as f64 * x[0] + ky as f64 * x[1])).cos());
            let v = dbar_v_norm_sq(&psi, &zero, &m).unwrap();
            assert!(m.integrate(v.values()) > 1.0);
        }
    }

    #[test]
    fn energy_closed_forms() {
        let m = flat(&[4, 4]);
        let eps = 0.1;
        let p = homogeneous(&m, 16, |t| problems::homogeneous_solution(0.0, 1.0, eps, t));
        let e = path_energy(&p, &m).unwrap();
        for (k, v) in e.iter().enumerate() {
            let t = p.time(k);
            assert!((v - (1.0 + 0.5 * eps * (2.0 * t - 1.0)).powi(2)).abs() < 1e-12);
        }
        assert!((e[16] - e[0] - 0.2).abs() < 1e-12);
        let zero = homogeneous(&m, 4, |_| 0.0);
        assert_eq!(geodesic_length(&zero, &m).unwrap(), 0.0);
        let lin = homogeneous(&m, 8, |t| -3.0 * t);
        assert!((geodesic_length(&lin, &m).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn diagnostics_csv_shape() {
        let m = flat(&[4, 4]);
        let p = homogeneous(&m, 4, |t| problems::homogeneous_solution(0.0, 1.0, 0.1, t));
        let d = path_diagnostics(&p, &m).unwrap();
        let csv = d.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], PathDiagnostics::CSV_HEADER);
        assert_eq!(lines.len(), 6);
        assert!((d.slices[2].i - 0.4875).abs() < 1e-14);
        for s in &d.slices {
            assert!((s.q_mean - 0.1).abs() < 1e-10, "{}", s.q_mean);
        }
    }
}
