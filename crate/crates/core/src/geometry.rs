//! Background transverse Kähler model and basic-function calculus.
//!
//! Real axes are ordered `x_1, y_1, x_2, y_2, …` with `z_j = x_j + i y_j`;
//! each axis has unit period. Nodes are numbered row-major (last axis
//! fastest). Fields carry no Reeb-direction coordinate, so every field is
//! basic by construction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::herm::{self, HermitianMatrix};
use crate::stencil::SpatialStencils;
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("field has {got} values but the grid has {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("metric h_phi is not positive definite at node {node}")]
    NotAdmissible { node: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Periodic tensor grid on the unit torus.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(dims: &[usize]) -> Result<Self, GeometryError> {
        if dims.is_empty() {
            return Err(GeometryError::InvalidModel("grid has no axes".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 3) {
            return Err(GeometryError::InvalidModel(format!("every axis needs at least 3 nodes, got {d}")));
        }
        let mut strides = vec![1; dims.len()];
        for a in (0..dims.len() - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        Ok(Grid { dims: dims.to_vec(), strides, len: dims.iter().product() })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn axes(&self) -> usize {
        self.dims.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.dims[axis] as f64
    }

    /// Neighbor of `node` one step along `axis`, wrapping periodically.
    #[inline]
    pub fn shift(&self, node: usize, axis: usize, dir: i8) -> usize {
        let d = self.dims[axis];
        let s = self.strides[axis];
        let i = (node / s) % d;
        let j = match dir {
            1 => {
                if i + 1 == d {
                    0
                } else {
                    i + 1
                }
            }
            -1 => {
                if i == 0 {
                    d - 1
                } else {
                    i - 1
                }
            }
            _ => unreachable!("unit shifts only"),
        };
        node + j * s - i * s
    }

    /// Coordinates in `[0, 1)` per real axis.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.dims.iter().zip(&self.strides).map(|(&d, &s)| ((node / s) % d) as f64 / d as f64).collect()
    }
}

/// Background transverse geometry: complex dimension `n`, grid, and the
/// Hermitian matrix `h_{ij̄}` with its quadrature weights at every node.
///
/// Weights are the background measure `η ∧ (dη)^n` per node, normalized to
/// total mass 1, so `∫ u dμ_φ = Σ w · (det h_φ / det h) · u`.
#[derive(Clone, Debug)]
pub struct TransverseModel {
    n: usize,
    grid: Grid,
    h: Vec<HermitianMatrix>,
    h_inv: Vec<HermitianMatrix>,
    det_h: Vec<f64>,
    weights: Vec<f64>,
    stencils: SpatialStencils,
}

impl TransverseModel {
    /// Flat torus with constant `h_{ij̄} = ½ δ_{ij}`.
    pub fn flat(n: usize, grid_dims: &[usize]) -> Result<Self, GeometryError> {
        if n == 0 {
            return Err(GeometryError::InvalidModel("complex dimension must be at least 1".into()));
        }
        let grid = Grid::new(grid_dims)?;
        let h = HermitianMatrix::identity(n, n).scale(0.5);
        Self::with_metric(n, grid_dims, vec![h; grid.len()])
    }

    /// Model with an arbitrary Hermitian positive definite `h` per node.
    pub fn with_metric(n: usize, grid_dims: &[usize], h: Vec<HermitianMatrix>) -> Result<Self, GeometryError> {
        if grid_dims.len() != 2 * n {
            return Err(GeometryError::InvalidModel(format!(
                "complex dimension {n} needs {} real axes, got {}",
                2 * n,
                grid_dims.len()
            )));
        }
        let grid = Grid::new(grid_dims)?;
        if h.len() != grid.len() {
            return Err(GeometryError::DimensionMismatch { expected: grid.len(), got: h.len() });
        }
        let mut h_inv = Vec::with_capacity(h.len());
        let mut det_h = Vec::with_capacity(h.len());
        for (node, m) in h.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n || herm::hermiticity_defect(m) > 1e-14 {
                return Err(GeometryError::InvalidModel(format!("h is not an n×n Hermitian matrix at node {node}")));
            }
            if !herm::is_positive_definite(m) {
                return Err(GeometryError::NotAdmissible { node });
            }
            h_inv.push(herm::inverse(m).ok_or(GeometryError::NotAdmissible { node })?);
            det_h.push(herm::det(m));
        }
        let total: f64 = det_h.iter().sum();
        let weights = det_h.iter().map(|d| d / total).collect();
        let stencils = SpatialStencils::new(n, &grid);
        Ok(TransverseModel { n, grid, h, h_inv, det_h, weights, stencils })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_dims(&self) -> &[usize] {
        self.grid.dims()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn h(&self, node: usize) -> &HermitianMatrix {
        &self.h[node]
    }

    pub fn h_inv(&self, node: usize) -> &HermitianMatrix {
        &self.h_inv[node]
    }

    pub fn det_h(&self, node: usize) -> f64 {
        self.det_h[node]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn stencils(&self) -> &SpatialStencils {
        &self.stencils
    }

    /// `∫ u dμ_0`.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(w, u)| w * u).sum()
    }

    pub(crate) fn check(&self, field: &SpatialField) -> Result<(), GeometryError> {
        if field.len() != self.len() {
            return Err(GeometryError::DimensionMismatch { expected: self.len(), got: field.len() });
        }
        Ok(())
    }

    /// `(∂_{z_j} u)_j` at one node.
    pub(crate) fn dz_at(&self, values: &[f64], node: usize) -> DVector<C64> {
        DVector::from_iterator(self.n, self.stencils.dz.iter().map(|st| st.apply_real(&self.grid, node, values)))
    }

    /// `(u_{ij̄})` at one node.
    pub(crate) fn hessian_at(&self, values: &[f64], node: usize) -> HermitianMatrix {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.stencils.hess[i][j].apply_real(&self.grid, node, values);
            }
        }
        m
    }

    /// `h + ½ u_{ij̄}` at one node.
    pub(crate) fn metric_at(&self, values: &[f64], node: usize) -> HermitianMatrix {
        &self.h[node] + self.hessian_at(values, node).scale(0.5)
    }
}

/// A real basic function sampled on the transverse grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialField {
    values: Vec<f64>,
}

impl SpatialField {
    pub fn new(values: Vec<f64>) -> Self {
        SpatialField { values }
    }

    pub fn constant(model: &TransverseModel, c: f64) -> Self {
        SpatialField { values: vec![c; model.len()] }
    }

    /// Samples `f` at node coordinates.
    pub fn from_fn(model: &TransverseModel, f: impl Fn(&[f64]) -> f64) -> Self {
        let grid = model.grid();
        SpatialField { values: (0..grid.len()).map(|s| f(&grid.coords(s))).collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SpatialField, b: f64) -> SpatialField {
        SpatialField { values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SpatialField {
        SpatialField { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_distance(&self, other: &SpatialField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `h_φ = h + ½ φ_{ij̄}` per node, with the admissibility flag `h_φ ≻ 0`.
#[derive(Clone, Debug)]
pub struct MetricField {
    pub matrices: Vec<HermitianMatrix>,
    pub admissible: bool,
}

/// Discrete complex Hessian `φ_{ij̄}` at every node.
pub fn complex_hessian(field: &SpatialField, model: &TransverseModel) -> Result<Vec<HermitianMatrix>, GeometryError> {
    model.check(field)?;
    Ok((0..model.len()).into_par_iter().map(|s| model.hessian_at(field.values(), s)).collect())
}

pub fn metric_matrix(phi: &SpatialField, model: &TransverseModel) -> Result<MetricField, GeometryError> {
    model.check(phi)?;
    let matrices: Vec<HermitianMatrix> =
        (0..model.len()).into_par_iter().map(|s| model.metric_at(phi.values(), s)).collect();
    let admissible = matrices.iter().all(herm::is_positive_definite);
    Ok(MetricField { matrices, admissible })
}

/// Inverse metrics, failing on the first non-admissible node.
pub(crate) fn inverse_metrics(
    phi: &SpatialField,
    model: &TransverseModel,
) -> Result<Vec<(HermitianMatrix, HermitianMatrix)>, GeometryError> {
    model.check(phi)?;
    (0..model.len())
        .into_par_iter()
        .map(|s| {
            let m = model.metric_at(phi.values(), s);
            if !herm::is_positive_definite(&m) {
                return Err(GeometryError::NotAdmissible { node: s });
            }
            let inv = herm::inverse(&m).ok_or(GeometryError::NotAdmissible { node: s })?;
            Ok((m, inv))
        })
        .collect()
}

/// `⟨d_B a, d_B b⟩_{g_φ} = (h_φ)^{ij̄}(a_i b_j̄ + b_i a_j̄)`, so that
/// `|d_B a|² = 2 (h_φ)^{ij̄} a_i a_j̄`. With this constant
/// `det A = det(h_φ)·½(φ_tt − ¼|d_B φ_t|²)` holds exactly.
pub fn gradient_pairing(
    a: &SpatialField,
    b: &SpatialField,
    phi: &SpatialField,
    model: &TransverseModel,
) -> Result<SpatialField, GeometryError> {
    model.check(a)?;
    model.check(b)?;
    let metrics = inverse_metrics(phi, model)?;
    let values = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let da = model.dz_at(a.values(), s);
            let db = model.dz_at(b.values(), s);
            2.0 * herm::sesquilinear(&metrics[s].1, &da, &db).re
        })
        .collect();
    Ok(SpatialField::new(values))
}

/// `|d_B a|²_{g_φ}` given precomputed inverse metrics.
pub(crate) fn gradient_norm_sq_with(
    a: &[f64],
    inv_metrics: &[(HermitianMatrix, HermitianMatrix)],
    model: &TransverseModel,
) -> Vec<f64> {
    (0..model.len())
        .into_par_iter()
        .map(|s| {
            let da = model.dz_at(a, s);
            2.0 * herm::quad_form(&inv_metrics[s].1, &da)
        })
        .collect()
}

/// `ρ_φ = det(h_φ)/det(h)`, the density of `dμ_φ` against `dμ_0`.
pub fn measure_density(phi: &SpatialField, model: &TransverseModel) -> Result<SpatialField, GeometryError> {
    model.check(phi)?;
    let values = (0..model.len())
        .into_par_iter()
        .map(|s| herm::det(&model.metric_at(phi.values(), s)) / model.det_h(s))
        .collect();
    Ok(SpatialField::new(values))
}

/// `∫ u dμ_φ`.
pub fn integral(u: &SpatialField, phi: &SpatialField, model: &TransverseModel) -> Result<f64, GeometryError> {
    model.check(u)?;
    let rho = measure_density(phi, model)?;
    Ok(model.integrate(&u.values().iter().zip(rho.values()).map(|(a, b)| a * b).collect::<Vec<_>>()))
}

/// Transverse scalar curvature as the pointwise form ratio
/// `2n·ρ^T ∧ (dη_φ)^{n−1} / (dη_φ)^n = −tr(h_φ^{−1} L)`, where
/// `L = ∂∂̄ log det h_φ`. For `n = 1` this is `−(log det h_φ)_{zz̄}/(h_φ)_{zz̄}`.
pub fn transverse_scalar_curvature(phi: &SpatialField, model: &TransverseModel) -> Result<SpatialField, GeometryError> {
    let metrics = inverse_metrics(phi, model)?;
    let mut log_det = Vec::with_capacity(model.len());
    for (s, (m, _)) in metrics.iter().enumerate() {
        let d = herm::det(m);
        if d <= 0.0 {
            return Err(GeometryError::NotAdmissible { node: s });
        }
        log_det.push(d.ln());
    }
    let values = (0..model.len())
        .into_par_iter()
        .map(|s| {
            let l = model.hessian_at(&log_det, s);
            -(&metrics[s].1 * l).trace().re
        })
        .collect();
    Ok(SpatialField::new(values))
}

/// Background transverse Laplacian `Δ_T u = 2 tr(h^{−1} u_{ij̄})`, the real
/// Laplacian of `g^T = 2h`.
pub fn transverse_laplacian(u: &SpatialField, model: &TransverseModel) -> Result<SpatialField, GeometryError> {
    model.check(u)?;
    let values = (0..model.len())
        .into_par_iter()
        .map(|s| 2.0 * (model.h_inv(s) * model.hessian_at(u.values(), s)).trace().re)
        .collect();
    Ok(SpatialField::new(values))
}
