//! Space-time matrix assembly, the log-determinant Monge-Ampère residual and
//! the Kähler-cone lift `ψ(r, ·) = φ(2(r − 1), ·) + 4 log r`.
//!
//! The `(n+1)×(n+1)` matrix at an interior node is
//!
//! ```text
//!     ⎡ h_φ        ½ φ_{tz} ⎤
//! A = ⎣ ½ φ_{tz̄}   ½ φ_tt   ⎦
//! ```
//!
//! and `det A = det(h_φ)·(½φ_tt − ¼ φ_{tz̄} h_φ^{−1} φ_{tz})`, so the
//! regularized geodesic equation reads `log det A = log(½ ε f det h)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{self, GeometryError, SpatialField, TransverseModel};
use crate::herm::{self, HermitianMatrix};
use crate::stencil::{SpaceTimeStencils, Stencil};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("time index {k} is not interior (valid range 1..={max})")]
    IndexOutOfRange { k: usize, max: usize },
    #[error("space-time matrix is not positive definite at slice {k}, node {node}")]
    NotPositive { k: usize, node: usize },
    #[error("regularization epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("right-hand side f must be positive, got {value} at node {node}")]
    NonPositiveRhs { node: usize, value: f64 },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `φ(t_k, ·)` on `t_k = k/nt`, `k = 0..=nt`. Slices 0 and `nt` carry the
/// Dirichlet data; solvers only ever replace interior slices.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialPath {
    slices: Vec<SpatialField>,
}

impl PotentialPath {
    pub fn new(slices: Vec<SpatialField>) -> Result<Self, ConeError> {
        if slices.len() < 2 {
            return Err(ConeError::InvalidPath("a path needs at least the two boundary slices".into()));
        }
        let len = slices[0].len();
        if slices.iter().any(|s| s.len() != len) {
            return Err(ConeError::InvalidPath("slices live on different grids".into()));
        }
        if slices.iter().any(|s| !s.is_finite()) {
            return Err(ConeError::InvalidPath("non-finite values".into()));
        }
        Ok(PotentialPath { slices })
    }

    /// Samples `f(t)` at every slice.
    pub fn from_fn(nt: usize, f: impl Fn(f64) -> SpatialField) -> Result<Self, ConeError> {
        Self::new((0..=nt).map(|k| f(k as f64 / nt as f64)).collect())
    }

    pub fn nt(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.nt() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.nt() as f64
    }

    pub fn slice(&self, k: usize) -> &SpatialField {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[SpatialField] {
        &self.slices
    }

    pub fn start(&self) -> &SpatialField {
        &self.slices[0]
    }

    pub fn end(&self) -> &SpatialField {
        &self.slices[self.nt()]
    }

    pub fn nodes(&self) -> usize {
        self.slices[0].len()
    }

    /// Number of unknowns: interior slices times spatial nodes.
    pub fn interior_len(&self) -> usize {
        (self.nt() - 1) * self.nodes()
    }

    /// `self + alpha·delta` on interior slices; `delta` is ordered
    /// `(k − 1)·nodes + s`.
    pub(crate) fn with_interior_update(&self, delta: &[f64], alpha: f64) -> PotentialPath {
        let ns = self.nodes();
        let mut slices = self.slices.clone();
        for k in 1..self.nt() {
            let d = &delta[(k - 1) * ns..k * ns];
            for (v, dv) in slices[k].values_mut().iter_mut().zip(d) {
                *v += alpha * dv;
            }
        }
        PotentialPath { slices }
    }

    /// Time-reversed path `φ(1 − t)`.
    pub fn reversed(&self) -> PotentialPath {
        let mut slices = self.slices.clone();
        slices.reverse();
        PotentialPath { slices }
    }

    pub fn sup_distance(&self, other: &PotentialPath) -> f64 {
        self.slices.iter().zip(&other.slices).map(|(a, b)| a.sup_distance(b)).fold(0.0, f64::max)
    }

    pub(crate) fn check_model(&self, model: &TransverseModel) -> Result<(), ConeError> {
        if self.nodes() != model.len() {
            return Err(GeometryError::DimensionMismatch { expected: model.len(), got: self.nodes() }.into());
        }
        Ok(())
    }
}

/// Space-time Hermitian matrix at one node together with its Schur data.
#[derive(Clone, Debug)]
pub struct HermitianNode {
    pub matrix: HermitianMatrix,
    /// `h_φ ≻ 0` for the leading `n×n` block.
    pub block_positive: bool,
    /// `½φ_tt − ¼ φ_{tz̄} h_φ^{−1} φ_{tz}`; NaN when the block is singular.
    pub schur: f64,
    /// `det h_φ` of the leading block.
    pub block_det: f64,
}

impl HermitianNode {
    pub fn from_matrix(matrix: HermitianMatrix) -> Self {
        let n = matrix.nrows() - 1;
        let block = matrix.view((0, 0), (n, n)).into_owned();
        let block_positive = herm::is_positive_definite(&block);
        let block_det = herm::det(&block);
        let schur = match herm::inverse(&block) {
            Some(inv) => {
                let col = matrix.view((0, n), (n, 1)).column(0).into_owned();
                matrix[(n, n)].re - herm::quad_form(&inv, &col)
            }
            None => f64::NAN,
        };
        HermitianNode { matrix, block_positive, schur, block_det }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows() - 1
    }

    /// Schur-complement positivity test.
    pub fn is_positive(&self) -> bool {
        self.block_positive && self.schur > 0.0
    }

    /// `det A` through the block formula.
    pub fn det_block(&self) -> f64 {
        self.block_det * self.schur
    }

    /// `det A` from a direct LU factorization of the full matrix.
    pub fn det_direct(&self) -> f64 {
        herm::det(&self.matrix)
    }

    /// `log det A` by the block route; requires [`Self::is_positive`].
    pub fn log_det(&self) -> f64 {
        self.block_det.ln() + self.schur.ln()
    }

    /// `½ φ_tt`, the bottom-right entry.
    pub fn corner(&self) -> f64 {
        let n = self.n();
        self.matrix[(n, n)].re
    }
}

/// Stencils of the space-time matrix for a given model and time step.
pub(crate) struct Assembler<'a> {
    pub model: &'a TransverseModel,
    pub ops: SpaceTimeStencils,
}

impl<'a> Assembler<'a> {
    pub fn new(model: &'a TransverseModel, nt: usize) -> Self {
        let ops = SpaceTimeStencils::new(model.stencils(), model.n(), 1.0 / nt as f64);
        Assembler { model, ops }
    }

    pub fn fetch<'p>(path: &'p PotentialPath, k: usize) -> impl Fn(i32, usize) -> C64 + 'p {
        move |dt, s| C64::new(path.slice((k as i32 + dt) as usize).values()[s], 0.0)
    }

    pub fn node(&self, path: &PotentialPath, k: usize, s: usize) -> HermitianNode {
        let n = self.model.n();
        let grid = self.model.grid();
        let fetch = Self::fetch(path, k);
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for a in 0..=n {
            for b in 0..=n {
                m[(a, b)] = self.ops.entries[a][b].apply(grid, s, &fetch);
            }
        }
        let h = self.model.h(s);
        for a in 0..n {
            for b in 0..n {
                m[(a, b)] += h[(a, b)];
            }
        }
        HermitianNode::from_matrix(m)
    }

    pub fn slice(&self, path: &PotentialPath, k: usize) -> Vec<HermitianNode> {
        (0..self.model.len()).into_par_iter().map(|s| self.node(path, k, s)).collect()
    }

    pub fn entry(&self, a: usize, b: usize) -> &Stencil {
        &self.ops.entries[a][b]
    }
}

fn check_interior(path: &PotentialPath, k: usize) -> Result<(), ConeError> {
    if k == 0 || k >= path.nt() {
        return Err(ConeError::IndexOutOfRange { k, max: path.nt().saturating_sub(1) });
    }
    Ok(())
}

/// Space-time matrices at every spatial node of interior slice `k`.
pub fn assemble_a(path: &PotentialPath, model: &TransverseModel, k: usize) -> Result<Vec<HermitianNode>, ConeError> {
    path.check_model(model)?;
    check_interior(path, k)?;
    Ok(Assembler::new(model, path.nt()).slice(path, k))
}

pub(crate) fn check_rhs(eps: f64, f: &SpatialField, model: &TransverseModel) -> Result<(), ConeError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(ConeError::InvalidEpsilon(eps));
    }
    model.check(f)?;
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(ConeError::NonPositiveRhs { node, value });
    }
    Ok(())
}

/// `R = log det A − log(½ ε f det h)` at every interior node, ordered
/// `(k − 1)·nodes + s`.
pub fn ma_residual(
    path: &PotentialPath,
    model: &TransverseModel,
    eps: f64,
    f: &SpatialField,
) -> Result<Vec<f64>, ConeError> {
    path.check_model(model)?;
    check_rhs(eps, f, model)?;
    let asm = Assembler::new(model, path.nt());
    let ns = model.len();
    (0..path.interior_len())
        .into_par_iter()
        .map(|idx| {
            let (k, s) = (idx / ns + 1, idx % ns);
            let node = asm.node(path, k, s);
            if !node.is_positive() {
                return Err(ConeError::NotPositive { k, node: s });
            }
            Ok(node.log_det() - (0.5 * eps * f.values()[s] * model.det_h(s)).ln())
        })
        .collect()
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Radial samples `r_k = 1 + t_k/2` and the lifted potential.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeGrid {
    pub radii: Vec<f64>,
    pub slices: Vec<SpatialField>,
}

impl ConeGrid {
    pub fn dr(&self) -> f64 {
        0.5 / (self.radii.len() - 1) as f64
    }
}

pub fn radius(t: f64) -> f64 {
    1.0 + 0.5 * t
}

/// `ψ(r_k, ·) = φ(t_k, ·) + 4 log r_k`.
pub fn lift(path: &PotentialPath) -> ConeGrid {
    let radii: Vec<f64> = (0..=path.nt()).map(|k| radius(path.time(k))).collect();
    let slices = path
        .slices()
        .iter()
        .zip(&radii)
        .map(|(s, r)| {
            let off = 4.0 * r.ln();
            s.map(|v| v + off)
        })
        .collect();
    ConeGrid { radii, slices }
}

pub fn unlift(cone: &ConeGrid) -> Result<PotentialPath, ConeError> {
    if cone.radii.len() != cone.slices.len() {
        return Err(ConeError::InvalidPath("radii and slices differ in length".into()));
    }
    PotentialPath::new(
        cone.slices
            .iter()
            .zip(&cone.radii)
            .map(|(s, r)| {
                let off = 4.0 * r.ln();
                s.map(|v| v - off)
            })
            .collect(),
    )
}

/// Result of [`cone_identity_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeIdentity {
    /// Max pointwise gap between `(Ω_ψ)^{n+1}/ω̄^{n+1}` assembled on the cone
    /// and `r²(φ_tt − ¼|d_Bφ_t|²)ρ_φ` in time variables, relative to the
    /// right-hand side `ε f r²` of the cone equation.
    pub identity_discrepancy: f64,
    /// Max pointwise `|(Ω_ψ)^{n+1}/ω̄^{n+1} / (ε f r²) − 1|`: how far the
    /// lifted path is from solving the cone equation with base `f r²`.
    pub equation_discrepancy: f64,
}

/// Evaluates both sides of the cone/time volume identity on the lifted grid.
///
/// The cone side is a direct determinant of the bracketed matrix of `Ω_ψ`
/// (entries `h + ½ψ_{ij̄}`, `¼ψ_{z r}`, `⅛ψ_rr + ½r^{−2}`) built with radial
/// differences of `ψ`; since `ω̄` is the same matrix at `ψ = 0`, the ratio is
/// `2r² det M_ψ / det h`.
pub fn cone_identity_check(
    path: &PotentialPath,
    model: &TransverseModel,
    eps: f64,
    f: &SpatialField,
) -> Result<ConeIdentity, ConeError> {
    path.check_model(model)?;
    check_rhs(eps, f, model)?;
    let n = model.n();
    let grid = model.grid();
    let st = model.stencils();
    let cone = lift(path);
    let dr = cone.dr();
    let dt = path.dt();

    let mut identity: f64 = 0.0;
    let mut equation: f64 = 0.0;
    for k in 1..path.nt() {
        let r = cone.radii[k];
        let phi = path.slice(k);
        let velocity = path.slice(k + 1).combine(0.5 / dt, path.slice(k - 1), -0.5 / dt);
        let metrics = geometry::inverse_metrics(phi, model).map_err(|e| match e {
            GeometryError::NotAdmissible { node } => ConeError::NotPositive { k, node },
            other => other.into(),
        })?;
        let grad = geometry::gradient_norm_sq_with(velocity.values(), &metrics, model);
        let (psi_m, psi_0, psi_p) = (&cone.slices[k - 1], &cone.slices[k], &cone.slices[k + 1]);

        let rows: Vec<Result<(f64, f64), ConeError>> = (0..model.len())
            .into_par_iter()
            .map(|s| {
                let phi_tt =
                    (path.slice(k + 1).values()[s] - 2.0 * phi.values()[s] + path.slice(k - 1).values()[s]) / (dt * dt);
                let q = phi_tt - 0.25 * grad[s];
                if q < 0.0 {
                    return Err(ConeError::NotPositive { k, node: s });
                }
                let rho = herm::det(&metrics[s].0) / model.det_h(s);
                let time_side = r * r * q * rho;

                let mut m = DMatrix::<C64>::zeros(n + 1, n + 1);
                let hess = model.hessian_at(psi_0.values(), s);
                for a in 0..n {
                    for b in 0..n {
                        m[(a, b)] = model.h(s)[(a, b)] + hess[(a, b)] * 0.5;
                    }
                    let dz_p = st.dz[a].apply_real(grid, s, psi_p.values());
                    let dz_m = st.dz[a].apply_real(grid, s, psi_m.values());
                    let psi_zr = (dz_p - dz_m) / (2.0 * dr);
                    m[(a, n)] = psi_zr * 0.25;
                    m[(n, a)] = psi_zr.conj() * 0.25;
                }
                let psi_rr = (psi_p.values()[s] - 2.0 * psi_0.values()[s] + psi_m.values()[s]) / (dr * dr);
                m[(n, n)] = C64::new(psi_rr / 8.0 + 0.5 / (r * r), 0.0);
                let cone_side = 2.0 * r * r * herm::det(&m) / model.det_h(s);

                let rhs = eps * f.values()[s] * r * r;
                let rel = (cone_side - time_side).abs() / rhs;
                let eq = (cone_side / rhs - 1.0).abs();
                Ok((rel, eq))
            })
            .collect();
        for row in rows {
            let (rel, eq) = row?;
            identity = identity.max(rel);
            equation = equation.max(eq);
        }
    }
    Ok(ConeIdentity { identity_discrepancy: identity, equation_discrepancy: equation })
}
