//! Regularized geodesics in the space of Sasakian potentials.
//!
//! The transverse geometry is a flat complex torus of dimension `n`, sampled on
//! a periodic grid. A path of basic potentials `φ(t, ·)`, `t ∈ [0, 1]`, is an
//! ε-approximate geodesic when
//!
//! ```text
//! (φ_tt − ¼ |d_B φ_t|²_{g_φ}) · det(h_φ)/det(h) = ε f,     h_φ = h + ½ φ_{ij̄}
//! ```
//!
//! which is the log-determinant equation `log det A(φ) = log(½ ε f det h)` for
//! the `(n+1)×(n+1)` Hermitian space-time matrix `A` (see [`cone`]).
//!
//! Modules:
//! - [`geometry`]: background model, complex derivatives, metric pairings, densities, curvature.
//! - [`cone`]: space-time assembly, Monge-Ampère residual, cone lift and its identity check.
//! - [`solver`]: sub/supersolutions and the damped Newton continuity solver.
//! - [`functionals`]: 𝓘, K-energy, covariant derivative, path energy and distance.
//! - [`problems`]: boundary-data generators used by tests, the CLI and the check suite.
//! - [`verify`]: the executable check campaign.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too; index loops
// follow the matrix notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cone;
pub mod functionals;
pub mod geometry;
pub mod herm;
pub mod problems;
pub mod solver;
pub(crate) mod stencil;
pub mod verify;

pub use cone::{ConeGrid, HermitianNode, PotentialPath};
pub use geometry::{SpatialField, TransverseModel};
pub use solver::{SolveReport, SolverConfig};

pub use nalgebra::Complex;

/// Complex scalar used for all Hermitian matrices.
pub type C64 = Complex<f64>;
