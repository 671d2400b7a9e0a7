//! Linear finite-difference stencils on the periodic space-time grid.
//!
//! Every discrete derivative in the crate is a [`Stencil`]: a list of taps,
//! each a time offset, a chain of unit spatial shifts and a complex weight.
//! The residual and its Jacobian are built from the same stencils, so the
//! Jacobian is exact for the discrete residual.

use std::ops::{Add, Mul, Sub};

use crate::geometry::Grid;
use crate::C64;

#[derive(Clone, Debug)]
pub(crate) struct Tap {
    pub dt: i32,
    pub shifts: Vec<(usize, i8)>,
    pub coef: C64,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Stencil {
    pub taps: Vec<Tap>,
}

impl Stencil {
    pub fn point(dt: i32, coef: C64) -> Self {
        Stencil { taps: vec![Tap { dt, shifts: Vec::new(), coef }] }
    }

    /// Central first difference along one real axis.
    pub fn first(axis: usize, h: f64) -> Self {
        let w = 1.0 / (2.0 * h);
        Stencil {
            taps: vec![
                Tap { dt: 0, shifts: vec![(axis, 1)], coef: C64::new(w, 0.0) },
                Tap { dt: 0, shifts: vec![(axis, -1)], coef: C64::new(-w, 0.0) },
            ],
        }
    }

    /// Central second difference `∂_a ∂_b`: three points on the diagonal,
    /// the product of first differences off it.
    pub fn second(a: usize, b: usize, grid: &Grid) -> Self {
        if a == b {
            let h = grid.spacing(a);
            let w = 1.0 / (h * h);
            return Stencil {
                taps: vec![
                    Tap { dt: 0, shifts: vec![(a, 1)], coef: C64::new(w, 0.0) },
                    Tap { dt: 0, shifts: Vec::new(), coef: C64::new(-2.0 * w, 0.0) },
                    Tap { dt: 0, shifts: vec![(a, -1)], coef: C64::new(w, 0.0) },
                ],
            };
        }
        let w = 1.0 / (4.0 * grid.spacing(a) * grid.spacing(b));
        let mut taps = Vec::with_capacity(4);
        for (sa, sb) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
            let sign = f64::from(sa * sb);
            taps.push(Tap { dt: 0, shifts: vec![(a, sa), (b, sb)], coef: C64::new(sign * w, 0.0) });
        }
        Stencil { taps }
    }

    /// `∂_{z_j} = ½(∂_{x_j} − i ∂_{y_j})`.
    pub fn dz(j: usize, grid: &Grid) -> Self {
        let x = Stencil::first(2 * j, grid.spacing(2 * j));
        let y = Stencil::first(2 * j + 1, grid.spacing(2 * j + 1));
        (x * C64::new(0.5, 0.0)) + (y * C64::new(0.0, -0.5))
    }

    /// `∂_{z̄_j} = ½(∂_{x_j} + i ∂_{y_j})`.
    pub fn dzbar(j: usize, grid: &Grid) -> Self {
        let x = Stencil::first(2 * j, grid.spacing(2 * j));
        let y = Stencil::first(2 * j + 1, grid.spacing(2 * j + 1));
        (x * C64::new(0.5, 0.0)) + (y * C64::new(0.0, 0.5))
    }

    /// `φ_{ij̄} = ¼(∂_{x_i}∂_{x_j} + ∂_{y_i}∂_{y_j}) + (i/4)(∂_{x_i}∂_{y_j} − ∂_{y_i}∂_{x_j})`.
    pub fn hessian(i: usize, j: usize, grid: &Grid) -> Self {
        let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        let real = Stencil::second(xi, xj, grid) + Stencil::second(yi, yj, grid);
        let mut out = real * C64::new(0.25, 0.0);
        if i != j {
            let imag = Stencil::second(xi, yj, grid) - Stencil::second(yi, xj, grid);
            out = out + imag * C64::new(0.0, 0.25);
        }
        out
    }

    /// Same taps moved by `dt` time slices.
    pub fn at_time(mut self, dt: i32) -> Self {
        for tap in &mut self.taps {
            tap.dt += dt;
        }
        self
    }

    /// Resolves a tap to `(time offset, spatial node)` relative to `node`.
    #[inline]
    pub fn resolve(tap: &Tap, grid: &Grid, node: usize) -> usize {
        tap.shifts.iter().fold(node, |s, &(axis, dir)| grid.shift(s, axis, dir))
    }

    pub fn apply<F>(&self, grid: &Grid, node: usize, fetch: F) -> C64
    where
        F: Fn(i32, usize) -> C64,
    {
        self.taps.iter().map(|tap| tap.coef * fetch(tap.dt, Self::resolve(tap, grid, node))).sum()
    }

    pub fn apply_real(&self, grid: &Grid, node: usize, values: &[f64]) -> C64 {
        self.apply(grid, node, |_, s| C64::new(values[s], 0.0))
    }
}

impl Add for Stencil {
    type Output = Stencil;
    fn add(mut self, rhs: Stencil) -> Stencil {
        self.taps.extend(rhs.taps);
        self
    }
}

impl Sub for Stencil {
    type Output = Stencil;
    fn sub(self, rhs: Stencil) -> Stencil {
        self + rhs * C64::new(-1.0, 0.0)
    }
}

impl Mul<C64> for Stencil {
    type Output = Stencil;
    fn mul(mut self, c: C64) -> Stencil {
        for tap in &mut self.taps {
            tap.coef *= c;
        }
        self
    }
}

/// Precomputed spatial stencils for a model grid.
#[derive(Clone, Debug)]
pub(crate) struct SpatialStencils {
    pub dz: Vec<Stencil>,
    pub dzbar: Vec<Stencil>,
    /// `hess[i][j]` evaluates `φ_{ij̄}`.
    pub hess: Vec<Vec<Stencil>>,
}

impl SpatialStencils {
    pub fn new(n: usize, grid: &Grid) -> Self {
        SpatialStencils {
            dz: (0..n).map(|j| Stencil::dz(j, grid)).collect(),
            dzbar: (0..n).map(|j| Stencil::dzbar(j, grid)).collect(),
            hess: (0..n).map(|i| (0..n).map(|j| Stencil::hessian(i, j, grid)).collect()).collect(),
        }
    }
}

/// Linear part of the space-time matrix `A(φ)` at an interior slice:
/// `A_{ij̄} = h_{ij̄} + ½φ_{ij̄}`, `A_{i,n+1} = ½φ_{tz_i}`, `A_{n+1,j̄} = ½φ_{tz̄_j}`,
/// `A_{n+1,n+1} = ½φ_tt`, all central in `t`.
#[derive(Clone, Debug)]
pub(crate) struct SpaceTimeStencils {
    pub entries: Vec<Vec<Stencil>>,
}

impl SpaceTimeStencils {
    pub fn new(spatial: &SpatialStencils, n: usize, dt: f64) -> Self {
        let half = C64::new(0.5, 0.0);
        let mut entries = vec![vec![Stencil::default(); n + 1]; n + 1];
        for i in 0..n {
            for j in 0..n {
                entries[i][j] = spatial.hess[i][j].clone() * half;
            }
        }
        let wt = C64::new(0.5 / (2.0 * dt), 0.0);
        for i in 0..n {
            let dz = &spatial.dz[i];
            entries[i][n] = (dz.clone().at_time(1) - dz.clone().at_time(-1)) * wt;
            let dzb = &spatial.dzbar[i];
            entries[n][i] = (dzb.clone().at_time(1) - dzb.clone().at_time(-1)) * wt;
        }
        let w = 0.5 / (dt * dt);
        entries[n][n] = Stencil::point(1, C64::new(w, 0.0))
            + Stencil::point(0, C64::new(-2.0 * w, 0.0))
            + Stencil::point(-1, C64::new(w, 0.0));
        SpaceTimeStencils { entries }
    }
}
