//! Boundary-data generators and closed-form reference solutions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{SpatialField, TransverseModel};

/// `a·cos(2π k x)` along one real axis.
///
/// Its complex Hessian is `−a π² k² cos(2π k x)`, so the potential is
/// admissible iff `|a| π² k² < 1`.
pub fn cosine(model: &TransverseModel, amplitude: f64, frequency: u32, axis: usize) -> SpatialField {
    let k = f64::from(frequency);
    SpatialField::from_fn(model, |x| amplitude * (2.0 * PI * k * x[axis]).cos())
}

/// Admissibility margin of [`cosine`]: `|a| π² k²`, must stay below 1.
pub fn cosine_curvature(amplitude: f64, frequency: u32) -> f64 {
    amplitude.abs() * PI * PI * f64::from(frequency).powi(2)
}

/// Seeded band-limited field: a random combination of Fourier modes with
/// integer wave-vectors in `[-max_mode, max_mode]^{2n}`, rescaled so that
/// `Σ |c| π² |k|² = amplitude`. Each mode's complex Hessian has operator
/// norm at most `|c| π² |k|²`, so `amplitude < 1` guarantees `h_φ ≻ 0` on the
/// flat model.
pub fn random_bandlimited(model: &TransverseModel, seed: u64, amplitude: f64, max_mode: u32) -> SpatialField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = model.grid().axes();
    let m = max_mode as i64;
    let mut modes: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    let mut index = vec![-m; axes];
    loop {
        // One representative per ±k pair, skipping k = 0.
        let first_nonzero = index.iter().find(|&&v| v != 0).copied();
        if matches!(first_nonzero, Some(v) if v > 0) {
            let k: Vec<f64> = index.iter().map(|&v| v as f64).collect();
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            modes.push((k, a, b));
        }
        let mut axis = axes;
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            if index[axis] < m {
                index[axis] += 1;
                break;
            }
            index[axis] = -m;
        }
        if index.iter().all(|&v| v == -m) {
            break;
        }
    }
    let total: f64 =
        modes.iter().map(|(k, a, b)| (a.abs() + b.abs()) * PI * PI * k.iter().map(|v| v * v).sum::<f64>()).sum();
    let scale = if total > 0.0 { amplitude / total } else { 0.0 };
    SpatialField::from_fn(model, |x| {
        modes
            .iter()
            .map(|(k, a, b)| {
                let th = 2.0 * PI * k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>();
                scale * (a * th.cos() + b * th.sin())
            })
            .sum()
    })
}

/// Spatially constant ε-geodesic from `a` to `b`: `(1−t)a + tb + ½ε t(t−1)`.
pub fn homogeneous_solution(a: f64, b: f64, eps: f64, t: f64) -> f64 {
    (1.0 - t) * a + t * b + 0.5 * eps * t * (t - 1.0)
}

/// Unlifted supersolution for constant data `0 → 0` in complex dimension `n`:
/// `4n(log(1 + t/2) − t log(3/2))`.
pub fn homogeneous_supersolution(n: usize, t: f64) -> f64 {
    4.0 * n as f64 * ((1.0 + 0.5 * t).ln() - t * 1.5f64.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::metric_matrix;

    #[test]
    fn random_fields_are_admissible_and_seeded() {
        let m = TransverseModel::flat(1, &[16, 16]).unwrap();
        let a = random_bandlimited(&m, 7, 0.5, 2);
        let b = random_bandlimited(&m, 7, 0.5, 2);
        let c = random_bandlimited(&m, 8, 0.5, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(metric_matrix(&a, &m).unwrap().admissible);
        assert!(a.max_abs() > 0.0);
    }

    #[test]
    fn closed_forms() {
        assert!((homogeneous_solution(0.0, 1.0, 0.1, 0.5) - 0.4875).abs() < 1e-15);
        assert!((homogeneous_supersolution(1, 0.5) - 0.081_643_6).abs() < 1e-6);
        assert_eq!(homogeneous_supersolution(1, 0.0), 0.0);
        assert!(homogeneous_supersolution(1, 1.0).abs() < 1e-15);
    }
}
