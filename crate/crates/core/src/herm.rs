//! Small dense Hermitian helpers.

use nalgebra::{DMatrix, DVector};

use crate::C64;

pub type HermitianMatrix = DMatrix<C64>;

/// `true` when a Cholesky factorization with strictly positive real pivots
/// exists. (nalgebra's complex Cholesky takes complex square roots, so it
/// accepts indefinite matrices.)
pub fn is_positive_definite(m: &HermitianMatrix) -> bool {
    let n = m.nrows();
    let mut l = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / d;
        }
    }
    true
}

/// Determinant by LU factorization; the imaginary part of a Hermitian
/// determinant is rounding noise and is dropped.
pub fn det(m: &HermitianMatrix) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant().re
}

/// Inverse, re-symmetrized so the result is exactly Hermitian.
pub fn inverse(m: &HermitianMatrix) -> Option<HermitianMatrix> {
    let inv = m.clone().try_inverse()?;
    Some(hermitian_part(&inv))
}

pub fn hermitian_part(m: &HermitianMatrix) -> HermitianMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `wᴴ M w`, real for Hermitian `M`.
pub fn quad_form(m: &HermitianMatrix, w: &DVector<C64>) -> f64 {
    w.dotc(&(m * w)).re
}

/// `bᴴ M a`; the pairing `⟨a, b⟩` uses twice its real part.
pub fn sesquilinear(m: &HermitianMatrix, a: &DVector<C64>, b: &DVector<C64>) -> C64 {
    b.dotc(&(m * a))
}

/// Maximum entrywise distance between `m` and its conjugate transpose.
pub fn hermiticity_defect(m: &HermitianMatrix) -> f64 {
    let adj = m.adjoint();
    m.iter().zip(adj.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

/// Elementary symmetric polynomials `σ_0..σ_k` of the eigenvalues of `m`,
/// via Newton's identities on power traces.
pub fn elementary_symmetric(m: &HermitianMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut power_traces = Vec::with_capacity(n);
    let mut pow = m.clone();
    for _ in 0..n {
        power_traces.push(pow.trace().re);
        pow = &pow * m;
    }
    let mut sigma = vec![1.0; n + 1];
    for k in 1..=n {
        let mut acc = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * sigma[k - i] * power_traces[i - 1];
        }
        sigma[k] = acc / k as f64;
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn det_and_inverse_of_2x2() {
        let m = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 0.5), c(0.5, -0.5), c(1.0, 0.0)]);
        assert!((det(&m) - 1.5).abs() < 1e-14);
        let inv = inverse(&m).unwrap();
        let id = &m * &inv;
        assert!((id[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(id[(0, 1)].norm() < 1e-14);
        assert!(is_positive_definite(&m));
        assert_eq!(hermiticity_defect(&inv), 0.0);
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(!is_positive_definite(&m));
        assert!(det(&m) < 0.0);
    }

    #[test]
    fn elementary_symmetric_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![c(2.0, 0.0), c(3.0, 0.0), c(5.0, 0.0)]));
        let s = elementary_symmetric(&m);
        assert_eq!(s.len(), 4);
        assert!((s[1] - 10.0).abs() < 1e-12);
        assert!((s[2] - 31.0).abs() < 1e-12);
        assert!((s[3] - 30.0).abs() < 1e-12);
    }
}
