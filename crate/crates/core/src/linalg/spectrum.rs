use nalgebra::DVector;
use num_complex::Complex64;

use super::{hermiticity_deviation, hermitize, is_finite, ComplexMatrix};
use crate::error::{QmcError, Result};

/// Relative tolerance on `max |A - A^dag|` for Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Negative eigenvalues above `-PSD_CLIP_TOL * ||p||_inf` are rounding noise.
pub const PSD_CLIP_TOL: f64 = 1e-10;
/// Eigenvalues below `-PSD_ERROR_TOL * ||p||_inf` reject the input.
pub const PSD_ERROR_TOL: f64 = 1e-8;

/// Eigendecomposition `U diag(lambda) U^dag` of a Hermitian matrix with
/// eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: ComplexMatrix,
}

impl HermitianSpectrum {
    /// Decompose the hermitized part of `m`. No Hermiticity check.
    pub fn of(m: &ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(QmcError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if !is_finite(m) {
            return Err(QmcError::NonFinite);
        }
        let eig = hermitize(m).symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Decompose after checking Hermiticity within `HERMITIAN_TOL * ||m||_inf`.
    pub fn of_hermitian(m: &ComplexMatrix) -> Result<Self> {
        let spec = Self::of(m)?;
        let scale = spec.operator_norm().max(f64::MIN_POSITIVE);
        let deviation = hermiticity_deviation(m);
        if deviation > HERMITIAN_TOL * scale {
            return Err(QmcError::NotHermitian { deviation });
        }
        Ok(spec)
    }

    /// Decompose a PSD matrix: Hermitian check, then small negative
    /// eigenvalues are clipped to zero and substantially negative ones rejected.
    pub fn of_psd(m: &ComplexMatrix) -> Result<Self> {
        let mut spec = Self::of_hermitian(m)?;
        let scale = spec.operator_norm();
        let min = spec.min_eigenvalue();
        if min < -PSD_ERROR_TOL * scale {
            return Err(QmcError::NotPsd {
                min_eigenvalue: min,
            });
        }
        for v in &mut spec.eigenvalues {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(spec)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &ComplexMatrix {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn operator_norm(&self) -> f64 {
        self.max_eigenvalue().abs().max(self.min_eigenvalue().abs())
    }

    /// `U diag(f(lambda)) U^dag`, hermitized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let vals = DVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&l| Complex64::new(f(l), 0.0)),
        );
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (mut col, v) in scaled.column_iter_mut().zip(vals.iter()) {
            col *= *v;
        }
        hermitize(&(scaled * u.adjoint()))
    }

    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map(|l| l)
    }

    /// Default support cutoff `dim * eps * lambda_max`.
    pub fn default_support_tol(&self) -> f64 {
        self.dim() as f64 * f64::EPSILON * self.max_eigenvalue().max(0.0)
    }

    pub fn rank(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > tol).count()
    }
}

/// Positive square root of a Hermitian PSD matrix.
pub fn herm_sqrt(p: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(HermitianSpectrum::of_psd(p)?.map(f64::sqrt))
}

/// Inverse square root on the support; eigenvalues at or below the default
/// cutoff `dim * eps * lambda_max` map to zero.
pub fn pinv_sqrt(p: &ComplexMatrix) -> Result<ComplexMatrix> {
    let spec = HermitianSpectrum::of_psd(p)?;
    let tol = spec.default_support_tol();
    Ok(spec.map(|l| if l > tol { 1.0 / l.sqrt() } else { 0.0 }))
}

pub fn pinv_sqrt_with_tol(p: &ComplexMatrix, tol: f64) -> Result<ComplexMatrix> {
    let spec = HermitianSpectrum::of_psd(p)?;
    Ok(spec.map(|l| if l > tol { 1.0 / l.sqrt() } else { 0.0 }))
}

/// Orthogonal projector onto the span of eigenvectors with eigenvalue > `tol`
/// (default cutoff when `None`).
pub fn support_projector(p: &ComplexMatrix, tol: Option<f64>) -> Result<ComplexMatrix> {
    let spec = HermitianSpectrum::of_psd(p)?;
    let tol = tol.unwrap_or_else(|| spec.default_support_tol());
    Ok(spec.map(|l| if l > tol { 1.0 } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::super::{diag, frobenius_norm, identity};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wishart(rng: &mut ChaCha8Rng, n: usize, k: usize) -> ComplexMatrix {
        let g = ComplexMatrix::from_fn(n, k, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        &g * g.adjoint()
    }

    fn op_norm(m: &ComplexMatrix) -> f64 {
        m.clone().svd(false, false).singular_values.max()
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        assert!((herm_sqrt(&identity(4)).unwrap() - identity(4)).norm() < 1e-14);
        let s = herm_sqrt(&diag(&[4.0, 9.0])).unwrap();
        assert!((s - diag(&[2.0, 3.0])).norm() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let p = wishart(&mut rng, 3, 3);
            let s = herm_sqrt(&p).unwrap();
            let err = op_norm(&(&s * &s - &p));
            assert!(err <= 1e-9 * op_norm(&p), "err {err}");
            let spec = HermitianSpectrum::of(&s).unwrap();
            assert!(spec.min_eigenvalue() >= -1e-12);
        }
    }

    #[test]
    fn spectrum_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = wishart(&mut rng, 6, 2);
        let spec = HermitianSpectrum::of(&p).unwrap();
        let ev = spec.eigenvalues();
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        let u = spec.eigenvectors();
        assert!((u.adjoint() * u - identity(6)).norm() < 1e-10);
        assert!(frobenius_norm(&(spec.reconstruct() - &p)) < 1e-10 * frobenius_norm(&p));
        assert_eq!(spec.rank(1e-10), 2);
    }

    #[test]
    fn pinv_sqrt_cases() {
        assert!((pinv_sqrt(&identity(3)).unwrap() - identity(3)).norm() < 1e-14);
        let r = pinv_sqrt(&diag(&[4.0, 0.0])).unwrap();
        assert!((r - diag(&[0.5, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn pinv_sqrt_gives_support_projector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = wishart(&mut rng, 3, 2);
        let tr: Complex64 = p.diagonal().iter().sum();
        p /= tr;
        let r = pinv_sqrt(&p).unwrap();
        let proj = &r * &p * &r;
        // Projector oracle: eigenvectors above a fixed spectral cutoff.
        let spec = HermitianSpectrum::of(&p).unwrap();
        let oracle = spec.map(|l| if l > 1e-12 { 1.0 } else { 0.0 });
        assert!((proj - &oracle).norm() < 1e-8);
        assert!((support_projector(&p, None).unwrap() - oracle).norm() < 1e-10);
    }

    #[test]
    fn psd_errors_and_clipping() {
        let err = herm_sqrt(&diag(&[1.0, -0.1])).unwrap_err();
        assert!(matches!(err, QmcError::NotPsd { .. }));
        let ok = herm_sqrt(&diag(&[1.0, -1e-12])).unwrap();
        assert_eq!(ok[(1, 1)].re, 0.0);
        let mut nh = identity(2);
        nh[(0, 1)] = Complex64::new(0.5, 0.0);
        assert!(matches!(
            HermitianSpectrum::of_hermitian(&nh),
            Err(QmcError::NotHermitian { .. })
        ));
    }
}
