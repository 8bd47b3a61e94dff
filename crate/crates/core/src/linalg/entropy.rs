use serde::{Deserialize, Serialize};

use super::{trace, ComplexMatrix, HermitianSpectrum};
use crate::error::{QmcError, Result};

fn check_unit_trace(m: &ComplexMatrix) -> Result<()> {
    let t = trace(m);
    let deviation = (t - 1.0).norm();
    if deviation > 1e-10 {
        return Err(QmcError::TraceNotOne {
            trace: t.re,
            deviation,
        });
    }
    Ok(())
}

fn entropy_of(eigenvalues: &[f64]) -> f64 {
    -eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * l.log2())
        .sum::<f64>()
}

/// Von Neumann entropy in bits of a PSD matrix (no trace check).
pub fn vn_entropy_psd(rho: &ComplexMatrix) -> Result<f64> {
    Ok(entropy_of(HermitianSpectrum::of_psd(rho)?.eigenvalues()))
}

/// Von Neumann entropy `-tr(rho log2 rho)` in bits.
pub fn vn_entropy(rho: &ComplexMatrix) -> Result<f64> {
    check_unit_trace(rho)?;
    vn_entropy_psd(rho)
}

/// Relative entropy in bits; infinite when the support of `rho` leaks out
/// of the support of `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "bits", rename_all = "snake_case")]
pub enum RelativeEntropy {
    Finite(f64),
    Infinite,
}

impl RelativeEntropy {
    pub fn value(self) -> f64 {
        match self {
            RelativeEntropy::Finite(v) => v,
            RelativeEntropy::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, RelativeEntropy::Infinite)
    }
}

/// Support leakage above which the relative entropy is declared infinite.
const LEAKAGE_TOL: f64 = 1e-10;

/// `S(rho || sigma) = tr(rho log2 rho) - tr(rho log2 sigma)`.
pub fn relative_entropy(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<RelativeEntropy> {
    check_unit_trace(rho)?;
    check_unit_trace(sigma)?;
    let sr = HermitianSpectrum::of_psd(rho)?;
    let ss = HermitianSpectrum::of_psd(sigma)?;
    let tol = ss.default_support_tol();
    let v = ss.eigenvectors();
    let mut in_support = 0.0;
    let mut cross = 0.0;
    for (j, &mu) in ss.eigenvalues().iter().enumerate() {
        if mu <= tol {
            continue;
        }
        let col = v.column(j);
        let weight = (col.adjoint() * rho * col)[(0, 0)].re;
        in_support += weight;
        cross += weight * mu.log2();
    }
    if 1.0 - in_support > LEAKAGE_TOL {
        return Ok(RelativeEntropy::Infinite);
    }
    let neg_entropy = -entropy_of(sr.eigenvalues());
    Ok(RelativeEntropy::Finite(neg_entropy - cross))
}
