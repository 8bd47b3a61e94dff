use serde::{Deserialize, Serialize};

use super::{hermiticity_deviation, trace, ComplexMatrix, HermitianSpectrum};
use crate::error::{QmcError, Result};

/// Schatten exponent: a finite `p >= 1` or the operator norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SchattenP {
    Finite(f64),
    Infinity,
}

impl SchattenP {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(QmcError::InvalidExponent(p));
        }
        Ok(if p.is_infinite() {
            SchattenP::Infinity
        } else {
            SchattenP::Finite(p)
        })
    }

    pub fn value(self) -> f64 {
        match self {
            SchattenP::Finite(p) => p,
            SchattenP::Infinity => f64::INFINITY,
        }
    }

    /// Hoelder conjugate `p'` with `1/p + 1/p' = 1`.
    pub fn conjugate(self) -> SchattenP {
        match self {
            SchattenP::Infinity => SchattenP::Finite(1.0),
            SchattenP::Finite(p) if p == 1.0 => SchattenP::Infinity,
            SchattenP::Finite(p) => SchattenP::Finite(p / (p - 1.0)),
        }
    }

    /// `2p`.
    pub fn doubled(self) -> SchattenP {
        match self {
            SchattenP::Finite(p) => SchattenP::Finite(2.0 * p),
            SchattenP::Infinity => SchattenP::Infinity,
        }
    }

    /// `1/p`, zero for the operator norm.
    pub fn reciprocal(self) -> f64 {
        match self {
            SchattenP::Finite(p) => 1.0 / p,
            SchattenP::Infinity => 0.0,
        }
    }
}

/// Singular values in descending order. Exactly Hermitian inputs use the
/// eigenvalue moduli, which keeps tiny singular values accurate.
pub fn singular_values(x: &ComplexMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = if x.is_square() && hermiticity_deviation(x) == 0.0 {
        match HermitianSpectrum::of(x) {
            Ok(spec) => spec.eigenvalues().iter().map(|l| l.abs()).collect(),
            Err(_) => vec![f64::NAN; x.nrows()],
        }
    } else {
        x.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn norm_from_singular_values(s: &[f64], p: SchattenP) -> f64 {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0.0;
    }
    match p {
        SchattenP::Infinity => smax,
        SchattenP::Finite(p) if p == 1.0 => s.iter().sum(),
        SchattenP::Finite(p) if p == 2.0 => s.iter().map(|v| v * v).sum::<f64>().sqrt(),
        SchattenP::Finite(p) => {
            smax * s
                .iter()
                .map(|v| (v / smax).powf(p))
                .sum::<f64>()
                .powf(1.0 / p)
        }
    }
}

/// Schatten p-norm `(sum s_i^p)^(1/p)`; `p = f64::INFINITY` is the operator norm.
pub fn schatten_norm(x: &ComplexMatrix, p: f64) -> Result<f64> {
    let p = SchattenP::new(p)?;
    Ok(norm_from_singular_values(&singular_values(x), p))
}

pub(crate) fn schatten(x: &ComplexMatrix, p: SchattenP) -> f64 {
    norm_from_singular_values(&singular_values(x), p)
}

fn check_same_shape(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(QmcError::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(())
}

/// Full trace norm `||rho - sigma||_1` (not halved).
pub fn trace_distance(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    check_same_shape(rho, sigma)?;
    Ok(schatten(&(rho - sigma), SchattenP::Finite(1.0)))
}

/// `||rho - sigma||_1 / 2`.
pub fn half_trace_distance(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    Ok(0.5 * trace_distance(rho, sigma)?)
}

/// `tr |p^(1/2) q^(1/2)|` for PSD `p`, `q` of any trace.
pub fn fidelity_psd(p: &ComplexMatrix, q: &ComplexMatrix) -> Result<f64> {
    check_same_shape(p, q)?;
    let sp = HermitianSpectrum::of_psd(p)?.map(f64::sqrt);
    let sq = HermitianSpectrum::of_psd(q)?.map(f64::sqrt);
    Ok(sqrt_fidelity(&sp, &sq))
}

/// Fidelity from precomputed square roots.
pub(crate) fn sqrt_fidelity(sqrt_p: &ComplexMatrix, sqrt_q: &ComplexMatrix) -> f64 {
    (sqrt_p * sqrt_q)
        .svd(false, false)
        .singular_values
        .iter()
        .sum()
}

/// Fidelity `tr |rho^(1/2) sigma^(1/2)|` of two density matrices.
pub fn fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    for m in [rho, sigma] {
        let t = trace(m);
        let deviation = (t - 1.0).norm();
        if deviation > 1e-10 {
            return Err(QmcError::TraceNotOne {
                trace: t.re,
                deviation,
            });
        }
    }
    fidelity_psd(rho, sigma)
}
