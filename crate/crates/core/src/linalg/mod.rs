//! Dense complex linear algebra for finite-dimensional quantum systems.
//!
//! Composite indices are big-endian: for subsystems `d_1, ..., d_m` the
//! basis vector `|i_1 ... i_m>` sits at `((i_1 * d_2 + i_2) * d_3 + ...)`.
//! The first subsystem is the slowest index, matching [`kron`].
//!
//! All matrix functions go through [`HermitianSpectrum`] on the hermitized
//! input `(A + A^dag) / 2`.

mod entropy;
pub(crate) mod layout;
mod norms;
mod spectrum;

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QmcError, Result};

pub use entropy::{relative_entropy, vn_entropy, vn_entropy_psd, RelativeEntropy};
pub use layout::{partial_trace, permute_subsystems, SystemLayout};
pub(crate) use norms::schatten;
pub use norms::{
    fidelity, fidelity_psd, half_trace_distance, schatten_norm, singular_values, trace_distance,
    SchattenP,
};
pub use spectrum::{
    herm_sqrt, pinv_sqrt, pinv_sqrt_with_tol, support_projector, HermitianSpectrum, HERMITIAN_TOL,
    PSD_CLIP_TOL, PSD_ERROR_TOL,
};

/// Dense complex matrix. Storage is nalgebra's column-major layout; the
/// on-disk format is row-major (see [`crate::io`]).
pub type ComplexMatrix = DMatrix<Complex64>;

pub const DEFAULT_MAX_DIM: usize = 4096;

/// Maximum total dimension accepted by [`kron`] and layout construction.
///
/// Read once from `QMCLAB_MAX_DIM`, defaulting to 4096.
pub fn max_total_dim() -> usize {
    static MAX: OnceLock<usize> = OnceLock::new();
    *MAX.get_or_init(|| {
        std::env::var("QMCLAB_MAX_DIM")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&v: &usize| v >= 1)
            .unwrap_or(DEFAULT_MAX_DIM)
    })
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

/// Diagonal matrix with real entries.
pub fn diag(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    let mut m = zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = Complex64::new(v, 0.0);
    }
    m
}

/// Build a matrix from row-major real entries.
pub fn from_real_rows(rows: usize, cols: usize, entries: &[f64]) -> ComplexMatrix {
    assert_eq!(entries.len(), rows * cols);
    ComplexMatrix::from_fn(rows, cols, |i, j| {
        Complex64::new(entries[i * cols + j], 0.0)
    })
}

/// `|v><v|` for a column vector given as a slice.
pub fn outer(v: &[Complex64]) -> ComplexMatrix {
    let n = v.len();
    ComplexMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

/// `(A + A^dag) / 2`. The result is exactly Hermitian in floating point.
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Hilbert-Schmidt norm `sqrt(sum |x_ij|^2)`.
pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entrywise deviation `max |A_ij - conj(A_ji)|`.
pub fn hermiticity_deviation(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub(crate) fn check_dim(requested: usize) -> Result<()> {
    let max = max_total_dim();
    if requested > max {
        return Err(QmcError::DimensionTooLarge { requested, max });
    }
    Ok(())
}

/// Kronecker product `a (x) b`; `a` is the slow index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a
        .nrows()
        .checked_mul(b.nrows())
        .ok_or(QmcError::DimensionTooLarge {
            requested: usize::MAX,
            max: max_total_dim(),
        })?;
    let cols = a
        .ncols()
        .checked_mul(b.ncols())
        .ok_or(QmcError::DimensionTooLarge {
            requested: usize::MAX,
            max: max_total_dim(),
        })?;
    check_dim(rows)?;
    check_dim(cols)?;
    Ok(a.kronecker(b))
}

/// `I_left (x) m (x) I_right`.
pub fn embed(m: &ComplexMatrix, left: usize, right: usize) -> Result<ComplexMatrix> {
    let mut out = if left == 1 {
        m.clone()
    } else {
        kron(&identity(left), m)?
    };
    if right != 1 {
        out = kron(&out, &identity(right))?;
    }
    Ok(out)
}

/// Product of Hermitian-intended factors, hermitized afterwards.
pub fn sandwich(outer: &ComplexMatrix, inner: &ComplexMatrix) -> ComplexMatrix {
    hermitize(&(outer * inner * outer.adjoint()))
}
