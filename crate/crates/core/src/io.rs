//! JSON matrix files: `{dims, re, im}` with row-major entry lists.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QmcError, Result};
use crate::linalg::{ComplexMatrix, SystemLayout};
use crate::petz::QuantumChannel;
use crate::states::{validate_density, DensityOperator};

/// A matrix in the shared file format. Square matrices on a layout carry the
/// subsystem dims; rectangular ones (Kraus operators) set `dims = [rows]`
/// and `cols`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix, dims: Vec<usize>) -> Self {
        let (r, c) = m.shape();
        let mut re = Vec::with_capacity(r * c);
        let mut im = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self {
            dims,
            cols: if r == c { None } else { Some(c) },
            re,
            im,
        }
    }

    /// Rebuild the matrix, checking the structure but not the content.
    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(QmcError::Format(format!("bad dims {:?}", self.dims)));
        }
        let rows = self
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| QmcError::Format("dims overflow".into()))?;
        let cols = self.cols.unwrap_or(rows);
        if self.re.len() != self.im.len() {
            return Err(QmcError::Format(format!(
                "re has {} entries, im has {}",
                self.re.len(),
                self.im.len()
            )));
        }
        if self.re.len() != rows * cols {
            return Err(QmcError::Format(format!(
                "dims {:?} give a {rows}x{cols} matrix but {} entries are stored",
                self.dims,
                self.re.len()
            )));
        }
        Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
            Complex64::new(self.re[i * cols + j], self.im[i * cols + j])
        }))
    }
}

pub fn state_to_json(rho: &DensityOperator) -> MatrixJson {
    MatrixJson::from_matrix(rho.matrix(), rho.dims().to_vec())
}

/// Parse and validate (Hermitian, PSD, unit trace).
pub fn state_from_json(m: &MatrixJson) -> Result<DensityOperator> {
    let rows: usize = m.dims.iter().product();
    if m.cols.is_some_and(|c| c != rows) {
        return Err(QmcError::Format("density matrix must be square".into()));
    }
    let mat = m.to_matrix()?;
    validate_density(mat, SystemLayout::new(m.dims.clone())?)
}

pub fn save_state(path: impl AsRef<Path>, rho: &DensityOperator) -> Result<()> {
    let s = serde_json::to_string(&state_to_json(rho))?;
    fs::write(path, s)?;
    Ok(())
}

pub fn load_state(path: impl AsRef<Path>) -> Result<DensityOperator> {
    let text = fs::read_to_string(path)?;
    let m: MatrixJson = serde_json::from_str(&text).map_err(|e| QmcError::Format(e.to_string()))?;
    state_from_json(&m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelJson {
    pub in_dim: usize,
    pub out_dim: usize,
    pub kraus: Vec<MatrixJson>,
}

pub fn channel_to_json(phi: &QuantumChannel) -> ChannelJson {
    ChannelJson {
        in_dim: phi.in_dim(),
        out_dim: phi.out_dim(),
        kraus: phi
            .kraus()
            .iter()
            .map(|k| MatrixJson::from_matrix(k, vec![phi.out_dim()]))
            .collect(),
    }
}

/// Parse and check trace preservation.
pub fn channel_from_json(c: &ChannelJson) -> Result<QuantumChannel> {
    let kraus = c
        .kraus
        .iter()
        .map(|k| {
            let m = k.to_matrix()?;
            if m.shape() != (c.out_dim, c.in_dim) {
                return Err(QmcError::Format(format!(
                    "Kraus operator is {:?}, expected ({}, {})",
                    m.shape(),
                    c.out_dim,
                    c.in_dim
                )));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    QuantumChannel::new(kraus)
}

pub fn save_channel(path: impl AsRef<Path>, phi: &QuantumChannel) -> Result<()> {
    fs::write(path, serde_json::to_string(&channel_to_json(phi))?)?;
    Ok(())
}

pub fn load_channel(path: impl AsRef<Path>) -> Result<QuantumChannel> {
    let text = fs::read_to_string(path)?;
    let c: ChannelJson =
        serde_json::from_str(&text).map_err(|e| QmcError::Format(e.to_string()))?;
    channel_from_json(&c)
}
