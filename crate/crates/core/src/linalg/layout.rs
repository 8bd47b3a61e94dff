use serde::{Deserialize, Serialize};

use super::{check_dim, ComplexMatrix};
use crate::error::{QmcError, Result};

/// Ordered subsystem dimensions of a composite Hilbert space.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemLayout {
    dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl SystemLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(QmcError::InvalidArgument(
                "a layout needs at least one subsystem".into(),
            ));
        }
        if let Some(index) = dims.iter().position(|&d| d == 0) {
            return Err(QmcError::SubsystemDimension {
                index,
                expected: 1,
                found: 0,
            });
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(QmcError::DimensionTooLarge {
                requested: usize::MAX,
                max: super::max_total_dim(),
            })?;
        check_dim(total)?;
        Ok(Self { dims, labels: None })
    }

    pub fn single(d: usize) -> Result<Self> {
        Self::new(vec![d])
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: Vec<S>) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return Err(QmcError::WrongArity {
                expected: self.dims.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels.into_iter().map(Into::into).collect());
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, index: usize) -> usize {
        self.dims[index]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Layout of the listed subsystems, in their original order.
    pub fn keep(&self, indices: &[usize]) -> Result<Self> {
        let mask = self.mask(indices)?;
        let dims: Vec<usize> = self
            .dims
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&d, _)| d)
            .collect();
        if dims.is_empty() {
            return Self::new(vec![1]);
        }
        let labels = self.labels.as_ref().map(|l| {
            l.iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(s, _)| s.clone())
                .collect()
        });
        Ok(Self { dims, labels })
    }

    /// Layout with subsystems `other` appended after ours.
    pub fn concat(&self, other: &SystemLayout) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::new(dims)
    }

    /// Merge the contiguous range `start..end` into a single subsystem.
    pub fn group(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.arity() {
            return Err(QmcError::InvalidSubsystem {
                index: end,
                arity: self.arity(),
            });
        }
        let mut dims = self.dims[..start].to_vec();
        dims.push(self.dims[start..end].iter().product());
        dims.extend_from_slice(&self.dims[end..]);
        Self::new(dims)
    }

    pub(crate) fn check_matrix(&self, x: &ComplexMatrix) -> Result<()> {
        let n = self.total_dim();
        if x.nrows() != n || x.ncols() != n {
            return Err(QmcError::LayoutMismatch {
                layout_dim: n,
                rows: x.nrows(),
                cols: x.ncols(),
            });
        }
        Ok(())
    }

    fn mask(&self, indices: &[usize]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.arity()];
        for &i in indices {
            if i >= self.arity() {
                return Err(QmcError::InvalidSubsystem {
                    index: i,
                    arity: self.arity(),
                });
            }
            mask[i] = true;
        }
        Ok(mask)
    }
}

/// Index bookkeeping for splitting a composite basis into kept and traced
/// parts. `full[k * traced_dim + t]` is the composite index whose kept digits
/// encode `k` and whose traced digits encode `t`.
pub(crate) struct SplitIndex {
    pub kept_dim: usize,
    pub traced_dim: usize,
    pub full: Vec<usize>,
}

impl SplitIndex {
    pub fn new(layout: &SystemLayout, traced: &[usize]) -> Result<Self> {
        let mask = layout.mask(traced)?;
        let kept_dim: usize = layout
            .dims
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| !m)
            .map(|(&d, _)| d)
            .product();
        let traced_dim: usize = layout
            .dims
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&d, _)| d)
            .product();
        let total = layout.total_dim();
        let mut full = vec![0usize; total];
        let mut digits = vec![0usize; layout.arity()];
        for n in 0..total {
            let mut rem = n;
            for (slot, &d) in digits.iter_mut().zip(&layout.dims).rev() {
                *slot = rem % d;
                rem /= d;
            }
            let (mut k, mut t) = (0usize, 0usize);
            for ((&digit, &d), &m) in digits.iter().zip(&layout.dims).zip(&mask) {
                if m {
                    t = t * d + digit;
                } else {
                    k = k * d + digit;
                }
            }
            full[k * traced_dim + t] = n;
        }
        Ok(Self {
            kept_dim,
            traced_dim,
            full,
        })
    }

    #[inline]
    pub fn at(&self, kept: usize, traced: usize) -> usize {
        self.full[kept * self.traced_dim + traced]
    }
}

/// Trace out the subsystems listed in `traced`. The result acts on the
/// remaining subsystems in their original order. With `traced` empty this
/// returns `x` unchanged.
pub fn partial_trace(
    x: &ComplexMatrix,
    layout: &SystemLayout,
    traced: &[usize],
) -> Result<ComplexMatrix> {
    layout.check_matrix(x)?;
    if traced.is_empty() {
        return Ok(x.clone());
    }
    let split = SplitIndex::new(layout, traced)?;
    let kd = split.kept_dim;
    let mut out = ComplexMatrix::zeros(kd, kd);
    for j in 0..kd {
        for i in 0..kd {
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for t in 0..split.traced_dim {
                acc += x[(split.at(i, t), split.at(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Reorder subsystems: output factor `k` is input factor `perm[k]`.
pub fn permute_subsystems(
    x: &ComplexMatrix,
    layout: &SystemLayout,
    perm: &[usize],
) -> Result<(ComplexMatrix, SystemLayout)> {
    layout.check_matrix(x)?;
    let m = layout.arity();
    let mut seen = vec![false; m];
    if perm.len() != m {
        return Err(QmcError::WrongArity {
            expected: m,
            found: perm.len(),
        });
    }
    for &p in perm {
        if p >= m || seen[p] {
            return Err(QmcError::InvalidSubsystem { index: p, arity: m });
        }
        seen[p] = true;
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| layout.dims[p]).collect();
    let out_layout = SystemLayout::new(new_dims.clone())?;
    let total = layout.total_dim();
    // map[n_out] = n_in
    let mut map = vec![0usize; total];
    let mut digits = vec![0usize; m];
    for (n, slot) in map.iter_mut().enumerate() {
        let mut rem = n;
        for (k, &d) in new_dims.iter().enumerate().rev() {
            digits[perm[k]] = rem % d;
            rem /= d;
        }
        *slot = digits
            .iter()
            .zip(&layout.dims)
            .fold(0usize, |acc, (&dg, &d)| acc * d + dg);
    }
    let out = ComplexMatrix::from_fn(total, total, |i, j| x[(map[i], map[j])]);
    Ok((out, out_layout))
}
