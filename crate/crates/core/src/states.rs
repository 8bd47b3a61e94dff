//! Density operators, random state generators and exact quantum Markov chains.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QmcError, Result};
use crate::linalg::{
    fidelity, hermitize, identity, is_finite, kron, outer, partial_trace, trace, trace_distance,
    ComplexMatrix, HermitianSpectrum, SystemLayout,
};

/// Tolerance on Hermiticity, negativity and trace used by [`validate_density`].
pub const DENSITY_TOL: f64 = 1e-10;

/// A validated density matrix together with its subsystem layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
    layout: SystemLayout,
}

/// Check that `m` is Hermitian, PSD and unit trace on `layout`.
///
/// The stored matrix is the hermitized input, which for an exactly
/// Hermitian input is bitwise the input itself.
pub fn validate_density(m: ComplexMatrix, layout: SystemLayout) -> Result<DensityOperator> {
    layout.check_matrix(&m)?;
    if !is_finite(&m) {
        return Err(QmcError::NonFinite);
    }
    let spec = HermitianSpectrum::of_hermitian(&m)?;
    let min = spec.min_eigenvalue();
    if min < -DENSITY_TOL {
        return Err(QmcError::NotPsd {
            min_eigenvalue: min,
        });
    }
    let t = trace(&m);
    let deviation = (t - 1.0).norm();
    if deviation > DENSITY_TOL {
        return Err(QmcError::TraceNotOne {
            trace: t.re,
            deviation,
        });
    }
    Ok(DensityOperator {
        matrix: hermitize(&m),
        layout,
    })
}

impl DensityOperator {
    /// Wrap a matrix the caller has produced from valid states by
    /// structure-preserving operations. Hermitizes, does not validate.
    pub(crate) fn from_trusted(matrix: ComplexMatrix, layout: SystemLayout) -> Self {
        debug_assert_eq!(matrix.nrows(), layout.total_dim());
        Self {
            matrix: hermitize(&matrix),
            layout,
        }
    }

    pub fn new(m: ComplexMatrix, layout: SystemLayout) -> Result<Self> {
        validate_density(m, layout)
    }

    pub fn maximally_mixed(layout: SystemLayout) -> Self {
        let d = layout.total_dim();
        Self {
            matrix: identity(d).scale(1.0 / d as f64),
            layout,
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn dims(&self) -> &[usize] {
        self.layout.dims()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Reinterpret the same matrix under another layout of equal total dimension.
    pub fn with_layout(self, layout: SystemLayout) -> Result<Self> {
        layout.check_matrix(&self.matrix)?;
        Ok(Self {
            matrix: self.matrix,
            layout,
        })
    }

    /// Trace out the listed subsystems.
    pub fn trace_out(&self, traced: &[usize]) -> Result<Self> {
        let m = partial_trace(&self.matrix, &self.layout, traced)?;
        let kept: Vec<usize> = (0..self.layout.arity())
            .filter(|i| !traced.contains(i))
            .collect();
        let layout = self.layout.keep(&kept)?;
        Ok(Self::from_trusted(m, layout))
    }

    /// Reduced state on the listed subsystems (kept in layout order).
    pub fn marginal(&self, keep: &[usize]) -> Result<Self> {
        for &k in keep {
            if k >= self.layout.arity() {
                return Err(QmcError::InvalidSubsystem {
                    index: k,
                    arity: self.layout.arity(),
                });
            }
        }
        let traced: Vec<usize> = (0..self.layout.arity())
            .filter(|i| !keep.contains(i))
            .collect();
        self.trace_out(&traced)
    }

    /// `self (x) other` with concatenated layouts.
    pub fn tensor(&self, other: &DensityOperator) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self::from_trusted(
            kron(&self.matrix, &other.matrix)?,
            layout,
        ))
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn spectrum(&self) -> Result<HermitianSpectrum> {
        HermitianSpectrum::of_psd(&self.matrix)
    }

    /// `(1 - t) self + t other`.
    pub fn mix(&self, other: &DensityOperator, t: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(QmcError::ShapeMismatch {
                expected: self.matrix.shape(),
                found: other.matrix.shape(),
            });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(QmcError::InvalidArgument(format!(
                "mixing weight {t} outside [0, 1]"
            )));
        }
        let m = self.matrix.scale(1.0 - t) + other.matrix.scale(t);
        Ok(Self::from_trusted(m, self.layout.clone()))
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// `rows x cols` matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(rows, cols);
    // Fill row by row so the draw order matches the row-major file format.
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

/// Haar-random unit vector in `C^d`.
pub fn random_state_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..d).map(|_| complex_gaussian(rng)).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix, with
/// the phases of `R`'s diagonal absorbed into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let qr = ginibre(d, d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let z = r[(j, j)];
        let phase = if z.norm() > 0.0 {
            z / z.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Rank-one projector onto a Haar-random direction.
pub fn random_pure<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<DensityOperator> {
    let layout = SystemLayout::single(d)?;
    let v = random_state_vector(d, rng);
    Ok(DensityOperator::from_trusted(outer(&v), layout))
}

/// Induced-measure random state of the given rank: the marginal of a random
/// pure state on `d (x) rank`.
pub fn random_density<R: Rng + ?Sized>(
    d: usize,
    rank: usize,
    rng: &mut R,
) -> Result<DensityOperator> {
    random_density_on(SystemLayout::single(d)?, rank, rng)
}

/// [`random_density`] with an explicit layout.
pub fn random_density_on<R: Rng + ?Sized>(
    layout: SystemLayout,
    rank: usize,
    rng: &mut R,
) -> Result<DensityOperator> {
    let d = layout.total_dim();
    if rank == 0 || rank > d {
        return Err(QmcError::InvalidArgument(format!(
            "rank {rank} outside 1..={d}"
        )));
    }
    // Entries of G, read row-major, are the amplitudes of a pure state on
    // d (x) rank; G G^dag is its marginal on the first factor.
    let g = ginibre(d, rank, rng);
    let norm_sqr: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    let rho = (&g * g.adjoint()).unscale(norm_sqr);
    Ok(DensityOperator::from_trusted(rho, layout))
}

/// Full-rank random state on a layout.
pub fn random_full_rank<R: Rng + ?Sized>(
    layout: SystemLayout,
    rng: &mut R,
) -> Result<DensityOperator> {
    let d = layout.total_dim();
    random_density_on(layout, d, rng)
}

/// Where [`embed_with_max_mixed`] places the maximally mixed factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// `rho (x) I_d/d` (right) or `I_d/d (x) rho` (left).
pub fn embed_with_max_mixed(
    rho: &DensityOperator,
    side: Side,
    d: usize,
) -> Result<DensityOperator> {
    if d == 1 {
        return Ok(rho.clone());
    }
    let mm = DensityOperator::maximally_mixed(SystemLayout::single(d)?);
    match side {
        Side::Right => rho.tensor(&mm),
        Side::Left => mm.tensor(rho),
    }
}

/// One direct-sum block `p_k rho_{A B_L} (x) rho_{B_R C}`.
#[derive(Clone, Debug)]
pub struct MarkovBlock {
    pub weight: f64,
    /// State on `A (x) B_L`, layout `(d_A, b_L)`.
    pub left: DensityOperator,
    /// State on `B_R (x) C`, layout `(b_R, d_C)`.
    pub right: DensityOperator,
    pub b_left: usize,
    pub b_right: usize,
}

/// Direct-sum decomposition of an exact tripartite Markov chain.
#[derive(Clone, Debug)]
pub struct MarkovStructure {
    d_a: usize,
    d_c: usize,
    blocks: Vec<MarkovBlock>,
}

impl MarkovStructure {
    pub fn new(d_a: usize, d_c: usize, blocks: Vec<MarkovBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(QmcError::InvalidArgument("no blocks".into()));
        }
        let total: f64 = blocks.iter().map(|b| b.weight).sum();
        if (total - 1.0).abs() > 1e-12 || blocks.iter().any(|b| !(0.0..=1.0).contains(&b.weight)) {
            return Err(QmcError::InvalidArgument(format!(
                "block weights must be a probability vector (sum {total})"
            )));
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.left.dims() != [d_a, b.b_left] {
                return Err(QmcError::InvalidArgument(format!(
                    "block {k}: left factor has layout {:?}, expected [{d_a}, {}]",
                    b.left.dims(),
                    b.b_left
                )));
            }
            if b.right.dims() != [b.b_right, d_c] {
                return Err(QmcError::InvalidArgument(format!(
                    "block {k}: right factor has layout {:?}, expected [{}, {d_c}]",
                    b.right.dims(),
                    b.b_right
                )));
            }
        }
        Ok(Self { d_a, d_c, blocks })
    }

    pub fn blocks(&self) -> &[MarkovBlock] {
        &self.blocks
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_c(&self) -> usize {
        self.d_c
    }

    /// `sum_k b_{L,k} b_{R,k}`.
    pub fn d_b(&self) -> usize {
        self.blocks.iter().map(|b| b.b_left * b.b_right).sum()
    }

    pub fn layout(&self) -> Result<SystemLayout> {
        SystemLayout::new(vec![self.d_a, self.d_b(), self.d_c])
    }

    /// Random factors and weights for a block spec.
    pub fn random<R: Rng + ?Sized>(
        d_a: usize,
        d_c: usize,
        spec: &BlockSpec,
        rng: &mut R,
    ) -> Result<Self> {
        let weights = match &spec.weights {
            Some(w) => {
                if w.len() != spec.splits.len() {
                    return Err(QmcError::WrongArity {
                        expected: spec.splits.len(),
                        found: w.len(),
                    });
                }
                w.clone()
            }
            None => dirichlet_ones(spec.splits.len(), rng),
        };
        let mut blocks = Vec::with_capacity(spec.splits.len());
        for (&(b_left, b_right), &weight) in spec.splits.iter().zip(&weights) {
            if b_left == 0 || b_right == 0 {
                return Err(QmcError::InvalidArgument(
                    "block dimensions must be positive".into(),
                ));
            }
            let left = random_full_rank(SystemLayout::new(vec![d_a, b_left])?, rng)?;
            let right = random_full_rank(SystemLayout::new(vec![b_right, d_c])?, rng)?;
            blocks.push(MarkovBlock {
                weight,
                left,
                right,
                b_left,
                b_right,
            });
        }
        Self::new(d_a, d_c, blocks)
    }

    /// Assemble `sum_k p_k V_k (rho_{A B_L,k} (x) rho_{B_R,k C}) V_k^dag` where
    /// `V_k` places block `k` on the next `b_L b_R` basis vectors of `B`.
    pub fn assemble(&self) -> Result<DensityOperator> {
        let layout = self.layout()?;
        let (d_a, d_b, d_c) = (self.d_a, self.d_b(), self.d_c);
        let n = layout.total_dim();
        let mut rho = ComplexMatrix::zeros(n, n);
        let mut offset = 0;
        for blk in &self.blocks {
            let (bl, br) = (blk.b_left, blk.b_right);
            let index = |a: usize, l: usize, r: usize, c: usize| {
                a * d_b * d_c + (offset + l * br + r) * d_c + c
            };
            let lm = blk.left.matrix();
            let rm = blk.right.matrix();
            for a in 0..d_a {
                for l in 0..bl {
                    for a2 in 0..d_a {
                        for l2 in 0..bl {
                            let lv = lm[(a * bl + l, a2 * bl + l2)] * blk.weight;
                            if lv == Complex64::new(0.0, 0.0) {
                                continue;
                            }
                            for r in 0..br {
                                for c in 0..d_c {
                                    let row = index(a, l, r, c);
                                    for r2 in 0..br {
                                        for c2 in 0..d_c {
                                            let col = index(a2, l2, r2, c2);
                                            rho[(row, col)] +=
                                                lv * rm[(r * d_c + c, r2 * d_c + c2)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            offset += bl * br;
        }
        Ok(DensityOperator::from_trusted(rho, layout))
    }
}

/// Block splits `(b_L, b_R)` of `B` and optional weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub splits: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl BlockSpec {
    pub fn new(splits: Vec<(usize, usize)>) -> Self {
        Self {
            splits,
            weights: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn d_b(&self) -> usize {
        self.splits.iter().map(|(l, r)| l * r).sum()
    }

    /// Uniform draw over all ordered decompositions of `d_b` into blocks
    /// `(b_L, b_R)` with `sum b_L b_R = d_b`.
    pub fn random<R: Rng + ?Sized>(d_b: usize, rng: &mut R) -> Self {
        let divisors = |m: usize| (1..=m).filter(|q| m % q == 0).count() as f64;
        // count[n] = number of decompositions of n; f64 is exact far past any
        // dimension we accept.
        let mut count = vec![0.0f64; d_b + 1];
        count[0] = 1.0;
        for n in 1..=d_b {
            count[n] = (1..=n).map(|m| divisors(m) * count[n - m]).sum();
        }
        let mut splits = Vec::new();
        let mut rest = d_b;
        while rest > 0 {
            let mut u = rng.random::<f64>() * count[rest];
            let mut chosen = rest;
            for m in 1..=rest {
                let w = divisors(m) * count[rest - m];
                if u < w {
                    chosen = m;
                    break;
                }
                u -= w;
            }
            let divs: Vec<usize> = (1..=chosen).filter(|q| chosen % q == 0).collect();
            let b_left = divs[rng.random_range(0..divs.len())];
            splits.push((b_left, chosen / b_left));
            rest -= chosen;
        }
        Self::new(splits)
    }
}

fn dirichlet_ones<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e.max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    let mut w: Vec<f64> = draws.iter().map(|e| e / total).collect();
    // Put the rounding residue on the last weight so the sum is 1 to 1 ulp.
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = (1.0 - head).max(0.0);
    w
}

/// How [`random_qmc`] obtains its block structure.
#[derive(Clone, Debug)]
pub enum QmcSpec {
    /// Uniformly random block splits with Dirichlet(1) weights.
    Random,
    Blocks(BlockSpec),
    Structure(MarkovStructure),
}

/// Exact quantum Markov chain on `(d_A, d_B, d_C)` from the direct-sum
/// structure.
pub fn random_qmc<R: Rng + ?Sized>(
    layout: &SystemLayout,
    spec: &QmcSpec,
    rng: &mut R,
) -> Result<DensityOperator> {
    if layout.arity() != 3 {
        return Err(QmcError::WrongArity {
            expected: 3,
            found: layout.arity(),
        });
    }
    let (d_a, d_b, d_c) = (layout.dim(0), layout.dim(1), layout.dim(2));
    let structure = match spec {
        QmcSpec::Random => MarkovStructure::random(d_a, d_c, &BlockSpec::random(d_b, rng), rng)?,
        QmcSpec::Blocks(b) => {
            if b.d_b() != d_b {
                return Err(QmcError::SubsystemDimension {
                    index: 1,
                    expected: d_b,
                    found: b.d_b(),
                });
            }
            MarkovStructure::random(d_a, d_c, b, rng)?
        }
        QmcSpec::Structure(s) => {
            if s.d_a() != d_a || s.d_b() != d_b || s.d_c() != d_c {
                return Err(QmcError::LayoutMismatch {
                    layout_dim: layout.total_dim(),
                    rows: s.d_a() * s.d_b() * s.d_c(),
                    cols: s.d_a() * s.d_b() * s.d_c(),
                });
            }
            s.clone()
        }
    };
    let rho = structure.assemble()?;
    rho.with_layout(layout.clone())
}

/// Exact Markov chain `1 - 2 - ... - m` (`m >= 3`).
///
/// Every interior site `i` splits as `sum_k L_{i,k} (x) R_{i,k}` and the
/// block labels `k_2, ..., k_{m-1}` follow a classical Markov chain with
/// random transitions. The state is
/// `sum_k p(k) rho^{k_2}_{1 L_2} (x) rho^{k_2 k_3}_{R_2 L_3} (x) ... (x) rho^{k_{m-1}}_{R_{m-1} m}`
/// with every site-`i` factor placed on block `k_i`, so each cut at an
/// interior site has the tripartite direct-sum form and the chained Petz
/// reconstruction from adjacent pairs is exact.
pub fn random_markov_chain<R: Rng + ?Sized>(
    dims: &[usize],
    rng: &mut R,
) -> Result<DensityOperator> {
    let m = dims.len();
    if m < 3 {
        return Err(QmcError::WrongArity {
            expected: 3,
            found: m,
        });
    }
    let layout = SystemLayout::new(dims.to_vec())?;
    let specs: Vec<BlockSpec> = dims[1..m - 1]
        .iter()
        .map(|&d| BlockSpec::random(d, rng))
        .collect();
    let offsets: Vec<Vec<usize>> = specs
        .iter()
        .map(|s| {
            s.splits
                .iter()
                .scan(0, |acc, (l, r)| {
                    let o = *acc;
                    *acc += l * r;
                    Some(o)
                })
                .collect()
        })
        .collect();
    let nb: Vec<usize> = specs.iter().map(|s| s.splits.len()).collect();
    let init = dirichlet_ones(nb[0], rng);
    let trans: Vec<Vec<Vec<f64>>> = (0..nb.len() - 1)
        .map(|j| (0..nb[j]).map(|_| dirichlet_ones(nb[j + 1], rng)).collect())
        .collect();
    let first: Vec<DensityOperator> = specs[0]
        .splits
        .iter()
        .map(|&(l, _)| random_full_rank(SystemLayout::new(vec![dims[0], l])?, rng))
        .collect::<Result<_>>()?;
    let mids: Vec<Vec<Vec<DensityOperator>>> = (0..nb.len() - 1)
        .map(|j| {
            specs[j]
                .splits
                .iter()
                .map(|&(_, r)| {
                    specs[j + 1]
                        .splits
                        .iter()
                        .map(|&(l, _)| random_full_rank(SystemLayout::new(vec![r, l])?, rng))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let last_spec = &specs[nb.len() - 1];
    let last: Vec<DensityOperator> = last_spec
        .splits
        .iter()
        .map(|&(_, r)| random_full_rank(SystemLayout::new(vec![r, dims[m - 1]])?, rng))
        .collect::<Result<_>>()?;

    let n = layout.total_dim();
    let mut rho = ComplexMatrix::zeros(n, n);
    let mut labels = vec![0usize; nb.len()];
    loop {
        let mut weight = init[labels[0]];
        for j in 0..nb.len() - 1 {
            weight *= trans[j][labels[j]][labels[j + 1]];
        }
        if weight > 0.0 {
            let mut k = first[labels[0]].matrix().clone();
            for j in 0..nb.len() - 1 {
                k = kron(&k, mids[j][labels[j]][labels[j + 1]].matrix())?;
            }
            k = kron(&k, last[*labels.last().unwrap()].matrix())?;
            // radices of the kron factor order, grouped by site
            let mut radix = vec![dims[0]];
            for (j, s) in specs.iter().enumerate() {
                let (l, r) = s.splits[labels[j]];
                radix.push(l * r);
            }
            radix.push(dims[m - 1]);
            let map: Vec<usize> = (0..k.nrows())
                .map(|mut idx| {
                    let mut site = vec![0usize; m];
                    for i in (0..m).rev() {
                        site[i] = idx % radix[i];
                        idx /= radix[i];
                    }
                    for j in 0..nb.len() {
                        site[j + 1] += offsets[j][labels[j]];
                    }
                    site.iter().zip(dims).fold(0, |acc, (&v, &d)| acc * d + v)
                })
                .collect();
            for (a, &ra) in map.iter().enumerate() {
                for (b, &rb) in map.iter().enumerate() {
                    rho[(ra, rb)] += k[(a, b)] * weight;
                }
            }
        }
        // next label tuple
        let mut j = nb.len();
        loop {
            if j == 0 {
                return Ok(DensityOperator::from_trusted(rho, layout));
            }
            j -= 1;
            labels[j] += 1;
            if labels[j] < nb[j] {
                break;
            }
            labels[j] = 0;
        }
    }
}

/// Target discrepancy for [`perturb_away`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Discrepancy {
    /// `1 - F(rho, sigma)`.
    Infidelity(f64),
    /// Full trace norm `||rho - sigma||_1`.
    TraceNorm(f64),
}

impl Discrepancy {
    pub fn value(self) -> f64 {
        match self {
            Discrepancy::Infidelity(v) | Discrepancy::TraceNorm(v) => v,
        }
    }

    pub fn with_value(self, v: f64) -> Self {
        match self {
            Discrepancy::Infidelity(_) => Discrepancy::Infidelity(v),
            Discrepancy::TraceNorm(_) => Discrepancy::TraceNorm(v),
        }
    }

    /// Measure this kind of discrepancy between two states.
    pub fn measure(self, rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
        match self {
            Discrepancy::Infidelity(_) => {
                Ok((1.0 - fidelity(rho.matrix(), sigma.matrix())?).max(0.0))
            }
            Discrepancy::TraceNorm(_) => trace_distance(rho.matrix(), sigma.matrix()),
        }
    }
}

/// Result of a [`perturb_away`] search.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub state: DensityOperator,
    /// Mixing weight on the random direction.
    pub t: f64,
    pub achieved: f64,
    pub redraws: usize,
}

/// Targets below this are returned unperturbed.
pub const PERTURB_RESOLUTION: f64 = 1e-10;
const PERTURB_REL_TOL: f64 = 1e-7;
const PERTURB_MAX_DRAWS: usize = 8;

/// Find `sigma = (1 - t) rho + t W` with the requested discrepancy from `rho`,
/// `W` a random pure state, by bisection on the measured discrepancy.
pub fn perturb_away<R: Rng + ?Sized>(
    rho: &DensityOperator,
    target: Discrepancy,
    rng: &mut R,
) -> Result<Perturbation> {
    let goal = target.value();
    if !(goal >= 0.0) || !goal.is_finite() {
        return Err(QmcError::InvalidArgument(format!("bad target {goal}")));
    }
    if goal < PERTURB_RESOLUTION {
        return Ok(Perturbation {
            state: rho.clone(),
            t: 0.0,
            achieved: 0.0,
            redraws: 0,
        });
    }
    let mut best = 0.0f64;
    for draw in 0..PERTURB_MAX_DRAWS {
        let w = random_pure(rho.dim(), rng)?.with_layout(rho.layout().clone())?;
        match perturb_toward(rho, &w, target) {
            Ok(mut p) => {
                p.redraws = draw;
                return Ok(p);
            }
            Err(QmcError::InfeasibleTarget { reached, .. }) => best = best.max(reached),
            Err(e) => return Err(e),
        }
    }
    Err(QmcError::InfeasibleTarget {
        target: goal,
        reached: best,
    })
}

/// Bisection along the fixed segment from `rho` to `w`.
pub fn perturb_toward(
    rho: &DensityOperator,
    w: &DensityOperator,
    target: Discrepancy,
) -> Result<Perturbation> {
    let goal = target.value();
    if goal < PERTURB_RESOLUTION {
        return Ok(Perturbation {
            state: rho.clone(),
            t: 0.0,
            achieved: 0.0,
            redraws: 0,
        });
    }
    let at = |t: f64| -> Result<(DensityOperator, f64)> {
        let s = rho.mix(w, t)?;
        let v = target.measure(rho, &s)?;
        Ok((s, v))
    };
    let (s_hi, f_hi) = at(1.0)?;
    if f_hi < goal {
        return Err(QmcError::InfeasibleTarget {
            target: goal,
            reached: f_hi,
        });
    }
    let close = |v: f64| (v - goal).abs() <= PERTURB_REL_TOL * goal;
    if close(f_hi) {
        return Ok(Perturbation {
            state: s_hi,
            t: 1.0,
            achieved: f_hi,
            redraws: 0,
        });
    }
    // Both discrepancies are nondecreasing in t along the segment (the trace
    // norm is linear, the infidelity convex with value 0 at t = 0), so a
    // bracketed bisection converges.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = if let Discrepancy::TraceNorm(_) = target {
        goal / f_hi
    } else {
        0.5
    };
    for _ in 0..200 {
        let (s, v) = at(t)?;
        if close(v) {
            return Ok(Perturbation {
                state: s,
                t,
                achieved: v,
                redraws: 0,
            });
        }
        if v < goal {
            lo = t;
        } else {
            hi = t;
        }
        t = 0.5 * (lo + hi);
        if hi - lo < 1e-16 {
            break;
        }
    }
    let (s, v) = at(hi)?;
    Ok(Perturbation {
        state: s,
        t: hi,
        achieved: v,
        redraws: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, vn_entropy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn layout(d: &[usize]) -> SystemLayout {
        SystemLayout::new(d.to_vec()).unwrap()
    }

    #[test]
    fn validate_examples() {
        assert!(validate_density(identity(4).scale(0.25), layout(&[2, 2])).is_ok());
        let bad = diag(&[0.6, 0.6, -0.2, 0.0]);
        match validate_density(bad, layout(&[4])) {
            Err(QmcError::NotPsd { min_eigenvalue }) => {
                assert!((min_eigenvalue + 0.2).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        let rho = random_density(3, 3, &mut rng(1)).unwrap();
        let ok = validate_density(rho.matrix().clone(), layout(&[3])).unwrap();
        assert_eq!(ok.matrix(), rho.matrix());
        match validate_density(rho.matrix().scale(1.01), layout(&[3])) {
            Err(QmcError::TraceNotOne { deviation, .. }) => {
                assert!((deviation - 0.01).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut nh = identity(2).scale(0.5);
        nh[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(
            validate_density(nh, layout(&[2])),
            Err(QmcError::NotHermitian { .. })
        ));
        assert!(matches!(
            validate_density(identity(3), layout(&[2, 2])),
            Err(QmcError::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn random_pure_examples() {
        let one = random_pure(1, &mut rng(0)).unwrap();
        assert!((one.matrix()[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let p = random_pure(2, &mut rng(7)).unwrap();
        assert!((p.purity() - 1.0).abs() < 1e-12);

        let mut r = rng(99);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| random_pure(2, &mut r).unwrap().matrix()[(0, 0)].re)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn random_density_ranks() {
        let full = random_density(2, 2, &mut rng(3)).unwrap();
        assert!((trace(full.matrix()) - 1.0).norm() < 1e-12);
        assert_eq!(full.spectrum().unwrap().rank(1e-12), 2);
        let r2 = random_density(4, 2, &mut rng(4)).unwrap();
        assert_eq!(r2.spectrum().unwrap().rank(1e-10), 2);
        let r1 = random_density(3, 1, &mut rng(5)).unwrap();
        assert!((r1.purity() - 1.0).abs() < 1e-12);
        assert!(random_density(3, 4, &mut rng(5)).is_err());
        assert!(random_density(3, 0, &mut rng(5)).is_err());
    }

    #[test]
    fn random_unitary_is_unitary() {
        let u = random_unitary(4, &mut rng(12));
        assert!((u.adjoint() * &u - identity(4)).norm() < 1e-12);
    }

    #[test]
    fn block_spec_sampler_is_valid_and_covers() {
        let mut r = rng(17);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            let s = BlockSpec::random(4, &mut r);
            assert_eq!(s.d_b(), 4);
            seen.insert(s.splits.clone());
        }
        // count(n) = sum_m tau(m) count(n - m) with tau(1..4) = 1, 2, 2, 3:
        // count = 1, 1, 3, 7, 18.
        assert_eq!(seen.len(), 18);
    }

    #[test]
    fn dirichlet_weights_sum_to_one() {
        let mut r = rng(8);
        for k in 1..6 {
            let w = dirichlet_ones(k, &mut r);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn single_block_is_product_across_b_c() {
        let l = layout(&[2, 3, 2]);
        let spec = QmcSpec::Blocks(BlockSpec::new(vec![(3, 1)]));
        let rho = random_qmc(&l, &spec, &mut rng(2)).unwrap();
        let ab = rho.marginal(&[0, 1]).unwrap();
        let c = rho.marginal(&[2]).unwrap();
        let prod = ab.tensor(&c).unwrap();
        assert!(trace_distance(rho.matrix(), prod.matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn trivial_b_gives_product() {
        let l = layout(&[2, 1, 3]);
        let spec = QmcSpec::Blocks(BlockSpec::new(vec![(1, 1)]));
        let rho = random_qmc(&l, &spec, &mut rng(2)).unwrap();
        let a = rho.marginal(&[0, 1]).unwrap();
        let c = rho.marginal(&[2]).unwrap();
        assert!(trace_distance(rho.matrix(), a.tensor(&c).unwrap().matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn assembled_blocks_are_orthogonal_in_b() {
        let l = layout(&[2, 4, 2]);
        let spec =
            QmcSpec::Blocks(BlockSpec::new(vec![(2, 1), (1, 2)]).with_weights(vec![0.3, 0.7]));
        let rho = random_qmc(&l, &spec, &mut rng(5)).unwrap();
        let b = rho.marginal(&[1]).unwrap();
        // Block 0 occupies B basis vectors {0,1}, block 1 occupies {2,3}.
        let m = b.matrix();
        let mass0 = m[(0, 0)].re + m[(1, 1)].re;
        assert!((mass0 - 0.3).abs() < 1e-12);
        for i in 0..2 {
            for j in 2..4 {
                assert!(m[(i, j)].norm() < 1e-15);
            }
        }
    }

    #[test]
    fn block_dimension_mismatch_errors() {
        let l = layout(&[2, 4, 2]);
        let spec = QmcSpec::Blocks(BlockSpec::new(vec![(2, 1)]));
        assert!(random_qmc(&l, &spec, &mut rng(1)).is_err());
    }

    #[test]
    fn embed_max_mixed() {
        let rho = random_density(2, 2, &mut rng(1)).unwrap();
        assert_eq!(embed_with_max_mixed(&rho, Side::Right, 1).unwrap(), rho);
        let e = embed_with_max_mixed(&rho, Side::Left, 3).unwrap();
        assert_eq!(e.dims(), &[3, 2]);
        let s = vn_entropy(e.matrix()).unwrap() - vn_entropy(rho.matrix()).unwrap();
        assert!((s - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn perturb_zero_target_is_identity() {
        let rho = random_density(3, 3, &mut rng(1)).unwrap();
        let p = perturb_away(&rho, Discrepancy::Infidelity(0.0), &mut rng(2)).unwrap();
        assert_eq!(p.state, rho);
    }

    #[test]
    fn perturb_collinear_trace_case() {
        let rho = DensityOperator::maximally_mixed(layout(&[2]));
        let w = validate_density(diag(&[1.0, 0.0]), layout(&[2])).unwrap();
        // ||W - rho||_1 = 1, so the distance at weight t is exactly t.
        let p = perturb_toward(&rho, &w, Discrepancy::TraceNorm(0.37)).unwrap();
        assert!((p.t - 0.37).abs() < 1e-12);
        assert!((p.achieved - 0.37).abs() < 1e-12);
    }

    #[test]
    fn perturb_hits_infidelity_target() {
        let rho = random_density(4, 4, &mut rng(10)).unwrap();
        let p = perturb_away(&rho, Discrepancy::Infidelity(0.05), &mut rng(11)).unwrap();
        let measured = 1.0 - fidelity(rho.matrix(), p.state.matrix()).unwrap();
        assert!((0.049995..=0.050005).contains(&measured), "{measured}");
    }

    #[test]
    fn perturb_infeasible_target() {
        let rho = random_density(2, 2, &mut rng(10)).unwrap();
        let err = perturb_away(&rho, Discrepancy::TraceNorm(2.5), &mut rng(1)).unwrap_err();
        assert!(matches!(err, QmcError::InfeasibleTarget { .. }));
    }

    #[test]
    fn markov_chain_generator_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for dims in [
            vec![2, 2, 2],
            vec![2, 2, 2, 2],
            vec![2, 3, 2, 2],
            vec![3, 2, 4, 2, 2],
        ] {
            for _ in 0..6 {
                let rho = random_markov_chain(&dims, &mut rng).unwrap();
                assert_eq!(rho.dims(), &dims[..]);
                let rho = validate_density(rho.matrix().clone(), rho.layout().clone()).unwrap();
                let m = dims.len();
                let pairs: Vec<_> = (0..m - 1)
                    .map(|i| rho.marginal(&[i, i + 1]).unwrap())
                    .collect();
                let rec = crate::petz::chain_reconstruct(&pairs).unwrap();
                assert!(trace_distance(rho.matrix(), &rec.matrix).unwrap() < 1e-9);
                for b in 1..m - 1 {
                    let a: Vec<usize> = (0..b).collect();
                    let c: Vec<usize> = (b + 1..m).collect();
                    let i = crate::petz::cmi_of_parts(&rho, &a, &[b], &c).unwrap();
                    assert!(i.abs() < 1e-9, "cut {b}: {i}");
                }
            }
        }
        assert!(random_markov_chain(&[2, 2], &mut rng).is_err());
    }
}
