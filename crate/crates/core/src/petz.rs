//! Channels, Petz recovery maps and Markov-chain diagnostics.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QmcError, Result};
use crate::linalg::layout::SplitIndex;
use crate::linalg::{
    herm_sqrt, hermitize, identity, is_finite, kron, max_abs, partial_trace, pinv_sqrt, trace,
    trace_distance, vn_entropy_psd, ComplexMatrix, HermitianSpectrum, SystemLayout,
};
use crate::states::{ginibre, DensityOperator};

/// Deviation of `sum A_i^dag A_i` from the identity tolerated by
/// [`QuantumChannel::new`].
pub const TP_TOL: f64 = 1e-9;
/// Deviation tolerated by [`QuantumChannel::stinespring`].
pub const STINESPRING_TOL: f64 = 1e-8;
/// Marginal disagreement above which a reconstruction is flagged.
pub const MARGINAL_MISMATCH_TOL: f64 = 1e-6;

/// A completely positive map in Kraus form, `d_in -> d_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumChannel {
    in_dim: usize,
    out_dim: usize,
    kraus: Vec<ComplexMatrix>,
}

impl QuantumChannel {
    /// Trace-preserving channel; rejects Kraus sets with
    /// `max |sum A^dag A - I| > 1e-9`.
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let ch = Self::from_kraus(kraus)?;
        let deviation = ch.tp_deviation();
        if deviation > TP_TOL {
            return Err(QmcError::NotTracePreserving { deviation });
        }
        Ok(ch)
    }

    /// Trace-nonincreasing map: `sum A^dag A <= I` up to 1e-9. Petz channels
    /// are of this kind when the reference state is rank deficient.
    pub fn new_trace_nonincreasing(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let ch = Self::from_kraus(kraus)?;
        let top = HermitianSpectrum::of(&ch.kraus_sum())?.max_eigenvalue();
        if top > 1.0 + TP_TOL {
            return Err(QmcError::NotTracePreserving {
                deviation: top - 1.0,
            });
        }
        Ok(ch)
    }

    fn from_kraus(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| QmcError::InvalidArgument("empty Kraus list".into()))?;
        let (out_dim, in_dim) = first.shape();
        for k in &kraus {
            if k.shape() != (out_dim, in_dim) {
                return Err(QmcError::ShapeMismatch {
                    expected: (out_dim, in_dim),
                    found: k.shape(),
                });
            }
            if !is_finite(k) {
                return Err(QmcError::NonFinite);
            }
        }
        Ok(Self {
            in_dim,
            out_dim,
            kraus,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    /// `sum_i A_i^dag A_i`.
    pub fn kraus_sum(&self) -> ComplexMatrix {
        let mut s = ComplexMatrix::zeros(self.in_dim, self.in_dim);
        for a in &self.kraus {
            s += a.adjoint() * a;
        }
        s
    }

    /// `max |sum A_i^dag A_i - I|`.
    pub fn tp_deviation(&self) -> f64 {
        max_abs(&(self.kraus_sum() - identity(self.in_dim)))
    }

    pub fn identity(d: usize) -> Self {
        Self {
            in_dim: d,
            out_dim: d,
            kraus: vec![identity(d)],
        }
    }

    /// Completely depolarizing channel with the `d^2` Weyl operators
    /// `X^a Z^b / d` as Kraus operators.
    pub fn depolarizing(d: usize) -> Self {
        let omega =
            |k: usize| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / d as f64);
        let mut kraus = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                // X^a Z^b |j> = omega^{bj} |j + a>
                let mut w = ComplexMatrix::zeros(d, d);
                for j in 0..d {
                    w[((j + a) % d, j)] = omega((b * j) % d) / d as f64;
                }
                kraus.push(w);
            }
        }
        Self {
            in_dim: d,
            out_dim: d,
            kraus,
        }
    }

    /// Partial trace over `traced`, with Kraus operators
    /// `K_t = sum_k |k><k, t|`.
    pub fn partial_trace(layout: &SystemLayout, traced: &[usize]) -> Result<Self> {
        let split = SplitIndex::new(layout, traced)?;
        let n = layout.total_dim();
        let kraus = (0..split.traced_dim)
            .map(|t| {
                let mut k = ComplexMatrix::zeros(split.kept_dim, n);
                for kept in 0..split.kept_dim {
                    k[(kept, split.at(kept, t))] = Complex64::new(1.0, 0.0);
                }
                k
            })
            .collect();
        Ok(Self {
            in_dim: n,
            out_dim: split.kept_dim,
            kraus,
        })
    }

    /// Random channel with `n_kraus` operators from a Haar-like isometry
    /// `V = G (G^dag G)^{-1/2}`, `G` complex Gaussian of shape
    /// `(n_kraus d_out) x d_in`.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        n_kraus: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_kraus == 0 || n_kraus * out_dim < in_dim {
            return Err(QmcError::InvalidArgument(format!(
                "{n_kraus} Kraus operators of shape {out_dim}x{in_dim} cannot be trace preserving"
            )));
        }
        let g = ginibre(out_dim * n_kraus, in_dim, rng);
        Self::from_generator(&g, out_dim, n_kraus)
    }

    /// Channel whose Stinespring isometry is the polar part of `g`, a
    /// full-column-rank `(n_kraus d_out) x d_in` matrix.
    pub fn from_generator(g: &ComplexMatrix, out_dim: usize, n_kraus: usize) -> Result<Self> {
        let in_dim = g.ncols();
        if n_kraus == 0 || g.nrows() != out_dim * n_kraus || n_kraus * out_dim < in_dim {
            return Err(QmcError::ShapeMismatch {
                expected: (out_dim * n_kraus, in_dim),
                found: g.shape(),
            });
        }
        let gram = hermitize(&(g.adjoint() * g));
        let v = g * pinv_sqrt(&gram)?;
        let iso = StinespringIsometry {
            v,
            in_dim,
            out_dim,
            env_dim: n_kraus,
        };
        iso.to_channel()
    }

    fn check_input(&self, x: &ComplexMatrix, dim: usize) -> Result<()> {
        if x.shape() != (dim, dim) {
            return Err(QmcError::ShapeMismatch {
                expected: (dim, dim),
                found: x.shape(),
            });
        }
        Ok(())
    }

    /// `sum_i A_i x A_i^dag`.
    pub fn apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_input(x, self.in_dim)?;
        let mut out = ComplexMatrix::zeros(self.out_dim, self.out_dim);
        for a in &self.kraus {
            out += a * x * a.adjoint();
        }
        Ok(out)
    }

    /// Heisenberg picture `sum_i A_i^dag x A_i`.
    pub fn adjoint_apply(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_input(x, self.out_dim)?;
        let mut out = ComplexMatrix::zeros(self.in_dim, self.in_dim);
        for a in &self.kraus {
            out += a.adjoint() * x * a;
        }
        Ok(out)
    }

    /// Apply to a density operator with a fresh single-system output layout.
    pub fn apply_state(
        &self,
        rho: &DensityOperator,
        out_layout: SystemLayout,
    ) -> Result<DensityOperator> {
        let out = self.apply(rho.matrix())?;
        out_layout.check_matrix(&out)?;
        Ok(DensityOperator::from_trusted(out, out_layout))
    }

    /// `id_d (x) Phi`.
    pub fn tensor_identity_left(&self, d: usize) -> Result<Self> {
        let id = identity(d);
        let kraus = self
            .kraus
            .iter()
            .map(|a| kron(&id, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            in_dim: d * self.in_dim,
            out_dim: d * self.out_dim,
            kraus,
        })
    }

    /// `Phi (x) id_d`.
    pub fn tensor_identity_right(&self, d: usize) -> Result<Self> {
        let id = identity(d);
        let kraus = self
            .kraus
            .iter()
            .map(|a| kron(a, &id))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            in_dim: d * self.in_dim,
            out_dim: d * self.out_dim,
            kraus,
        })
    }

    /// Stinespring isometry `V = sum_i A_i (x) |i>_E`.
    pub fn stinespring(&self) -> Result<StinespringIsometry> {
        let deviation = self.tp_deviation();
        if deviation > STINESPRING_TOL {
            return Err(QmcError::NotTracePreserving { deviation });
        }
        let env = self.kraus.len();
        let mut v = ComplexMatrix::zeros(self.out_dim * env, self.in_dim);
        for (i, a) in self.kraus.iter().enumerate() {
            for r in 0..self.out_dim {
                for c in 0..self.in_dim {
                    v[(r * env + i, c)] = a[(r, c)];
                }
            }
        }
        Ok(StinespringIsometry {
            v,
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            env_dim: env,
        })
    }
}

/// Isometry `V: C^{d_in} -> C^{d_out} (x) C^{d_env}`.
#[derive(Clone, Debug, PartialEq)]
pub struct StinespringIsometry {
    v: ComplexMatrix,
    in_dim: usize,
    out_dim: usize,
    env_dim: usize,
}

impl StinespringIsometry {
    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    /// `max |V^dag V - I|`.
    pub fn isometry_deviation(&self) -> f64 {
        max_abs(&(self.v.adjoint() * &self.v - identity(self.in_dim)))
    }

    /// `tr_E (V rho V^dag)`.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rho.shape() != (self.in_dim, self.in_dim) {
            return Err(QmcError::ShapeMismatch {
                expected: (self.in_dim, self.in_dim),
                found: rho.shape(),
            });
        }
        let layout = SystemLayout::new(vec![self.out_dim, self.env_dim])?;
        partial_trace(&(&self.v * rho * self.v.adjoint()), &layout, &[1])
    }

    /// Read the Kraus operators back off, `A_i[r, c] = V[r d_env + i, c]`.
    pub fn to_channel(&self) -> Result<QuantumChannel> {
        let kraus = (0..self.env_dim)
            .map(|i| {
                ComplexMatrix::from_fn(self.out_dim, self.in_dim, |r, c| {
                    self.v[(r * self.env_dim + i, c)]
                })
            })
            .collect();
        QuantumChannel::new(kraus)
    }
}

/// Which marginal supplies `rho_B` inside the tripartite Petz map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BMarginal {
    /// `rho_B = tr_C rho_BC`.
    #[default]
    FromBc,
    /// `rho_B = tr_A rho_AB`.
    FromAb,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PetzOptions {
    pub b_marginal: BMarginal,
    /// Support cutoff for `rho_B^{-1/2}`; `None` uses `dim * eps * lambda_max`.
    pub support_tol: Option<f64>,
}

impl PetzOptions {
    pub fn with_b_marginal(b_marginal: BMarginal) -> Self {
        Self {
            b_marginal,
            support_tol: None,
        }
    }
}

/// Output of a tripartite Petz reconstruction with diagnostics.
#[derive(Clone, Debug)]
pub struct PetzReconstruction {
    pub matrix: ComplexMatrix,
    pub layout: SystemLayout,
    pub trace: f64,
    /// `||tr_A rho_AB - tr_C rho_BC||_1`.
    pub marginal_mismatch: f64,
    /// Weight of the other B-marginal outside the support of the chosen `rho_B`.
    pub support_leakage: f64,
}

impl PetzReconstruction {
    pub fn marginals_consistent(&self) -> bool {
        self.marginal_mismatch <= MARGINAL_MISMATCH_TOL
    }

    /// Validate as a density operator; fails when the trace drifted.
    pub fn into_density(self) -> Result<DensityOperator> {
        crate::states::validate_density(self.matrix, self.layout)
    }

    /// Wrap the output, renormalizing nothing; only for callers that accept
    /// the recorded trace deviation.
    pub fn into_density_unchecked(self) -> DensityOperator {
        DensityOperator::from_trusted(self.matrix, self.layout)
    }
}

struct BSide {
    d_a: usize,
    d_b: usize,
    d_c: usize,
    layout: SystemLayout,
    pinv: ComplexMatrix,
    mismatch: f64,
    leakage: f64,
}

fn b_side(
    ab: &ComplexMatrix,
    ab_layout: &SystemLayout,
    bc: &ComplexMatrix,
    bc_layout: &SystemLayout,
    opts: &PetzOptions,
) -> Result<BSide> {
    for l in [ab_layout, bc_layout] {
        if l.arity() < 2 {
            return Err(QmcError::WrongArity {
                expected: 2,
                found: l.arity(),
            });
        }
    }
    ab_layout.check_matrix(ab)?;
    bc_layout.check_matrix(bc)?;
    let na = ab_layout.arity();
    let d_b = ab_layout.dim(na - 1);
    if bc_layout.dim(0) != d_b {
        return Err(QmcError::SubsystemDimension {
            index: 0,
            expected: d_b,
            found: bc_layout.dim(0),
        });
    }
    let d_a = ab_layout.total_dim() / d_b;
    let d_c = bc_layout.total_dim() / d_b;
    let b_ab = hermitize(&partial_trace(
        ab,
        ab_layout,
        &(0..na - 1).collect::<Vec<_>>(),
    )?);
    let b_bc = hermitize(&partial_trace(
        bc,
        bc_layout,
        &(1..bc_layout.arity()).collect::<Vec<_>>(),
    )?);
    let mismatch = trace_distance(&b_ab, &b_bc)?;
    let (chosen, other) = match opts.b_marginal {
        BMarginal::FromBc => (&b_bc, &b_ab),
        BMarginal::FromAb => (&b_ab, &b_bc),
    };
    let spec = HermitianSpectrum::of_psd(chosen)?;
    let tol = opts
        .support_tol
        .unwrap_or_else(|| spec.default_support_tol());
    let pinv = spec.map(|l| if l > tol { 1.0 / l.sqrt() } else { 0.0 });
    let proj = spec.map(|l| if l > tol { 1.0 } else { 0.0 });
    let leakage = (trace(other) - trace(&(&proj * other))).re.max(0.0);
    let mut dims = ab_layout.dims().to_vec();
    dims.extend_from_slice(&bc_layout.dims()[1..]);
    Ok(BSide {
        d_a,
        d_b,
        d_c,
        layout: SystemLayout::new(dims)?,
        pinv,
        mismatch,
        leakage,
    })
}

fn finish(matrix: ComplexMatrix, side: BSide) -> PetzReconstruction {
    let matrix = hermitize(&matrix);
    PetzReconstruction {
        trace: trace(&matrix).re,
        matrix,
        layout: side.layout,
        marginal_mismatch: side.mismatch,
        support_leakage: side.leakage,
    }
}

/// `rho_BC^{1/2} (rho_B^{-1/2} rho_AB rho_B^{-1/2} (x) I_C) rho_BC^{1/2}` on raw matrices.
///
/// `ab_layout` ends with `B`, `bc_layout` starts with it; every other
/// subsystem is carried along, so the output layout is `ab ++ bc[1..]`.
pub(crate) fn petz_raw(
    ab: &ComplexMatrix,
    ab_layout: &SystemLayout,
    bc: &ComplexMatrix,
    bc_layout: &SystemLayout,
    opts: &PetzOptions,
) -> Result<PetzReconstruction> {
    let side = b_side(ab, ab_layout, bc, bc_layout, opts)?;
    let x = herm_sqrt(bc)? * kron(&side.pinv, &identity(side.d_c))?;
    let y = kron(&identity(side.d_a), &x)?;
    let lifted = kron(ab, &identity(side.d_c))?;
    Ok(finish(&y * lifted * y.adjoint(), side))
}

/// Tripartite Petz reconstruction with `rho_B = tr_C rho_BC`.
pub fn petz_reconstruct(
    rho_ab: &DensityOperator,
    rho_bc: &DensityOperator,
) -> Result<PetzReconstruction> {
    petz_reconstruct_with(rho_ab, rho_bc, &PetzOptions::default())
}

pub fn petz_reconstruct_with(
    rho_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    opts: &PetzOptions,
) -> Result<PetzReconstruction> {
    petz_raw(
        rho_ab.matrix(),
        rho_ab.layout(),
        rho_bc.matrix(),
        rho_bc.layout(),
        opts,
    )
}

/// The other operator ordering,
/// `rho_AB^{1/2} rho_B^{-1/2} rho_BC rho_B^{-1/2} rho_AB^{1/2}`.
/// Agrees with [`petz_reconstruct`] on exact Markov chains only.
pub fn petz_reconstruct_swapped(
    rho_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    opts: &PetzOptions,
) -> Result<PetzReconstruction> {
    let (ab, bc) = (rho_ab.matrix(), rho_bc.matrix());
    let side = b_side(ab, rho_ab.layout(), bc, rho_bc.layout(), opts)?;
    let x = herm_sqrt(ab)? * kron(&identity(side.d_a), &side.pinv)?;
    let y = kron(&x, &identity(side.d_c))?;
    let lifted = kron(&identity(side.d_a), bc)?;
    debug_assert_eq!(y.nrows(), side.d_a * side.d_b * side.d_c);
    Ok(finish(&y * lifted * y.adjoint(), side))
}

/// The Petz map as a channel `B -> B (x) C` with Kraus operators
/// `M_i = rho_BC^{1/2} (rho_B^{-1/2} (x) |i>_C)`.
pub fn petz_map_kraus(rho_bc: &DensityOperator) -> Result<QuantumChannel> {
    let layout = rho_bc.layout();
    if layout.arity() < 2 {
        return Err(QmcError::WrongArity {
            expected: 2,
            found: layout.arity(),
        });
    }
    let d_b = layout.dim(0);
    let d_c = layout.total_dim() / d_b;
    let rho_b = partial_trace(
        rho_bc.matrix(),
        layout,
        &(1..layout.arity()).collect::<Vec<_>>(),
    )?;
    let pinv = pinv_sqrt(&hermitize(&rho_b))?;
    let sqrt_bc = herm_sqrt(rho_bc.matrix())?;
    let kraus = (0..d_c)
        .map(|i| {
            let mut e = ComplexMatrix::zeros(d_b * d_c, d_b);
            for b in 0..d_b {
                for b2 in 0..d_b {
                    e[(b * d_c + i, b2)] = pinv[(b, b2)];
                }
            }
            &sqrt_bc * e
        })
        .collect();
    QuantumChannel::new_trace_nonincreasing(kraus)
}

/// `sigma^{1/2} Phi^*(Phi(sigma)^{-1/2} alpha Phi(sigma)^{-1/2}) sigma^{1/2}`.
pub fn general_petz(
    phi: &QuantumChannel,
    sigma: &DensityOperator,
    alpha: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if sigma.dim() != phi.in_dim() {
        return Err(QmcError::ShapeMismatch {
            expected: (phi.in_dim(), phi.in_dim()),
            found: sigma.matrix().shape(),
        });
    }
    if alpha.shape() != (phi.out_dim(), phi.out_dim()) {
        return Err(QmcError::ShapeMismatch {
            expected: (phi.out_dim(), phi.out_dim()),
            found: alpha.shape(),
        });
    }
    let s = herm_sqrt(sigma.matrix())?;
    let inv = pinv_sqrt(&hermitize(&phi.apply(sigma.matrix())?))?;
    let inner = phi.adjoint_apply(&(&inv * alpha * &inv))?;
    Ok(&s * inner * &s)
}

/// The Petz recovery channel of `(Phi, sigma)` with Kraus operators
/// `R_i = sigma^{1/2} A_i^dag Phi(sigma)^{-1/2}`.
pub fn petz_channel(phi: &QuantumChannel, sigma: &DensityOperator) -> Result<QuantumChannel> {
    if sigma.dim() != phi.in_dim() {
        return Err(QmcError::ShapeMismatch {
            expected: (phi.in_dim(), phi.in_dim()),
            found: sigma.matrix().shape(),
        });
    }
    let s = herm_sqrt(sigma.matrix())?;
    let inv = pinv_sqrt(&hermitize(&phi.apply(sigma.matrix())?))?;
    let kraus = phi
        .kraus()
        .iter()
        .map(|a| &s * a.adjoint() * &inv)
        .collect();
    QuantumChannel::new_trace_nonincreasing(kraus)
}

/// Result of [`chain_reconstruct`].
#[derive(Clone, Debug)]
pub struct ChainReconstruction {
    pub matrix: ComplexMatrix,
    pub layout: SystemLayout,
    pub trace: f64,
    /// `||tr_{i+1} rho_{i,i+1} - tr_{i-1} rho_{i-1,i}||_1` for each interior site.
    pub marginal_mismatches: Vec<f64>,
}

impl ChainReconstruction {
    pub fn marginals_consistent(&self) -> bool {
        self.marginal_mismatches
            .iter()
            .all(|&m| m <= MARGINAL_MISMATCH_TOL)
    }

    pub fn into_density(self) -> Result<DensityOperator> {
        crate::states::validate_density(self.matrix, self.layout)
    }

    pub fn into_density_unchecked(self) -> DensityOperator {
        DensityOperator::from_trusted(self.matrix, self.layout)
    }
}

/// `N_{m-1} o ... o N_2 (rho_12)` from the adjacent pair marginals.
///
/// Step `i` treats the accumulated state as `A = 1..i-1`, `B = i` and the
/// pair `rho_{i,i+1}` as `BC`. The factor it consumes is always the last
/// one of the accumulator, so no subsystem permutation is needed.
pub fn chain_reconstruct(pairs: &[DensityOperator]) -> Result<ChainReconstruction> {
    let first = pairs
        .first()
        .ok_or_else(|| QmcError::InvalidArgument("no pair marginals".into()))?;
    for (i, p) in pairs.iter().enumerate() {
        if p.layout().arity() != 2 {
            return Err(QmcError::WrongArity {
                expected: 2,
                found: p.layout().arity(),
            });
        }
        if i > 0 && pairs[i - 1].dims()[1] != p.dims()[0] {
            return Err(QmcError::SubsystemDimension {
                index: i,
                expected: pairs[i - 1].dims()[1],
                found: p.dims()[0],
            });
        }
    }
    let mut mismatches = Vec::with_capacity(pairs.len().saturating_sub(1));
    for w in pairs.windows(2) {
        let left = w[0].trace_out(&[0])?;
        let right = w[1].trace_out(&[1])?;
        mismatches.push(trace_distance(left.matrix(), right.matrix())?);
    }
    let mut acc = first.matrix().clone();
    let mut layout = first.layout().clone();
    for p in &pairs[1..] {
        let step = petz_raw(
            &acc,
            &layout,
            p.matrix(),
            p.layout(),
            &PetzOptions::default(),
        )?;
        acc = step.matrix;
        layout = step.layout;
    }
    Ok(ChainReconstruction {
        trace: trace(&acc).re,
        matrix: acc,
        layout,
        marginal_mismatches: mismatches,
    })
}

/// `I(A:C|B)` in bits for groups of subsystems `a`, `b`, `c`.
pub fn cmi_of_parts(rho: &DensityOperator, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
    let s = |keep: Vec<usize>| -> Result<f64> {
        let mut keep = keep;
        keep.sort_unstable();
        let m = rho.marginal(&keep)?;
        vn_entropy_psd(m.matrix())
    };
    let cat = |x: &[usize], y: &[usize]| [x, y].concat();
    let abc = [a, b, c].concat();
    Ok(s(cat(a, b))? + s(cat(b, c))? - s(b.to_vec())? - s(abc)?)
}

/// `I(A:C|B) = S(AB) + S(BC) - S(B) - S(ABC)` in bits.
pub fn cmi(rho_abc: &DensityOperator) -> Result<f64> {
    let arity = rho_abc.layout().arity();
    if arity != 3 {
        return Err(QmcError::WrongArity {
            expected: 3,
            found: arity,
        });
    }
    cmi_of_parts(rho_abc, &[0], &[1], &[2])
}

fn tripartite_marginals(rho_abc: &DensityOperator) -> Result<(DensityOperator, DensityOperator)> {
    let arity = rho_abc.layout().arity();
    if arity != 3 {
        return Err(QmcError::WrongArity {
            expected: 3,
            found: arity,
        });
    }
    Ok((rho_abc.marginal(&[0, 1])?, rho_abc.marginal(&[1, 2])?))
}

/// `||rho_ABC - Petz(rho_AB, rho_BC)||_1`.
pub fn petz_distance(rho_abc: &DensityOperator) -> Result<f64> {
    let (ab, bc) = tripartite_marginals(rho_abc)?;
    let rec = petz_reconstruct(&ab, &bc)?;
    trace_distance(rho_abc.matrix(), &rec.matrix)
}

/// [`petz_distance`] for the swapped operator ordering.
pub fn petz_distance_swapped(rho_abc: &DensityOperator) -> Result<f64> {
    let (ab, bc) = tripartite_marginals(rho_abc)?;
    let rec = petz_reconstruct_swapped(&ab, &bc, &PetzOptions::default())?;
    trace_distance(rho_abc.matrix(), &rec.matrix)
}
