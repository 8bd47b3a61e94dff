//! Evaluators for the Petz-map continuity inequalities and the fidelity,
//! trace-norm and Schatten-norm relations they are assembled from.
//!
//! Each check returns a [`BoundReport`] with `slack = rhs - lhs`. Checks with
//! several top-level relations report the smallest slack and name the binding
//! relation in a `binding:` tag. Proof steps are not part of pass/fail; they
//! go to `aux` as `<step>.lhs`, `<step>.rhs` and `<step>.slack`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{QmcError, Result};
use crate::linalg::{
    fidelity_psd, frobenius_norm, hermiticity_deviation, hermitize, identity, kron, partial_trace,
    schatten, singular_values, trace, trace_distance, ComplexMatrix, HermitianSpectrum, SchattenP,
    SystemLayout,
};
use crate::petz::{petz_channel, QuantumChannel};
use crate::states::{
    ginibre, random_density_on, random_full_rank, random_pure, random_qmc, DensityOperator, QmcSpec,
};

/// Default pass threshold: a report passes when `slack >= -REPORT_TOL`.
pub const REPORT_TOL: f64 = 1e-8;
const UNIT_TRACE_TOL: f64 = 1e-10;
const SUPPORT_LEAK_TOL: f64 = 1e-10;
const MARGINAL_TOL: f64 = 1e-6;

/// One evaluated inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// SHA-256 over the shapes and f64 bit patterns of every input matrix.
    pub inputs_digest: String,
    pub seed: u64,
    pub trial: Option<u64>,
    pub dims: Vec<Vec<usize>>,
    pub aux: BTreeMap<String, f64>,
    pub tags: Vec<String>,
}

impl BoundReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.slack >= -tol
    }

    pub fn with_trial(mut self, seed: u64, trial: u64) -> Self {
        self.seed = seed;
        self.trial = Some(trial);
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Slack of a proof step recorded in `aux`.
    pub fn step_slack(&self, step: &str) -> Option<f64> {
        self.aux.get(&format!("{step}.slack")).copied()
    }
}

/// SHA-256 hex digest of a list of matrices.
pub fn matrix_digest(mats: &[&ComplexMatrix]) -> String {
    let mut h = Sha256::new();
    for m in mats {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                h.update(m[(i, j)].re.to_bits().to_le_bytes());
                h.update(m[(i, j)].im.to_bits().to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

struct Report {
    name: String,
    relations: Vec<(String, f64, f64)>,
    aux: BTreeMap<String, f64>,
    tags: Vec<String>,
    dims: Vec<Vec<usize>>,
    digest: String,
}

impl Report {
    fn new(name: impl Into<String>, dims: Vec<Vec<usize>>, mats: &[&ComplexMatrix]) -> Self {
        Self {
            name: name.into(),
            relations: Vec::new(),
            aux: BTreeMap::new(),
            tags: Vec::new(),
            dims,
            digest: matrix_digest(mats),
        }
    }

    fn relation(&mut self, key: &str, lhs: f64, rhs: f64) {
        self.relations.push((key.to_string(), lhs, rhs));
        self.step(key, lhs, rhs);
    }

    fn step(&mut self, key: &str, lhs: f64, rhs: f64) {
        self.value(&format!("{key}.lhs"), lhs);
        self.value(&format!("{key}.rhs"), rhs);
        self.value(&format!("{key}.slack"), rhs - lhs);
    }

    fn value(&mut self, key: &str, v: f64) {
        if v.is_finite() {
            self.aux.insert(key.to_string(), v);
        } else {
            self.tag(&format!("non-finite:{key}"));
        }
    }

    fn tag(&mut self, t: &str) {
        if !self.tags.iter().any(|x| x == t) {
            self.tags.push(t.to_string());
        }
    }

    fn finish(mut self) -> BoundReport {
        let mut best: Option<(usize, f64)> = None;
        for (i, (_, l, r)) in self.relations.iter().enumerate() {
            let s = r - l;
            let worse = match best {
                None => true,
                Some((_, b)) => s.is_nan() || s < b,
            };
            if worse {
                best = Some((i, s));
            }
        }
        let (idx, _) = best.expect("report without relations");
        let (key, lhs, rhs) = self.relations[idx].clone();
        if self.relations.len() > 1 {
            self.tag(&format!("binding:{key}"));
        }
        BoundReport {
            bound_name: self.name,
            lhs,
            rhs,
            slack: rhs - lhs,
            inputs_digest: self.digest,
            seed: 0,
            trial: None,
            dims: self.dims,
            aux: self.aux,
            tags: self.tags,
        }
    }
}

fn p_label(p: SchattenP) -> String {
    match p {
        SchattenP::Infinity => "inf".to_string(),
        SchattenP::Finite(v) => format!("{v}"),
    }
}

/// `p` itself when finite, always `inv_p = 1/p` (zero for the operator norm).
fn record_exponent(rep: &mut Report, p: SchattenP) {
    if let SchattenP::Finite(v) = p {
        rep.value("p", v);
    }
    rep.value("inv_p", p.reciprocal());
}

fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(HermitianSpectrum::of_psd(m)?.map(f64::sqrt))
}

fn unit_trace(m: &ComplexMatrix) -> bool {
    (trace(m) - 1.0).norm() <= UNIT_TRACE_TOL
}

// ---------------------------------------------------------------------------
// Tripartite bookkeeping

#[derive(Clone, Copy)]
struct Tri {
    d_a: usize,
    d_b: usize,
    d_c: usize,
}

impl Tri {
    fn of(ab: &DensityOperator, bc: &DensityOperator) -> Result<Self> {
        for s in [ab, bc] {
            if s.layout().arity() != 2 {
                return Err(QmcError::WrongArity {
                    expected: 2,
                    found: s.layout().arity(),
                });
            }
        }
        if ab.dims()[1] != bc.dims()[0] {
            return Err(QmcError::SubsystemDimension {
                index: 0,
                expected: ab.dims()[1],
                found: bc.dims()[0],
            });
        }
        Ok(Self {
            d_a: ab.dims()[0],
            d_b: ab.dims()[1],
            d_c: bc.dims()[1],
        })
    }

    fn quad(
        rho_ab: &DensityOperator,
        sig_ab: &DensityOperator,
        rho_bc: &DensityOperator,
        sig_bc: &DensityOperator,
    ) -> Result<Self> {
        let t = Self::of(rho_ab, rho_bc)?;
        for (r, s) in [(rho_ab, sig_ab), (rho_bc, sig_bc)] {
            if r.dims() != s.dims() {
                return Err(QmcError::LayoutMismatch {
                    layout_dim: r.dim(),
                    rows: s.dim(),
                    cols: s.dim(),
                });
            }
        }
        Ok(t)
    }

    fn dims(&self) -> Vec<Vec<usize>> {
        vec![vec![self.d_a, self.d_b, self.d_c]]
    }

    fn lift_ab(&self, x: &ComplexMatrix) -> ComplexMatrix {
        kron(x, &identity(self.d_c)).expect("layout checked")
    }

    fn lift_bc(&self, x: &ComplexMatrix) -> ComplexMatrix {
        kron(&identity(self.d_a), x).expect("layout checked")
    }

    fn lift_b(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let xb = kron(x, &identity(self.d_c)).expect("layout checked");
        kron(&identity(self.d_a), &xb).expect("layout checked")
    }

    /// `(I_A (x) bc)(I_A (x) b (x) I_C)(ab (x) I_C)`.
    fn chain(&self, bc: &ComplexMatrix, b: &ComplexMatrix, ab: &ComplexMatrix) -> ComplexMatrix {
        self.lift_bc(bc) * self.lift_b(b) * self.lift_ab(ab)
    }
}

/// Square roots and the `Z = rho_BC^{1/2} rho_B^{-1/2} rho_AB^{1/2}` factor of
/// one side of a Petz comparison; the Petz output is `Z Z^dag`.
struct Side {
    sqrt_ab: ComplexMatrix,
    sqrt_bc: ComplexMatrix,
    b: ComplexMatrix,
    sqrt_b: ComplexMatrix,
    pinv_b: ComplexMatrix,
    proj_b: ComplexMatrix,
    z: ComplexMatrix,
    petz: ComplexMatrix,
}

impl Side {
    fn new(t: &Tri, ab: &ComplexMatrix, bc: &ComplexMatrix, b: ComplexMatrix) -> Result<Self> {
        let sqrt_ab = sqrt_psd(ab)?;
        let sqrt_bc = sqrt_psd(bc)?;
        let spec = HermitianSpectrum::of_psd(&b)?;
        let tol = spec.default_support_tol();
        let sqrt_b = spec.map(f64::sqrt);
        let pinv_b = spec.map(|l| if l > tol { 1.0 / l.sqrt() } else { 0.0 });
        let proj_b = spec.map(|l| if l > tol { 1.0 } else { 0.0 });
        let z = t.chain(&sqrt_bc, &pinv_b, &sqrt_ab);
        let petz = hermitize(&(&z * z.adjoint()));
        Ok(Self {
            sqrt_ab,
            sqrt_bc,
            b,
            sqrt_b,
            pinv_b,
            proj_b,
            z,
            petz,
        })
    }
}

fn b_of_ab(ab: &DensityOperator) -> Result<ComplexMatrix> {
    Ok(hermitize(&partial_trace(ab.matrix(), ab.layout(), &[0])?))
}

fn b_of_bc(bc: &DensityOperator) -> Result<ComplexMatrix> {
    Ok(hermitize(&partial_trace(bc.matrix(), bc.layout(), &[1])?))
}

/// `rho_B = tr_A rho_AB`, `sigma_B = tr_C sigma_BC`.
fn sides(
    t: &Tri,
    rho_ab: &DensityOperator,
    sig_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    sig_bc: &DensityOperator,
) -> Result<(Side, Side)> {
    let r = Side::new(t, rho_ab.matrix(), rho_bc.matrix(), b_of_ab(rho_ab)?)?;
    let s = Side::new(t, sig_ab.matrix(), sig_bc.matrix(), b_of_bc(sig_bc)?)?;
    Ok((r, s))
}

fn leakage(proj: &ComplexMatrix, m: &ComplexMatrix) -> f64 {
    (trace(m) - trace(&(proj * m))).re.max(0.0)
}

fn record_side_diagnostics(rep: &mut Report, r: &Side, s: &Side) {
    let leak = leakage(&s.proj_b, &r.b).max(leakage(&r.proj_b, &s.b));
    rep.value("support_leakage", leak);
    if leak > SUPPORT_LEAK_TOL {
        rep.tag("support-mismatch");
    }
    let (tr_r, tr_s) = (trace(&r.petz).re, trace(&s.petz).re);
    rep.value("petz_trace_rho", tr_r);
    rep.value("petz_trace_sigma", tr_s);
    if (tr_r - 1.0).abs() > UNIT_TRACE_TOL || (tr_s - 1.0).abs() > UNIT_TRACE_TOL {
        rep.tag("subnormalized");
    }
}

fn record_consistency(
    rep: &mut Report,
    key: &str,
    ab: &DensityOperator,
    bc: &DensityOperator,
) -> Result<()> {
    let mismatch = trace_distance(&b_of_ab(ab)?, &b_of_bc(bc)?)?;
    rep.value(key, mismatch);
    Ok(())
}

struct SqrtGaps {
    ab: f64,
    bc: f64,
    b: f64,
}

impl SqrtGaps {
    fn l2(r: &Side, s: &Side) -> Self {
        Self {
            ab: frobenius_norm(&(&r.sqrt_ab - &s.sqrt_ab)),
            bc: frobenius_norm(&(&r.sqrt_bc - &s.sqrt_bc)),
            b: frobenius_norm(&(&r.sqrt_b - &s.sqrt_b)),
        }
    }

    fn sum(&self) -> f64 {
        self.ab + self.bc + self.b
    }
}

/// Per-term steps of the three-way telescoping of `Z_rho - Z_sigma`.
fn core_steps(rep: &mut Report, t: &Tri, r: &Side, s: &Side, g: &SqrtGaps) {
    let bc = frobenius_norm(&t.chain(&(&r.sqrt_bc - &s.sqrt_bc), &r.pinv_b, &r.sqrt_ab));
    let b = frobenius_norm(&t.chain(&s.sqrt_bc, &(&r.pinv_b - &s.pinv_b), &r.sqrt_ab));
    let ab = frobenius_norm(&t.chain(&s.sqrt_bc, &s.pinv_b, &(&r.sqrt_ab - &s.sqrt_ab)));
    rep.step("step_bc", bc, g.bc);
    rep.step("step_b", b, g.b);
    rep.step("step_ab", ab, g.ab);
}

// ---------------------------------------------------------------------------
// Checks

/// `||Z_rho - Z_sigma||_2 <= sum of the three square-root gaps`, plus the
/// two-term variant with `sigma_AB := rho_AB`.
pub fn check_core_l2(
    rho_ab: &DensityOperator,
    sig_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    sig_bc: &DensityOperator,
) -> Result<BoundReport> {
    let t = Tri::quad(rho_ab, sig_ab, rho_bc, sig_bc)?;
    let (r, s) = sides(&t, rho_ab, sig_ab, rho_bc, sig_bc)?;
    let mut rep = Report::new(
        "core_l2",
        t.dims(),
        &[
            rho_ab.matrix(),
            sig_ab.matrix(),
            rho_bc.matrix(),
            sig_bc.matrix(),
        ],
    );
    let g = SqrtGaps::l2(&r, &s);
    rep.relation("main", frobenius_norm(&(&r.z - &s.z)), g.sum());
    let z_half = t.chain(&s.sqrt_bc, &s.pinv_b, &r.sqrt_ab);
    rep.relation("simplified", frobenius_norm(&(&r.z - z_half)), g.bc + g.b);
    core_steps(&mut rep, &t, &r, &s, &g);
    record_side_diagnostics(&mut rep, &r, &s);
    Ok(rep.finish())
}

/// `sqrt(2) sqrt(1 - F) <= ||rho^{1/2} - sigma^{1/2}||_2 <= 2 sqrt(1 - F)`.
pub fn check_infidelity_sqrt(
    rho: &DensityOperator,
    sigma: &DensityOperator,
) -> Result<BoundReport> {
    same_dim(rho, sigma)?;
    let (sr, ss) = (sqrt_psd(rho.matrix())?, sqrt_psd(sigma.matrix())?);
    let f = svd_sum(&(&sr * &ss));
    let inf = (1.0 - f).max(0.0);
    let mid = frobenius_norm(&(&sr - &ss));
    let mut rep = Report::new(
        "infidelity_sqrt",
        vec![rho.dims().to_vec()],
        &[rho.matrix(), sigma.matrix()],
    );
    rep.value("fidelity", f);
    rep.relation("lower", 2f64.sqrt() * inf.sqrt(), mid);
    rep.relation("upper", mid, 2.0 * inf.sqrt());
    Ok(rep.finish())
}

fn svd_sum(m: &ComplexMatrix) -> f64 {
    singular_values(m).iter().sum()
}

fn same_dim(rho: &DensityOperator, sigma: &DensityOperator) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(QmcError::ShapeMismatch {
            expected: rho.matrix().shape(),
            found: sigma.matrix().shape(),
        });
    }
    Ok(())
}

fn same_shape(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(QmcError::ShapeMismatch {
            expected: x.shape(),
            found: y.shape(),
        });
    }
    Ok(())
}

fn normalized(x: &ComplexMatrix, norm: f64) -> Result<ComplexMatrix> {
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(QmcError::ZeroMatrix);
    }
    Ok(x.unscale(norm))
}

/// `F(x^dag x, y^dag y) >= 1 - ||x - y||_2^2 / 2` after scaling both inputs to
/// unit Hilbert-Schmidt norm. Reported as `1 - F <= ||x - y||_2^2 / 2`.
pub fn check_gram_fidelity(x: &ComplexMatrix, y: &ComplexMatrix) -> Result<BoundReport> {
    same_shape(x, y)?;
    let (nx, ny) = (frobenius_norm(x), frobenius_norm(y));
    let (xn, yn) = (normalized(x, nx)?, normalized(y, ny)?);
    let mut rep = Report::new("gram_fidelity", vec![vec![x.nrows(), x.ncols()]], &[x, y]);
    rep.value("norm_x", nx);
    rep.value("norm_y", ny);
    if (nx - 1.0).abs() > UNIT_TRACE_TOL || (ny - 1.0).abs() > UNIT_TRACE_TOL {
        rep.tag("normalized");
    }
    let f = fidelity_psd(
        &hermitize(&(xn.adjoint() * &xn)),
        &hermitize(&(yn.adjoint() * &yn)),
    )?;
    rep.value("fidelity", f);
    let d = frobenius_norm(&(&xn - &yn));
    rep.relation("main", 1.0 - f, 0.5 * d * d);
    Ok(rep.finish())
}

/// `||p^{1/2} - q^{1/2}||_2^2 <= ||p - q||_1 <= 2 ||p^{1/2} - q^{1/2}||_2`.
///
/// The upper half enters pass/fail only for unit-trace inputs; otherwise it
/// is kept in `aux` and the report is tagged `non-unit-trace`.
pub fn check_powers_stormer(p: &ComplexMatrix, q: &ComplexMatrix) -> Result<BoundReport> {
    same_shape(p, q)?;
    let (sp, sq) = (sqrt_psd(p)?, sqrt_psd(q)?);
    let gap = frobenius_norm(&(&sp - &sq));
    let l1 = schatten(&(p - q), SchattenP::Finite(1.0));
    let mut rep = Report::new("powers_stormer", vec![vec![p.nrows()]], &[p, q]);
    rep.value("trace_p", trace(p).re);
    rep.value("trace_q", trace(q).re);
    rep.relation("lower", gap * gap, l1);
    if unit_trace(p) && unit_trace(q) {
        rep.relation("upper", l1, 2.0 * gap);
    } else {
        rep.tag("non-unit-trace");
        rep.step("upper", l1, 2.0 * gap);
    }
    Ok(rep.finish())
}

/// `|| |x| - |y| ||_{2p}^2 <= ||x^dag x - y^dag y||_p <= 2 ||x - y||_{2p}`
/// after scaling both inputs to unit `2p`-norm.
pub fn check_schatten_4to2(x: &ComplexMatrix, y: &ComplexMatrix, p: f64) -> Result<BoundReport> {
    let p = SchattenP::new(p)?;
    same_shape(x, y)?;
    let q = p.doubled();
    let (nx, ny) = (schatten(x, q), schatten(y, q));
    let (xn, yn) = (normalized(x, nx)?, normalized(y, ny)?);
    let mut rep = Report::new(
        format!("schatten_4to2_p{}", p_label(p)),
        vec![vec![x.nrows(), x.ncols()]],
        &[x, y],
    );
    record_exponent(&mut rep, p);
    rep.value("norm_x", nx);
    rep.value("norm_y", ny);
    let (gx, gy) = (
        hermitize(&(xn.adjoint() * &xn)),
        hermitize(&(yn.adjoint() * &yn)),
    );
    let abs_gap = schatten(&(sqrt_psd(&gx)? - sqrt_psd(&gy)?), q);
    let gram_gap = schatten(&(&gx - &gy), p);
    let diff = schatten(&(&xn - &yn), q);
    rep.relation("lower", abs_gap * abs_gap, gram_gap);
    rep.relation("upper", gram_gap, 2.0 * diff);
    Ok(rep.finish())
}

fn infidelity(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok((1.0 - fidelity_psd(a, b)?).max(0.0))
}

/// `F(Petz(rho), Petz(sigma)) >= 1 - 2 (sqrt(d1) + sqrt(d2) + sqrt(d3))^2`,
/// reported as `1 - F <= 2 (sum sqrt(d_i))^2`.
pub fn check_petz_fidelity(
    rho_ab: &DensityOperator,
    sig_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    sig_bc: &DensityOperator,
) -> Result<BoundReport> {
    let t = Tri::quad(rho_ab, sig_ab, rho_bc, sig_bc)?;
    let (r, s) = sides(&t, rho_ab, sig_ab, rho_bc, sig_bc)?;
    let mut rep = Report::new(
        "petz_fidelity",
        t.dims(),
        &[
            rho_ab.matrix(),
            sig_ab.matrix(),
            rho_bc.matrix(),
            sig_bc.matrix(),
        ],
    );
    let d1 = infidelity(rho_ab.matrix(), sig_ab.matrix())?;
    let d2 = infidelity(rho_bc.matrix(), sig_bc.matrix())?;
    let d3 = infidelity(&r.b, &s.b)?;
    rep.value("delta1", d1);
    rep.value("delta2", d2);
    rep.value("delta3", d3);
    let root_sum = d1.sqrt() + d2.sqrt() + d3.sqrt();
    let lhs = infidelity(&r.petz, &s.petz)?;
    rep.relation("main", lhs, 2.0 * root_sum * root_sum);

    let g = SqrtGaps::l2(&r, &s);
    let zgap = frobenius_norm(&(&r.z - &s.z));
    rep.step("core_l2", zgap, g.sum());
    rep.step("sqrt_gap_ab", g.ab, 2.0 * d1.sqrt());
    rep.step("sqrt_gap_bc", g.bc, 2.0 * d2.sqrt());
    rep.step("sqrt_gap_b", g.b, 2.0 * d3.sqrt());
    rep.step("gram", lhs, 0.5 * zgap * zgap);
    core_steps(&mut rep, &t, &r, &s, &g);
    record_side_diagnostics(&mut rep, &r, &s);
    record_consistency(&mut rep, "rho_b_mismatch", rho_ab, rho_bc)?;
    record_consistency(&mut rep, "sigma_b_mismatch", sig_ab, sig_bc)?;
    Ok(rep.finish())
}

/// `||Petz(rho) - Petz(sigma)||_1 <= 2 (sqrt(e1) + sqrt(e2) + sqrt(e3))` with
/// full trace norms `e_i`.
pub fn check_petz_trace(
    rho_ab: &DensityOperator,
    sig_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    sig_bc: &DensityOperator,
) -> Result<BoundReport> {
    let t = Tri::quad(rho_ab, sig_ab, rho_bc, sig_bc)?;
    let (r, s) = sides(&t, rho_ab, sig_ab, rho_bc, sig_bc)?;
    let mut rep = Report::new(
        "petz_trace",
        t.dims(),
        &[
            rho_ab.matrix(),
            sig_ab.matrix(),
            rho_bc.matrix(),
            sig_bc.matrix(),
        ],
    );
    let e1 = trace_distance(rho_ab.matrix(), sig_ab.matrix())?;
    let e2 = trace_distance(rho_bc.matrix(), sig_bc.matrix())?;
    let e3 = trace_distance(&r.b, &s.b)?;
    rep.value("eps1", e1);
    rep.value("eps2", e2);
    rep.value("eps3", e3);
    let lhs = trace_distance(&r.petz, &s.petz)?;
    rep.relation("main", lhs, 2.0 * (e1.sqrt() + e2.sqrt() + e3.sqrt()));

    let g = SqrtGaps::l2(&r, &s);
    let zgap = frobenius_norm(&(&r.z - &s.z));
    rep.step("holder", lhs, 2.0 * zgap);
    rep.step("core_l2", zgap, g.sum());
    rep.step("sqrt_gap_ab", g.ab, e1.sqrt());
    rep.step("sqrt_gap_bc", g.bc, e2.sqrt());
    rep.step("sqrt_gap_b", g.b, e3.sqrt());
    core_steps(&mut rep, &t, &r, &s, &g);
    record_side_diagnostics(&mut rep, &r, &s);
    record_consistency(&mut rep, "rho_b_mismatch", rho_ab, rho_bc)?;
    record_consistency(&mut rep, "sigma_b_mismatch", sig_ab, sig_bc)?;
    Ok(rep.finish())
}

/// Continuity of the Petz map of a general channel `Phi: B -> A'`, applied
/// as `Phi (x) id_C`, with reference states `rho_B = tr_C rho_BC` and
/// `sigma_B = tr_C sig_source`; the sigma side recovers `Phi(omega_BC)`.
///
/// The reading in which the sigma side recovers `Phi(sig_source)` instead is
/// kept as the step `alt_omega_is_source`.
pub fn check_general_petz(
    phi: &QuantumChannel,
    rho_bc: &DensityOperator,
    sig_source: &DensityOperator,
    omega_bc: &DensityOperator,
) -> Result<BoundReport> {
    if rho_bc.layout().arity() != 2 {
        return Err(QmcError::WrongArity {
            expected: 2,
            found: rho_bc.layout().arity(),
        });
    }
    for s in [sig_source, omega_bc] {
        if s.dims() != rho_bc.dims() {
            return Err(QmcError::LayoutMismatch {
                layout_dim: rho_bc.dim(),
                rows: s.dim(),
                cols: s.dim(),
            });
        }
    }
    let (d_b, d_c) = (rho_bc.dims()[0], rho_bc.dims()[1]);
    if phi.in_dim() != d_b {
        return Err(QmcError::SubsystemDimension {
            index: 0,
            expected: phi.in_dim(),
            found: d_b,
        });
    }
    let d_out = phi.out_dim();
    let mut rep = Report::new(
        "general_petz",
        vec![vec![d_b, d_c], vec![d_out]],
        &[rho_bc.matrix(), sig_source.matrix(), omega_bc.matrix()],
    );
    let rho_b = rho_bc.trace_out(&[1])?;
    let sig_b = sig_source.trace_out(&[1])?;
    let phi_c = phi.tensor_identity_right(d_c)?;
    let rec_rho = petz_channel(phi, &rho_b)?.tensor_identity_right(d_c)?;
    let rec_sig = petz_channel(phi, &sig_b)?.tensor_identity_right(d_c)?;
    let x = hermitize(&phi_c.apply(rho_bc.matrix())?);
    let y = hermitize(&phi_c.apply(omega_bc.matrix())?);
    let y_alt = hermitize(&phi_c.apply(sig_source.matrix())?);
    let out_rho = rec_rho.apply(&x)?;

    let term_b = frobenius_norm(&(sqrt_psd(rho_b.matrix())? - sqrt_psd(sig_b.matrix())?));
    let (phi_rb, phi_sb) = (
        hermitize(&phi.apply(rho_b.matrix())?),
        hermitize(&phi.apply(sig_b.matrix())?),
    );
    let term_phi_b = frobenius_norm(&(sqrt_psd(&phi_rb)? - sqrt_psd(&phi_sb)?));
    let sqrt_x = sqrt_psd(&x)?;
    let term_bc = frobenius_norm(&(&sqrt_x - sqrt_psd(&y)?));
    rep.value("term_b", term_b);
    rep.value("term_phi_b", term_phi_b);
    rep.value("term_bc", term_bc);
    let lhs = trace_distance(&out_rho, &rec_sig.apply(&y)?)?;
    rep.relation("main", lhs, 2.0 * (term_b + term_phi_b + term_bc));

    let term_alt = frobenius_norm(&(&sqrt_x - sqrt_psd(&y_alt)?));
    let lhs_alt = trace_distance(&out_rho, &rec_sig.apply(&y_alt)?)?;
    rep.step(
        "alt_omega_is_source",
        lhs_alt,
        2.0 * (term_b + term_phi_b + term_alt),
    );

    let (tr_r, tr_s) = (trace(&out_rho).re, trace(&rec_sig.apply(&y)?).re);
    rep.value("petz_trace_rho", tr_r);
    rep.value("petz_trace_sigma", tr_s);
    let spec = HermitianSpectrum::of_psd(&phi_sb)?;
    let proj = spec.map(|l| {
        if l > spec.default_support_tol() {
            1.0
        } else {
            0.0
        }
    });
    let spec_r = HermitianSpectrum::of_psd(&phi_rb)?;
    let proj_r = spec_r.map(|l| {
        if l > spec_r.default_support_tol() {
            1.0
        } else {
            0.0
        }
    });
    let leak = leakage(&proj, &phi_rb).max(leakage(&proj_r, &phi_sb));
    rep.value("support_leakage", leak);
    if leak > SUPPORT_LEAK_TOL {
        rep.tag("support-mismatch");
    }
    if (tr_r - 1.0).abs() > UNIT_TRACE_TOL || (tr_s - 1.0).abs() > UNIT_TRACE_TOL {
        rep.tag("subnormalized");
    }
    Ok(rep.finish())
}

/// Schatten-`p` continuity with dimension factors `d^{1/(2p')}`:
/// `||Petz(rho) - Petz(sigma)||_p <= 2 d_A^e ||.||_{2p}(BC) + 2 (d_A d_C)^e ||.||_{2p}(B)
/// + 2 d_C^e ||.||_{2p}(AB)`, `e = 1/(2p')`. At `p = 2` this is `e = 1/4` with
/// 4-norms.
pub fn check_petz_l2_dim(
    rho_ab: &DensityOperator,
    sig_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    sig_bc: &DensityOperator,
    p: f64,
) -> Result<BoundReport> {
    let p = SchattenP::new(p)?;
    let t = Tri::quad(rho_ab, sig_ab, rho_bc, sig_bc)?;
    let (r, s) = sides(&t, rho_ab, sig_ab, rho_bc, sig_bc)?;
    let mut rep = Report::new(
        format!("petz_l2_dim_p{}", p_label(p)),
        t.dims(),
        &[
            rho_ab.matrix(),
            sig_ab.matrix(),
            rho_bc.matrix(),
            sig_bc.matrix(),
        ],
    );
    let q = p.doubled();
    let e = 0.5 * p.conjugate().reciprocal();
    record_exponent(&mut rep, p);
    rep.value("exponent", e);
    let (fa, fc) = ((t.d_a as f64).powf(e), (t.d_c as f64).powf(e));
    let gap_bc = schatten(&(&s.sqrt_bc - &r.sqrt_bc), q);
    let gap_b = schatten(&(&s.sqrt_b - &r.sqrt_b), q);
    let gap_ab = schatten(&(&s.sqrt_ab - &r.sqrt_ab), q);
    let lhs = schatten(&(&r.petz - &s.petz), p);
    rep.relation(
        "main",
        lhs,
        2.0 * (fa * gap_bc + fa * fc * gap_b + fc * gap_ab),
    );

    let zgap = schatten(&(&r.z - &s.z), q);
    rep.step("gram", lhs, 2.0 * zgap);
    let term_bc = schatten(
        &t.chain(&(&r.sqrt_bc - &s.sqrt_bc), &r.pinv_b, &r.sqrt_ab),
        q,
    );
    let term_b = schatten(
        &t.chain(&s.sqrt_bc, &(&s.pinv_b - &r.pinv_b), &r.sqrt_ab),
        q,
    );
    let term_ab = schatten(
        &t.chain(&s.sqrt_bc, &s.pinv_b, &(&s.sqrt_ab - &r.sqrt_ab)),
        q,
    );
    rep.step("triangle", zgap, term_bc + term_b + term_ab);
    rep.step("term_bc", term_bc, fa * gap_bc);
    rep.step("term_b", term_b, fa * fc * gap_b);
    rep.step("term_ab", term_ab, fc * gap_ab);
    record_side_diagnostics(&mut rep, &r, &s);
    Ok(rep.finish())
}

/// `||Petz(rho_AB, rho_BC) - Petz(rho_AB, sigma_BC)||_2 <= 8 sqrt(delta)` with
/// `delta = 1 - F(rho_BC, sigma_BC)`. The first map uses `tr_A rho_AB`, the
/// second `tr_C sigma_BC`; the bound assumes `rho_AB`, `rho_BC` are marginals
/// of one state (tag `inconsistent-marginals` otherwise).
pub fn check_half_marginal(
    rho_ab: &DensityOperator,
    rho_bc: &DensityOperator,
    sig_bc: &DensityOperator,
) -> Result<BoundReport> {
    let t = Tri::quad(rho_ab, rho_ab, rho_bc, sig_bc)?;
    let (r, s) = sides(&t, rho_ab, rho_ab, rho_bc, sig_bc)?;
    let mut rep = Report::new(
        "half_marginal",
        t.dims(),
        &[rho_ab.matrix(), rho_bc.matrix(), sig_bc.matrix()],
    );
    let delta = infidelity(rho_bc.matrix(), sig_bc.matrix())?;
    rep.value("delta", delta);
    let lhs = frobenius_norm(&(&r.petz - &s.petz));
    rep.relation("main", lhs, 8.0 * delta.sqrt());
    let delta_b = infidelity(&r.b, &s.b)?;
    rep.step("b_monotone", delta_b, delta);
    rep.step("fidelity", infidelity(&r.petz, &s.petz)?, 8.0 * delta);
    rep.step(
        "trace_norm",
        trace_distance(&r.petz, &s.petz)?,
        8.0 * delta.sqrt(),
    );
    record_consistency(&mut rep, "rho_b_mismatch", rho_ab, rho_bc)?;
    if rep.aux["rho_b_mismatch"] > MARGINAL_TOL {
        rep.tag("inconsistent-marginals");
    }
    record_side_diagnostics(&mut rep, &r, &s);
    Ok(rep.finish())
}

/// Fidelity / trace-norm / Hilbert-Schmidt relations between two states.
///
/// The squared Fuchs-van de Graaf relation is evaluated as
/// `F^2 + ||rho - sigma||_1^2 / 4 <= 1`; the reversed inequality, which fails
/// for generic mixed pairs, is kept as the step `squared_reversed`.
pub fn check_norm_relations(rho: &DensityOperator, sigma: &DensityOperator) -> Result<BoundReport> {
    same_dim(rho, sigma)?;
    let (sr, ss) = (sqrt_psd(rho.matrix())?, sqrt_psd(sigma.matrix())?);
    let f = svd_sum(&(&sr * &ss));
    let overlap = trace(&(&sr * &ss)).re;
    let delta = (1.0 - f).max(0.0);
    let l1 = trace_distance(rho.matrix(), sigma.matrix())?;
    let half = 0.5 * l1;
    let l2 = frobenius_norm(&(rho.matrix() - sigma.matrix()));
    let d = rho.dim() as f64;
    let mut rep = Report::new(
        "norm_relations",
        vec![rho.dims().to_vec()],
        &[rho.matrix(), sigma.matrix()],
    );
    rep.value("fidelity", f);
    rep.value("half_trace_norm", half);
    rep.relation("fvdg_lower", delta, half);
    rep.relation("fvdg_upper", half, (1.0 - f * f).max(0.0).sqrt());
    rep.relation("linear", 1.0, f + half);
    rep.relation("squared", f * f + half * half, 1.0);
    rep.step("squared_reversed", 1.0, f * f + half * half);
    rep.relation("overlap_lower", f * f, overlap);
    rep.relation("overlap_upper", overlap, f);
    rep.relation("l2_l1", l2, l1);
    rep.relation("l1_l2", l1, d.sqrt() * l2);
    Ok(rep.finish())
}

/// `||tr_X x||_2 <= sqrt(d_X) ||x||_2` for the traced factor `X` of a
/// bipartite layout. For PSD `x` the reverse `||x||_2 <= sqrt(d_X) ||tr_X x||_2`
/// is recorded as the step `psd_reverse`.
pub fn check_partial_trace_l2(
    x: &ComplexMatrix,
    layout: &SystemLayout,
    traced: usize,
) -> Result<BoundReport> {
    if layout.arity() != 2 {
        return Err(QmcError::WrongArity {
            expected: 2,
            found: layout.arity(),
        });
    }
    if traced >= 2 {
        return Err(QmcError::InvalidSubsystem {
            index: traced,
            arity: 2,
        });
    }
    let reduced = partial_trace(x, layout, &[traced])?;
    let d = layout.dim(traced) as f64;
    let (n_red, n_full) = (frobenius_norm(&reduced), frobenius_norm(x));
    let mut rep = Report::new("partial_trace_l2", vec![layout.dims().to_vec()], &[x]);
    rep.value("traced_dim", d);
    rep.relation("main", n_red, d.sqrt() * n_full);
    if hermiticity_deviation(x) == 0.0 && HermitianSpectrum::of_psd(x).is_ok() {
        rep.step("psd_reverse", n_full, d.sqrt() * n_red);
    }
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Variants and random instances

/// One entry of the bound suite; Schatten-parametrized bounds appear once per
/// exponent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundVariant {
    CoreL2,
    InfidelitySqrt,
    GramFidelity,
    PowersStormer,
    Schatten4to2(SchattenP),
    PetzFidelity,
    PetzTrace,
    GeneralPetz,
    PetzL2Dim(SchattenP),
    HalfMarginal,
    NormRelations,
    PartialTraceL2,
}

const SCHATTEN_PS: [f64; 4] = [1.0, 1.5, 2.0, 4.0];
const L2_DIM_PS: [f64; 3] = [2.0, 3.0, f64::INFINITY];

impl BoundVariant {
    /// The full suite: eleven bounds, two of them at several exponents.
    pub fn all() -> Vec<Self> {
        let mut v = vec![
            Self::CoreL2,
            Self::InfidelitySqrt,
            Self::GramFidelity,
            Self::PowersStormer,
        ];
        v.extend(
            SCHATTEN_PS
                .iter()
                .map(|&p| Self::Schatten4to2(SchattenP::new(p).unwrap())),
        );
        v.extend([Self::PetzFidelity, Self::PetzTrace, Self::GeneralPetz]);
        v.extend(
            L2_DIM_PS
                .iter()
                .map(|&p| Self::PetzL2Dim(SchattenP::new(p).unwrap())),
        );
        v.extend([
            Self::HalfMarginal,
            Self::NormRelations,
            Self::PartialTraceL2,
        ]);
        v
    }

    pub fn base_name(&self) -> &'static str {
        match self {
            Self::CoreL2 => "core_l2",
            Self::InfidelitySqrt => "infidelity_sqrt",
            Self::GramFidelity => "gram_fidelity",
            Self::PowersStormer => "powers_stormer",
            Self::Schatten4to2(_) => "schatten_4to2",
            Self::PetzFidelity => "petz_fidelity",
            Self::PetzTrace => "petz_trace",
            Self::GeneralPetz => "general_petz",
            Self::PetzL2Dim(_) => "petz_l2_dim",
            Self::HalfMarginal => "half_marginal",
            Self::NormRelations => "norm_relations",
            Self::PartialTraceL2 => "partial_trace_l2",
        }
    }

    /// Name used as `bound_name` in reports, e.g. `petz_l2_dim_pinf`.
    pub fn name(&self) -> String {
        match self {
            Self::Schatten4to2(p) | Self::PetzL2Dim(p) => {
                format!("{}_p{}", self.base_name(), p_label(*p))
            }
            _ => self.base_name().to_string(),
        }
    }

    /// Select variants by exact name or by base name (all exponents).
    pub fn select(names: &[String]) -> Result<Vec<Self>> {
        let all = Self::all();
        let mut out = Vec::new();
        for n in names {
            let n = n.trim();
            let hits: Vec<Self> = all
                .iter()
                .copied()
                .filter(|v| v.name() == n || v.base_name() == n)
                .collect();
            if hits.is_empty() {
                return Err(QmcError::InvalidArgument(format!("unknown bound '{n}'")));
            }
            for h in hits {
                if !out.contains(&h) {
                    out.push(h);
                }
            }
        }
        // Keep suite order regardless of how the filter was written.
        out.sort_by_key(|v| all.iter().position(|a| a == v));
        Ok(out)
    }

    /// Evaluate on a random instance at tripartite dims `(d_A, d_B, d_C)`.
    /// Single-system bounds use the total dimension.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        dims: &[usize],
        stress: bool,
        rng: &mut R,
    ) -> Result<BoundReport> {
        let tri = tri_layout(dims)?;
        let total = tri.total_dim();
        match *self {
            Self::CoreL2 | Self::PetzFidelity | Self::PetzTrace | Self::PetzL2Dim(_) => {
                let families: &[Family] = if stress {
                    &[Family::Close]
                } else {
                    &[
                        Family::Generic,
                        Family::Close,
                        Family::Markov,
                        Family::Independent,
                    ]
                };
                let fam = families[rng.random_range(0..families.len())];
                let inst = tripartite_instance(&tri, fam, rng)?;
                let rep = match *self {
                    Self::CoreL2 => check_core_l2(&inst.0, &inst.1, &inst.2, &inst.3),
                    Self::PetzFidelity => check_petz_fidelity(&inst.0, &inst.1, &inst.2, &inst.3),
                    Self::PetzTrace => check_petz_trace(&inst.0, &inst.1, &inst.2, &inst.3),
                    Self::PetzL2Dim(p) => {
                        check_petz_l2_dim(&inst.0, &inst.1, &inst.2, &inst.3, p.value())
                    }
                    _ => unreachable!(),
                }?;
                Ok(tagged(rep, fam, inst.4))
            }
            Self::HalfMarginal => {
                let fam = pick(
                    rng,
                    stress,
                    &[Family::Generic, Family::Close, Family::Markov],
                );
                let (rho, sigma, t) = tripartite_pair(&tri, fam, rng)?;
                let rho_ab = rho.marginal(&[0, 1])?;
                let rho_bc = rho.marginal(&[1, 2])?;
                let sig_bc = sigma.marginal(&[1, 2])?;
                Ok(tagged(
                    check_half_marginal(&rho_ab, &rho_bc, &sig_bc)?,
                    fam,
                    t,
                ))
            }
            Self::InfidelitySqrt | Self::NormRelations => {
                let layout = SystemLayout::single(total)?;
                let fam = pick(
                    rng,
                    stress,
                    &[Family::Generic, Family::Close, Family::LowRank],
                );
                let (rho, sigma, t) = state_pair(&layout, fam, rng)?;
                let rep = if let Self::InfidelitySqrt = self {
                    check_infidelity_sqrt(&rho, &sigma)?
                } else {
                    check_norm_relations(&rho, &sigma)?
                };
                Ok(tagged(rep, fam, t))
            }
            Self::PowersStormer => {
                let layout = SystemLayout::single(total)?;
                let fam = pick(
                    rng,
                    stress,
                    &[Family::Generic, Family::Close, Family::LowRank],
                );
                let (rho, sigma, t) = state_pair(&layout, fam, rng)?;
                let (mut p, mut q) = (rho.into_matrix(), sigma.into_matrix());
                if !stress && rng.random_bool(0.25) {
                    p = p.scale(rng.random_range(0.2..5.0));
                    q = q.scale(rng.random_range(0.2..5.0));
                }
                Ok(tagged(check_powers_stormer(&p, &q)?, fam, t))
            }
            Self::GramFidelity | Self::Schatten4to2(_) => {
                let (x, y, fam, t) = matrix_pair(total, stress, rng);
                let rep = match *self {
                    Self::GramFidelity => check_gram_fidelity(&x, &y)?,
                    Self::Schatten4to2(p) => check_schatten_4to2(&x, &y, p.value())?,
                    _ => unreachable!(),
                };
                Ok(tagged(rep, fam, t))
            }
            Self::PartialTraceL2 => {
                let layout = SystemLayout::new(vec![dims[0], dims[1] * dims[2]])?;
                let x = if rng.random_bool(0.5) {
                    random_density_on(layout.clone(), rng.random_range(1..=total), rng)?
                        .into_matrix()
                } else {
                    ginibre(total, total, rng)
                };
                check_partial_trace_l2(&x, &layout, 0)
            }
            Self::GeneralPetz => {
                let (d_out, d_b, d_c) = (dims[0], dims[1], dims[2]);
                let bc = SystemLayout::new(vec![d_b, d_c])?;
                let min_k = d_b.div_ceil(d_out);
                let n_kraus = rng.random_range(min_k..=min_k + 2);
                let phi = QuantumChannel::random(d_b, d_out, n_kraus, rng)?;
                let fam = pick(
                    rng,
                    stress,
                    &[Family::Generic, Family::Close, Family::LowRank],
                );
                let (rho, source, t) = state_pair(&bc, fam, rng)?;
                let omega = match rng.random_range(0..3) {
                    0 => source.clone(),
                    1 => state_pair(&bc, Family::Close, rng)?.1,
                    _ => random_full_rank(bc.clone(), rng)?,
                };
                Ok(tagged(
                    check_general_petz(&phi, &rho, &source, &omega)?,
                    fam,
                    t,
                ))
            }
        }
        .map(|mut r| {
            r.bound_name = self.name();
            r
        })
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, stress: bool, families: &[Family]) -> Family {
    if stress {
        Family::Close
    } else {
        families[rng.random_range(0..families.len())]
    }
}

fn tagged(mut r: BoundReport, fam: Family, t: Option<f64>) -> BoundReport {
    r.tags.push(format!("family:{}", fam.name()));
    if let Some(t) = t {
        r.aux.insert("instance_t".into(), t);
    }
    r
}

fn tri_layout(dims: &[usize]) -> Result<SystemLayout> {
    if dims.len() != 3 {
        return Err(QmcError::WrongArity {
            expected: 3,
            found: dims.len(),
        });
    }
    SystemLayout::new(dims.to_vec())
}

/// How a random instance pair is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    /// Independent full-rank states.
    Generic,
    /// `sigma = (1 - t) rho + t W`, `W` pure, `t` log-uniform in `[1e-6, 1]`.
    Close,
    /// Two exact Markov chains.
    Markov,
    /// Pair marginals drawn independently (no common tripartite state).
    Independent,
    /// Random ranks between 1 and full.
    LowRank,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Generic => "generic",
            Family::Close => "close",
            Family::Markov => "markov",
            Family::Independent => "independent",
            Family::LowRank => "low-rank",
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo_exp: f64, hi_exp: f64) -> f64 {
    10f64.powf(rng.random_range(lo_exp..hi_exp))
}

fn close_to<R: Rng + ?Sized>(rho: &DensityOperator, rng: &mut R) -> Result<(DensityOperator, f64)> {
    let t = log_uniform(rng, -6.0, 0.0);
    let w = random_pure(rho.dim(), rng)?.with_layout(rho.layout().clone())?;
    Ok((rho.mix(&w, t)?, t))
}

fn state_pair<R: Rng + ?Sized>(
    layout: &SystemLayout,
    fam: Family,
    rng: &mut R,
) -> Result<(DensityOperator, DensityOperator, Option<f64>)> {
    let d = layout.total_dim();
    match fam {
        Family::Close => {
            let rho = random_full_rank(layout.clone(), rng)?;
            let (sigma, t) = close_to(&rho, rng)?;
            Ok((rho, sigma, Some(t)))
        }
        Family::LowRank => {
            let r1 = rng.random_range(1..=d);
            let r2 = rng.random_range(1..=d);
            Ok((
                random_density_on(layout.clone(), r1, rng)?,
                random_density_on(layout.clone(), r2, rng)?,
                None,
            ))
        }
        _ => Ok((
            random_full_rank(layout.clone(), rng)?,
            random_full_rank(layout.clone(), rng)?,
            None,
        )),
    }
}

fn tripartite_pair<R: Rng + ?Sized>(
    tri: &SystemLayout,
    fam: Family,
    rng: &mut R,
) -> Result<(DensityOperator, DensityOperator, Option<f64>)> {
    match fam {
        Family::Markov => Ok((
            random_qmc(tri, &QmcSpec::Random, rng)?,
            random_qmc(tri, &QmcSpec::Random, rng)?,
            None,
        )),
        _ => state_pair(tri, fam, rng),
    }
}

type Quad = (
    DensityOperator,
    DensityOperator,
    DensityOperator,
    DensityOperator,
    Option<f64>,
);

fn tripartite_instance<R: Rng + ?Sized>(
    tri: &SystemLayout,
    fam: Family,
    rng: &mut R,
) -> Result<Quad> {
    if fam == Family::Independent {
        let ab = tri.keep(&[0, 1])?;
        let bc = tri.keep(&[1, 2])?;
        return Ok((
            random_full_rank(ab.clone(), rng)?,
            random_full_rank(ab, rng)?,
            random_full_rank(bc.clone(), rng)?,
            random_full_rank(bc, rng)?,
            None,
        ));
    }
    let (rho, sigma, t) = tripartite_pair(tri, fam, rng)?;
    Ok((
        rho.marginal(&[0, 1])?,
        sigma.marginal(&[0, 1])?,
        rho.marginal(&[1, 2])?,
        sigma.marginal(&[1, 2])?,
        t,
    ))
}

fn matrix_pair<R: Rng + ?Sized>(
    d: usize,
    stress: bool,
    rng: &mut R,
) -> (ComplexMatrix, ComplexMatrix, Family, Option<f64>) {
    let x = ginibre(d, d, rng);
    if stress || rng.random_bool(0.5) {
        let t = log_uniform(rng, -6.0, 0.0);
        let y = &x + ginibre(d, d, rng).scale(t);
        (x, y, Family::Close, Some(t))
    } else {
        let rank = rng.random_range(1..=d);
        let y = ginibre(d, rank, rng) * ginibre(rank, d, rng);
        (x, y, Family::Generic, None)
    }
}

// ---------------------------------------------------------------------------
// Adversarial search

/// Result of [`adversarial_search`].
#[derive(Clone, Debug)]
pub struct AdversarialResult {
    pub min_slack: f64,
    pub worst: BoundReport,
    pub accepted_moves: usize,
}

fn state_from_factor(g: &ComplexMatrix, layout: &SystemLayout) -> Result<DensityOperator> {
    let n: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    if !(n > 0.0) {
        return Err(QmcError::ZeroMatrix);
    }
    DensityOperator::new(hermitize(&(g * g.adjoint()).unscale(n)), layout.clone())
}

impl BoundVariant {
    fn raw_shapes(&self, dims: &[usize]) -> Vec<(usize, usize)> {
        let total: usize = dims.iter().product();
        match self {
            Self::HalfMarginal => vec![(total, total), (dims[1] * dims[2], dims[1] * dims[2])],
            Self::GeneralPetz => {
                let bc = dims[1] * dims[2];
                let k = dims[1].div_ceil(dims[0]).max(2);
                vec![(bc, bc), (bc, bc), (bc, bc), (k * dims[0], dims[1])]
            }
            Self::PartialTraceL2 => vec![(total, total)],
            _ => vec![(total, total), (total, total)],
        }
    }

    /// Evaluate on raw Gaussian-like factors: states are `G G^dag / ||G||^2`,
    /// matrix bounds take the factors themselves.
    fn evaluate_raw(&self, dims: &[usize], f: &[ComplexMatrix]) -> Result<BoundReport> {
        let tri = tri_layout(dims)?;
        let total = tri.total_dim();
        let rep = match *self {
            Self::CoreL2 | Self::PetzFidelity | Self::PetzTrace | Self::PetzL2Dim(_) => {
                let rho = state_from_factor(&f[0], &tri)?;
                let sigma = state_from_factor(&f[1], &tri)?;
                let (ra, sa) = (rho.marginal(&[0, 1])?, sigma.marginal(&[0, 1])?);
                let (rb, sb) = (rho.marginal(&[1, 2])?, sigma.marginal(&[1, 2])?);
                match *self {
                    Self::CoreL2 => check_core_l2(&ra, &sa, &rb, &sb)?,
                    Self::PetzFidelity => check_petz_fidelity(&ra, &sa, &rb, &sb)?,
                    Self::PetzTrace => check_petz_trace(&ra, &sa, &rb, &sb)?,
                    Self::PetzL2Dim(p) => check_petz_l2_dim(&ra, &sa, &rb, &sb, p.value())?,
                    _ => unreachable!(),
                }
            }
            Self::HalfMarginal => {
                let rho = state_from_factor(&f[0], &tri)?;
                let sig_bc = state_from_factor(&f[1], &tri.keep(&[1, 2])?)?;
                check_half_marginal(&rho.marginal(&[0, 1])?, &rho.marginal(&[1, 2])?, &sig_bc)?
            }
            Self::InfidelitySqrt | Self::NormRelations | Self::PowersStormer => {
                let single = SystemLayout::single(total)?;
                let rho = state_from_factor(&f[0], &single)?;
                let sigma = state_from_factor(&f[1], &single)?;
                match self {
                    Self::InfidelitySqrt => check_infidelity_sqrt(&rho, &sigma)?,
                    Self::NormRelations => check_norm_relations(&rho, &sigma)?,
                    _ => check_powers_stormer(rho.matrix(), sigma.matrix())?,
                }
            }
            Self::GramFidelity => check_gram_fidelity(&f[0], &f[1])?,
            Self::Schatten4to2(p) => check_schatten_4to2(&f[0], &f[1], p.value())?,
            Self::PartialTraceL2 => {
                let layout = SystemLayout::new(vec![dims[0], dims[1] * dims[2]])?;
                check_partial_trace_l2(&f[0], &layout, 0)?
            }
            Self::GeneralPetz => {
                let bc = tri.keep(&[1, 2])?;
                let rho = state_from_factor(&f[0], &bc)?;
                let src = state_from_factor(&f[1], &bc)?;
                let omega = state_from_factor(&f[2], &bc)?;
                let k = f[3].nrows() / dims[0];
                let phi = QuantumChannel::from_generator(&f[3], dims[0], k)?;
                check_general_petz(&phi, &rho, &src, &omega)?
            }
        };
        Ok(BoundReport {
            bound_name: self.name(),
            ..rep
        })
    }
}

impl BoundVariant {
    /// Evaluate on rank-deficient raw factors: every factor is a product
    /// `G_1 G_2` through an inner dimension drawn from `1..=max_rank`.
    pub fn sample_low_rank<R: Rng + ?Sized>(
        &self,
        dims: &[usize],
        max_rank: usize,
        rng: &mut R,
    ) -> Result<BoundReport> {
        tri_layout(dims)?;
        let f: Vec<ComplexMatrix> = self
            .raw_shapes(dims)
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                // the channel generator must keep full column rank
                if matches!(self, Self::GeneralPetz) && i == 3 {
                    return ginibre(r, c, rng);
                }
                let k = rng.random_range(1..=max_rank.clamp(1, r.min(c)));
                ginibre(r, k, rng) * ginibre(k, c, rng)
            })
            .collect();
        let mut rep = self.evaluate_raw(dims, &f)?;
        rep.tags.push("family:low-rank-raw".into());
        Ok(rep)
    }
}

/// Tripartite state whose `B` marginal has rank `k`: a full-rank state on
/// `(d_A, k, d_C)` pushed through an isometry `C^k -> C^{d_B}` on `B`.
fn b_deficient<R: Rng + ?Sized>(
    tri: &SystemLayout,
    k: usize,
    v: &ComplexMatrix,
    rng: &mut R,
) -> Result<DensityOperator> {
    let (d_a, d_c) = (tri.dim(0), tri.dim(2));
    let tau = random_full_rank(SystemLayout::new(vec![d_a, k, d_c])?, rng)?;
    let lift = kron(&kron(&identity(d_a), v)?, &identity(d_c))?;
    Ok(DensityOperator::from_trusted(
        &lift * tau.matrix() * lift.adjoint(),
        tri.clone(),
    ))
}

fn random_isometry<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> ComplexMatrix {
    let u = crate::states::random_unitary(d, rng);
    u.columns(0, k).into_owned()
}

/// Tripartite checks on states with rank-deficient `B` marginals. With
/// `matched` the two states share the `B` support, otherwise the supports
/// are drawn independently.
pub fn sample_b_deficient<R: Rng + ?Sized>(
    variant: BoundVariant,
    dims: &[usize],
    rank: usize,
    matched: bool,
    rng: &mut R,
) -> Result<BoundReport> {
    let tri = tri_layout(dims)?;
    let k = rank.clamp(1, dims[1]);
    let v = random_isometry(dims[1], k, rng);
    let rho = b_deficient(&tri, k, &v, rng)?;
    let sigma = if matched {
        let w = b_deficient(&tri, k, &v, rng)?;
        rho.mix(&w, log_uniform(rng, -6.0, 0.0))?
    } else {
        b_deficient(&tri, k, &random_isometry(dims[1], k, rng), rng)?
    };
    let (ra, sa) = (rho.marginal(&[0, 1])?, sigma.marginal(&[0, 1])?);
    let (rb, sb) = (rho.marginal(&[1, 2])?, sigma.marginal(&[1, 2])?);
    let mut rep = match variant {
        BoundVariant::CoreL2 => check_core_l2(&ra, &sa, &rb, &sb)?,
        BoundVariant::PetzFidelity => check_petz_fidelity(&ra, &sa, &rb, &sb)?,
        BoundVariant::PetzTrace => check_petz_trace(&ra, &sa, &rb, &sb)?,
        BoundVariant::PetzL2Dim(p) => check_petz_l2_dim(&ra, &sa, &rb, &sb, p.value())?,
        BoundVariant::HalfMarginal => check_half_marginal(&ra, &rb, &sb)?,
        other => {
            return Err(QmcError::InvalidArgument(format!(
                "{} has no B marginal",
                other.name()
            )))
        }
    };
    rep.bound_name = variant.name();
    rep.tags.push(format!(
        "family:b-rank-{k}{}",
        if matched { "-matched" } else { "" }
    ));
    Ok(rep)
}

/// Hill climbing on the slack over the raw input factors: from each random
/// restart, perturb one entry at a time and keep moves that lower the slack.
pub fn adversarial_search<R: Rng + ?Sized>(
    variant: BoundVariant,
    dims: &[usize],
    steps: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<AdversarialResult> {
    let shapes = variant.raw_shapes(dims);
    let restarts = restarts.max(1);
    let per_restart = (steps / restarts).max(1);
    let mut best: Option<BoundReport> = None;
    let mut accepted = 0usize;
    for _ in 0..restarts {
        let mut f: Vec<ComplexMatrix> = shapes.iter().map(|&(r, c)| ginibre(r, c, rng)).collect();
        let mut cur = variant.evaluate_raw(dims, &f)?;
        let mut scale = 0.3;
        for _ in 0..per_restart {
            let k = rng.random_range(0..f.len());
            let (i, j) = (
                rng.random_range(0..f[k].nrows()),
                rng.random_range(0..f[k].ncols()),
            );
            let old = f[k][(i, j)];
            let mag = f[k].iter().map(|z| z.norm()).fold(0.0, f64::max);
            let kick = ginibre(1, 1, rng)[(0, 0)] * (scale * mag);
            f[k][(i, j)] = old + kick;
            match variant.evaluate_raw(dims, &f) {
                Ok(rep) if rep.slack < cur.slack => {
                    cur = rep;
                    accepted += 1;
                    scale = (scale * 1.5).min(1.0);
                }
                _ => {
                    f[k][(i, j)] = old;
                    scale = (scale * 0.97).max(1e-6);
                }
            }
        }
        if best.as_ref().is_none_or(|b| cur.slack < b.slack) {
            best = Some(cur);
        }
    }
    let worst = best.expect("at least one restart");
    Ok(AdversarialResult {
        min_slack: worst.slack,
        worst,
        accepted_moves: accepted,
    })
}
