//! Oracle-level simulations of the tomography, certification and testing
//! protocols, plus closed-form sample budgets.
//!
//! Measurements are replaced by [`oracle_estimate`], which returns some state
//! meeting the accuracy guarantee a measurement would provide. Every
//! protocol returns a [`ProtocolTranscript`] recording what it claimed and
//! what was measured against the ground truth.

mod budget;
mod instances;
mod oracle;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use budget::{default_budget, sample_budget, SampleBudget, DEFAULT_C, DEFAULT_K, FORMULAS};
pub use instances::{markov_far_instance, qmc_far_instance, FarInstance};
pub use oracle::{
    oracle_estimate, EstimationOracleConfig, OracleEstimate, OracleMode, STRESS_RANGE,
};

use crate::continuity::matrix_digest;
use crate::error::{QmcError, Result};
use crate::linalg::{fidelity, fidelity_psd, frobenius_norm, half_trace_distance, trace_distance};
use crate::petz::{chain_reconstruct, petz_distance, petz_reconstruct};
use crate::states::DensityOperator;

/// Tolerance on every recorded guarantee comparison.
pub const GUARANTEE_TOL: f64 = 1e-9;
/// Petz self-distance (trace norm) below which an input counts as a Markov
/// chain for promise bookkeeping.
pub const QMC_TOL: f64 = 1e-7;
/// Infidelity below which two states count as equal.
pub const EQUAL_TOL: f64 = 1e-9;
/// Default error rate of each simulated marginal certifier.
pub const CERTIFIER_FAILURE_PROB: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Equal,
    Far,
    Markov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `measured >= claimed - tol`.
    AtLeast,
    /// `measured <= claimed + tol`.
    AtMost,
    /// The decision must match the ground truth.
    Decision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Guarantee {
    pub relation: Relation,
    pub claimed: f64,
    pub measured: f64,
    pub tol: f64,
    pub pass: bool,
    /// False when an injected failure or a promise violation voids the claim.
    pub applicable: bool,
    /// Ground-truth answer for decision protocols.
    pub expected: Option<Decision>,
}

impl Guarantee {
    fn bound(relation: Relation, claimed: f64, measured: f64) -> Self {
        let pass = match relation {
            Relation::AtLeast => measured >= claimed - GUARANTEE_TOL,
            Relation::AtMost => measured <= claimed + GUARANTEE_TOL,
            Relation::Decision => false,
        };
        Self {
            relation,
            claimed,
            measured,
            tol: GUARANTEE_TOL,
            pass,
            applicable: true,
            expected: None,
        }
    }

    /// Signed margin: positive when the bound holds with room; `+1`/`-1`
    /// for pure decisions.
    pub fn slack(&self) -> f64 {
        match self.relation {
            Relation::AtLeast => self.measured - self.claimed,
            Relation::AtMost => self.claimed - self.measured,
            Relation::Decision => {
                if self.pass {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCall {
    /// Marginal the call estimated or certified, e.g. `"AB"` or `"2,3"`.
    pub marginal: String,
    pub target: f64,
    pub achieved: f64,
    pub failed: bool,
    /// Parallel pass of the multipartite algorithm (0 even, 1 odd).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pass_group: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProtocolOutput {
    Estimate { digest: String, trace: f64 },
    Decision { decision: Decision },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub protocol_name: String,
    pub seed: u64,
    pub trial: Option<u64>,
    pub dims: Vec<usize>,
    pub inputs_digest: String,
    pub oracle_calls: Vec<OracleCall>,
    pub budget: SampleBudget,
    pub output: ProtocolOutput,
    pub guarantee: Guarantee,
    pub aux: BTreeMap<String, f64>,
    pub tags: Vec<String>,
}

impl ProtocolTranscript {
    /// The guarantee holds, or does not apply.
    pub fn passes(&self) -> bool {
        !self.guarantee.applicable || self.guarantee.pass
    }

    pub fn slack(&self) -> f64 {
        self.guarantee.slack()
    }

    pub fn with_trial(mut self, seed: u64, trial: u64) -> Self {
        self.seed = seed;
        self.trial = Some(trial);
        self
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn decision(&self) -> Option<Decision> {
        match self.output {
            ProtocolOutput::Decision { decision } => Some(decision),
            ProtocolOutput::Estimate { .. } => None,
        }
    }

    pub fn any_failure_injected(&self) -> bool {
        self.oracle_calls.iter().any(|c| c.failed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    fn tag(&mut self, t: impl Into<String>) {
        let t = t.into();
        if !self.has_tag(&t) {
            self.tags.push(t);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    /// Oracle discrepancies in `[0.9, 0.999] * target` instead of uniform.
    pub stress: bool,
    pub oracle_failure_prob: f64,
    pub certifier_failure_prob: f64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            stress: true,
            oracle_failure_prob: 0.0,
            certifier_failure_prob: CERTIFIER_FAILURE_PROB,
        }
    }
}

impl ProtocolOptions {
    pub fn benign() -> Self {
        Self {
            stress: false,
            ..Self::default()
        }
    }

    fn oracle(&self, mode: OracleMode, target: f64) -> Result<EstimationOracleConfig> {
        Ok(EstimationOracleConfig::new(mode, target)?
            .with_failure_prob(self.oracle_failure_prob)?
            .with_stress(self.stress))
    }
}

/// Accuracy target of [`tomo_tripartite`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TomoTarget {
    /// Infidelity `delta`; marginals estimated at `0.01 delta`.
    Infidelity(f64),
    /// Halved trace distance `eps` through the infidelity route at
    /// `delta = eps^2 / 2`.
    TraceViaFidelity(f64),
    /// Halved trace distance `eps` with trace-norm marginal estimates at
    /// `0.01 eps^2`.
    TraceViaTrace(f64),
}

fn require_arity(rho: &DensityOperator, n: usize) -> Result<()> {
    let a = rho.layout().arity();
    if a != n {
        return Err(QmcError::WrongArity {
            expected: n,
            found: a,
        });
    }
    Ok(())
}

fn infidelity(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    Ok((1.0 - fidelity(a.matrix(), b.matrix())?).max(0.0))
}

fn estimate_digest(m: &crate::linalg::ComplexMatrix) -> ProtocolOutput {
    ProtocolOutput::Estimate {
        digest: matrix_digest(&[m]),
        trace: crate::linalg::trace(m).re,
    }
}

fn sqrt_sum(vals: &[f64]) -> f64 {
    vals.iter().map(|v| v.max(0.0).sqrt()).sum()
}

/// Tripartite Markov-chain tomography: estimate `rho_AB` and `rho_BC` with
/// the oracle and output the Petz reconstruction from the estimates.
pub fn tomo_tripartite<R: Rng + ?Sized>(
    rho_abc: &DensityOperator,
    target: TomoTarget,
    opts: &ProtocolOptions,
    rng: &mut R,
) -> Result<ProtocolTranscript> {
    require_arity(rho_abc, 3)?;
    let dims = rho_abc.dims().to_vec();
    let (oracle, claimed, relation, budget, name) = match target {
        TomoTarget::Infidelity(delta) => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(QmcError::InvalidArgument(format!(
                    "delta must lie in (0, 1), got {delta}"
                )));
            }
            (
                opts.oracle(OracleMode::Infidelity, 0.01 * delta)?,
                1.0 - 0.18 * delta,
                Relation::AtLeast,
                default_budget("thm1_fidelity", &dims, delta)?,
                "tomo_tripartite",
            )
        }
        TomoTarget::TraceViaFidelity(eps) => {
            let delta = eps * eps / 2.0;
            if !(eps > 0.0 && delta < 1.0) {
                return Err(QmcError::InvalidArgument(format!(
                    "eps must lie in (0, sqrt 2), got {eps}"
                )));
            }
            (
                opts.oracle(OracleMode::Infidelity, 0.01 * delta)?,
                eps,
                Relation::AtMost,
                default_budget("thm1_trace", &dims, eps)?,
                "tomo_tripartite_trace",
            )
        }
        TomoTarget::TraceViaTrace(eps) => {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(QmcError::InvalidArgument(format!(
                    "eps must be positive, got {eps}"
                )));
            }
            (
                opts.oracle(OracleMode::Trace, 0.01 * eps * eps)?,
                0.6 * eps,
                Relation::AtMost,
                default_budget("thm1_trace", &dims, eps)?,
                "tomo_tripartite_trace_norm",
            )
        }
    };
    let rho_ab = rho_abc.marginal(&[0, 1])?;
    let rho_bc = rho_abc.marginal(&[1, 2])?;
    let est_ab = oracle_estimate(&rho_ab, &oracle, rng)?;
    let est_bc = oracle_estimate(&rho_bc, &oracle, rng)?;
    let rec = petz_reconstruct(&est_ab.state, &est_bc.state)?;
    let out = rec.matrix.clone();

    let mut aux = BTreeMap::new();
    let self_distance = petz_distance(rho_abc)?;
    aux.insert("petz_self_distance".into(), self_distance);
    aux.insert("output_trace".into(), rec.trace);
    aux.insert("estimate_marginal_mismatch".into(), rec.marginal_mismatch);
    let rho_b = rho_bc.marginal(&[0])?;
    let est_b = est_bc.state.marginal(&[0])?;
    let f_out = fidelity_psd(rho_abc.matrix(), &out)?;
    let half_td = half_trace_distance(rho_abc.matrix(), &out)?;
    aux.insert("infidelity".into(), 1.0 - f_out);
    aux.insert("half_trace_distance".into(), half_td);
    match oracle.mode {
        OracleMode::Infidelity => {
            let d = [
                est_ab.achieved,
                est_bc.achieved,
                infidelity(&rho_b, &est_b)?,
            ];
            aux.insert("infidelity_ab".into(), d[0]);
            aux.insert("infidelity_bc".into(), d[1]);
            aux.insert("infidelity_b".into(), d[2]);
            // 1 - F <= 2 (sum sqrt delta_i)^2 with the measured delta_i
            aux.insert("chain_bound".into(), 2.0 * sqrt_sum(&d).powi(2));
        }
        OracleMode::Trace => {
            let e = [
                est_ab.achieved,
                est_bc.achieved,
                trace_distance(rho_b.matrix(), est_b.matrix())?,
            ];
            aux.insert("trace_ab".into(), e[0]);
            aux.insert("trace_bc".into(), e[1]);
            aux.insert("trace_b".into(), e[2]);
            // ||rho - out||_1 <= 2 sum sqrt eps_i with the measured eps_i
            aux.insert("chain_bound".into(), 2.0 * sqrt_sum(&e));
            aux.insert("trace_distance".into(), 2.0 * half_td);
        }
    }
    let mut g = match relation {
        Relation::AtLeast => Guarantee::bound(relation, claimed, f_out),
        _ => Guarantee::bound(relation, claimed, half_td),
    };
    let calls = vec![
        OracleCall {
            marginal: "AB".into(),
            target: oracle.target,
            achieved: est_ab.achieved,
            failed: est_ab.failed,
            pass_group: None,
        },
        OracleCall {
            marginal: "BC".into(),
            target: oracle.target,
            achieved: est_bc.achieved,
            failed: est_bc.failed,
            pass_group: None,
        },
    ];
    let mut tags = Vec::new();
    if calls.iter().any(|c| c.failed) {
        g.applicable = false;
        tags.push("oracle-failure".to_string());
    }
    if self_distance > QMC_TOL {
        g.applicable = false;
        tags.push("non-qmc-input".to_string());
    }
    Ok(ProtocolTranscript {
        protocol_name: name.to_string(),
        seed: 0,
        trial: None,
        dims,
        inputs_digest: matrix_digest(&[rho_abc.matrix()]),
        oracle_calls: calls,
        budget,
        output: estimate_digest(&out),
        guarantee: g,
        aux,
        tags,
    })
}

/// Closeness allowance for [`tomo_tripartite_near`] as a fraction of the
/// accuracy target.
pub const NEAR_QMC_FRACTION: f64 = 0.01;

/// [`tomo_tripartite`] on a state near the Markov chain `reference`.
///
/// The input counts as close when its distance to `reference` is at most
/// `0.01` times the target. Both normalizations of that distance are
/// evaluated: the full norm `||rho - sigma||_1` decides whether the
/// guarantee applies, and the halved norm is reported alongside
/// (`near.half.*`, `near.full.*` in `aux`).
pub fn tomo_tripartite_near<R: Rng + ?Sized>(
    rho_abc: &DensityOperator,
    reference: &DensityOperator,
    target: TomoTarget,
    opts: &ProtocolOptions,
    rng: &mut R,
) -> Result<ProtocolTranscript> {
    require_arity(reference, 3)?;
    if reference.dims() != rho_abc.dims() {
        return Err(QmcError::InvalidArgument(format!(
            "reference dims {:?} differ from input dims {:?}",
            reference.dims(),
            rho_abc.dims()
        )));
    }
    let ref_self = petz_distance(reference)?;
    if ref_self > QMC_TOL {
        return Err(QmcError::InvalidArgument(format!(
            "reference is not a Markov chain (Petz distance {ref_self:.3e})"
        )));
    }
    let mut t = tomo_tripartite(rho_abc, target, opts, rng)?;
    let scale = match target {
        TomoTarget::Infidelity(x)
        | TomoTarget::TraceViaFidelity(x)
        | TomoTarget::TraceViaTrace(x) => x,
    };
    let allowance = NEAR_QMC_FRACTION * scale;
    let full = trace_distance(rho_abc.matrix(), reference.matrix())?;
    let slack = t.guarantee.slack();
    t.protocol_name.push_str("_near");
    t.inputs_digest = matrix_digest(&[rho_abc.matrix(), reference.matrix()]);
    t.aux.insert("near.allowance".into(), allowance);
    t.aux
        .insert("near.reference_petz_distance".into(), ref_self);
    for (reading, d) in [("half", 0.5 * full), ("full", full)] {
        let close = d <= allowance;
        t.aux.insert(format!("near.{reading}.distance"), d);
        t.aux
            .insert(format!("near.{reading}.close"), close as u8 as f64);
        if close {
            t.aux.insert(format!("near.{reading}.slack"), slack);
        }
    }
    let failed = t.any_failure_injected();
    t.tags.retain(|x| x != "non-qmc-input");
    t.guarantee.applicable = !failed && full <= allowance;
    if full > allowance {
        t.tag(if 0.5 * full <= allowance {
            "near-half-reading-only"
        } else {
            "not-near-qmc"
        });
    }
    if 0.5 * full <= allowance && !t.guarantee.pass && !failed {
        t.tag("near-half-reading-violated");
    }
    Ok(t)
}

/// Tomography of an `m`-part Markov chain from its adjacent pair marginals,
/// each estimated at infidelity `delta / (8 m^2)`.
///
/// The guarantee checked is the telescoping bound
/// `F >= 1 - 8 (sum_i sqrt(delta_i))^2`, which is at least `1 - delta`.
pub fn tomo_multipartite<R: Rng + ?Sized>(
    rho: &DensityOperator,
    delta: f64,
    opts: &ProtocolOptions,
    rng: &mut R,
) -> Result<ProtocolTranscript> {
    let m = rho.layout().arity();
    if m < 3 {
        return Err(QmcError::WrongArity {
            expected: 3,
            found: m,
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(QmcError::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let dims = rho.dims().to_vec();
    let delta_i = delta / (8.0 * (m * m) as f64);
    let oracle = opts.oracle(OracleMode::Infidelity, delta_i)?;
    let pairs = (0..m - 1)
        .map(|i| rho.marginal(&[i, i + 1]))
        .collect::<Result<Vec<_>>>()?;
    let mut calls = Vec::with_capacity(m - 1);
    let mut estimates = Vec::with_capacity(m - 1);
    for (i, p) in pairs.iter().enumerate() {
        let e = oracle_estimate(p, &oracle, rng)?;
        // pair (i+1, i+2) in 1-based site numbering
        calls.push(OracleCall {
            marginal: format!("{},{}", i + 1, i + 2),
            target: delta_i,
            achieved: e.achieved,
            failed: e.failed,
            pass_group: Some(((i + 1) % 2) as u8),
        });
        estimates.push(e.state);
    }
    let exact = chain_reconstruct(&pairs)?;
    let out = chain_reconstruct(&estimates)?;
    let f_out = fidelity_psd(rho.matrix(), &out.matrix)?;

    let targets = vec![delta_i; m - 1];
    let claimed = 1.0 - 8.0 * sqrt_sum(&targets).powi(2);
    let achieved: Vec<f64> = calls.iter().map(|c| c.achieved).collect();
    let mut aux = BTreeMap::new();
    let self_error = trace_distance(rho.matrix(), &exact.matrix)?;
    aux.insert("chain_self_error".into(), self_error);
    aux.insert("delta".into(), delta);
    aux.insert("delta_i".into(), delta_i);
    aux.insert("final_claim".into(), 1.0 - delta);
    aux.insert(
        "telescoping_measured".into(),
        1.0 - 8.0 * sqrt_sum(&achieved).powi(2),
    );
    aux.insert("infidelity".into(), 1.0 - f_out);
    aux.insert("output_trace".into(), out.trace);
    // Both parallel passes read the same copies.
    aux.insert("copy_passes".into(), 1.0);

    let mut g = Guarantee::bound(Relation::AtLeast, claimed, f_out);
    let mut tags = Vec::new();
    if calls.iter().any(|c| c.failed) {
        g.applicable = false;
        tags.push("oracle-failure".to_string());
    }
    if self_error > QMC_TOL {
        g.applicable = false;
        tags.push("non-qmc-input".to_string());
    }
    Ok(ProtocolTranscript {
        protocol_name: "tomo_multipartite".into(),
        seed: 0,
        trial: None,
        dims: dims.clone(),
        inputs_digest: matrix_digest(&[rho.matrix()]),
        oracle_calls: calls,
        budget: default_budget("thm4_multipartite", &dims, delta)?,
        output: estimate_digest(&out.matrix),
        guarantee: g,
        aux,
        tags,
    })
}

/// Certification of an unknown Markov chain `rho` against a known one.
///
/// Each marginal certifier compares the true marginal infidelity with
/// `0.01 delta` and errs with `opts.certifier_failure_prob`. The decision is
/// `Equal` iff both certifiers pass.
pub fn certify<R: Rng + ?Sized>(
    rho: &DensityOperator,
    sigma_known: &DensityOperator,
    delta: f64,
    opts: &ProtocolOptions,
    rng: &mut R,
) -> Result<ProtocolTranscript> {
    require_arity(rho, 3)?;
    require_arity(sigma_known, 3)?;
    if rho.dims() != sigma_known.dims() {
        return Err(QmcError::InvalidArgument(format!(
            "dims differ: {:?} vs {:?}",
            rho.dims(),
            sigma_known.dims()
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(QmcError::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if !(0.0..=1.0).contains(&opts.certifier_failure_prob) {
        return Err(QmcError::Config {
            field: "certifier_failure_prob".into(),
            message: format!("must lie in [0, 1], got {}", opts.certifier_failure_prob),
        });
    }
    let threshold = 0.01 * delta;
    let mut calls = Vec::with_capacity(2);
    let mut ok = true;
    let mut honest_ok = true;
    let mut marg = BTreeMap::new();
    for (label, keep) in [("AB", [0usize, 1]), ("BC", [1, 2])] {
        let d = infidelity(&rho.marginal(&keep)?, &sigma_known.marginal(&keep)?)?;
        let honest = d < threshold;
        let failed = rng.random::<f64>() < opts.certifier_failure_prob;
        let reported = honest != failed;
        ok &= reported;
        honest_ok &= honest;
        marg.insert(label, d);
        calls.push(OracleCall {
            marginal: label.into(),
            target: threshold,
            achieved: d,
            failed,
            pass_group: None,
        });
    }
    let decision = if ok { Decision::Equal } else { Decision::Far };
    let d_b = infidelity(&rho.marginal(&[1])?, &sigma_known.marginal(&[1])?)?;
    let total = (1.0 - fidelity_psd(rho.matrix(), sigma_known.matrix())?).max(0.0);

    let mut aux = BTreeMap::new();
    aux.insert("infidelity_ab".into(), marg["AB"]);
    aux.insert("infidelity_bc".into(), marg["BC"]);
    aux.insert("infidelity_b".into(), d_b);
    aux.insert("infidelity".into(), total);
    aux.insert("threshold".into(), threshold);
    aux.insert("equal_side_bound".into(), 0.18 * delta);
    // The argument needs 0.18 delta < delta; recorded rather than assumed.
    aux.insert("promise_margin".into(), delta - 0.18 * delta);
    let chain = 2.0 * sqrt_sum(&[marg["AB"], marg["BC"], d_b]).powi(2);
    aux.insert("chain_bound".into(), chain);
    if honest_ok {
        aux.insert("chain_slack".into(), chain - total);
    }
    aux.insert("petz_self_distance_rho".into(), petz_distance(rho)?);
    aux.insert(
        "petz_self_distance_sigma".into(),
        petz_distance(sigma_known)?,
    );

    let mut tags = Vec::new();
    let expected = if total <= EQUAL_TOL {
        Some(Decision::Equal)
    } else if total >= delta {
        Some(Decision::Far)
    } else {
        tags.push("promise-violated".to_string());
        None
    };
    let mut g = Guarantee {
        relation: Relation::Decision,
        claimed: delta,
        measured: total,
        tol: GUARANTEE_TOL,
        pass: expected == Some(decision),
        applicable: expected.is_some(),
        expected,
    };
    if calls.iter().any(|c| c.failed) {
        g.applicable = false;
        tags.push("oracle-failure".to_string());
    }
    if aux["petz_self_distance_rho"] > QMC_TOL || aux["petz_self_distance_sigma"] > QMC_TOL {
        g.applicable = false;
        tags.push("non-qmc-input".to_string());
    }
    let dims = rho.dims().to_vec();
    Ok(ProtocolTranscript {
        protocol_name: "certify".into(),
        seed: 0,
        trial: None,
        dims: dims.clone(),
        inputs_digest: matrix_digest(&[rho.matrix(), sigma_known.matrix()]),
        oracle_calls: calls,
        budget: default_budget("thm2_fidelity", &dims, delta)?,
        output: ProtocolOutput::Decision { decision },
        guarantee: g,
        aux,
        tags,
    })
}

/// Markov-chain tester: estimate `rho_BC` at infidelity
/// `eps^2 / (400 d_A d_B d_C)`, apply the estimated Petz map to the true
/// `rho_AB`, and compare in Hilbert-Schmidt norm against
/// `0.4 eps / sqrt(d_A d_B d_C)`.
pub fn qmc_test<R: Rng + ?Sized>(
    rho_abc: &DensityOperator,
    eps: f64,
    opts: &ProtocolOptions,
    rng: &mut R,
) -> Result<ProtocolTranscript> {
    require_arity(rho_abc, 3)?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(QmcError::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let dims = rho_abc.dims().to_vec();
    let d = rho_abc.dim() as f64;
    let sd = d.sqrt();
    let delta = eps * eps / (400.0 * d);
    if delta >= 1.0 {
        return Err(QmcError::InvalidArgument(format!(
            "eps {eps} gives delta {delta} >= 1"
        )));
    }
    let oracle = opts.oracle(OracleMode::Infidelity, delta)?;
    let rho_ab = rho_abc.marginal(&[0, 1])?;
    let rho_bc = rho_abc.marginal(&[1, 2])?;
    let est = oracle_estimate(&rho_bc, &oracle, rng)?;
    let petz_est = petz_reconstruct(&rho_ab, &est.state)?;
    let petz_true = petz_reconstruct(&rho_ab, &rho_bc)?;
    let statistic = frobenius_norm(&(rho_abc.matrix() - &petz_est.matrix));
    let threshold = 0.4 * eps / sd;
    let decision = if statistic < threshold {
        Decision::Markov
    } else {
        Decision::Far
    };
    let self_distance = trace_distance(rho_abc.matrix(), &petz_true.matrix)?;

    let mut aux = BTreeMap::new();
    aux.insert("delta".into(), delta);
    aux.insert("threshold".into(), threshold);
    aux.insert("statistic".into(), statistic);
    aux.insert("infidelity_bc".into(), est.achieved);
    aux.insert("petz_self_distance".into(), self_distance);
    aux.insert(
        "petz_self_distance_l2".into(),
        frobenius_norm(&(rho_abc.matrix() - &petz_true.matrix)),
    );
    aux.insert(
        "estimate_gap_l2".into(),
        frobenius_norm(&(&petz_true.matrix - &petz_est.matrix)),
    );
    aux.insert("estimate_gap_bound".into(), 8.0 * est.achieved.sqrt());
    aux.insert("markov_bound".into(), 2.0 * eps / (5.0 * sd));
    aux.insert("far_bound".into(), 3.0 * eps / (5.0 * sd));

    // Only rho_BC is estimated; the Petz map acts on the exact rho_AB.
    let mut tags = vec!["petz-uses-true-rho-ab".to_string()];
    let (expected, mut g) = if self_distance <= QMC_TOL {
        let mut g = Guarantee::bound(Relation::AtMost, 2.0 * eps / (5.0 * sd), statistic);
        g.pass &= decision == Decision::Markov;
        (Some(Decision::Markov), g)
    } else if self_distance >= eps {
        let mut g = Guarantee::bound(Relation::AtLeast, 3.0 * eps / (5.0 * sd), statistic);
        g.pass &= decision == Decision::Far;
        (Some(Decision::Far), g)
    } else {
        tags.push("promise-violated".to_string());
        let mut g = Guarantee::bound(Relation::AtMost, threshold, statistic);
        g.applicable = false;
        (None, g)
    };
    g.expected = expected;
    if est.failed {
        g.applicable = false;
        tags.push("oracle-failure".to_string());
    }
    let mut t = ProtocolTranscript {
        protocol_name: "qmc_test".into(),
        seed: 0,
        trial: None,
        dims: dims.clone(),
        inputs_digest: matrix_digest(&[rho_abc.matrix()]),
        oracle_calls: vec![OracleCall {
            marginal: "BC".into(),
            target: delta,
            achieved: est.achieved,
            failed: est.failed,
            pass_group: None,
        }],
        budget: default_budget("thm3_test", &dims, eps)?,
        output: ProtocolOutput::Decision { decision },
        guarantee: g,
        aux,
        tags: Vec::new(),
    };
    for tag in tags {
        t.tag(tag);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SystemLayout;
    use crate::states::{random_markov_chain, random_qmc, BlockSpec, MarkovStructure, QmcSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(d: &[usize]) -> SystemLayout {
        SystemLayout::new(d.to_vec()).unwrap()
    }

    #[test]
    fn tomo_tripartite_fidelity_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let opts = ProtocolOptions::default();
        for _ in 0..40 {
            let q = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut rng).unwrap();
            let t = tomo_tripartite(&q, TomoTarget::Infidelity(0.1), &opts, &mut rng).unwrap();
            assert!(t.guarantee.applicable && t.passes(), "{:?}", t.guarantee);
            assert!(t.guarantee.measured >= 1.0 - 0.018 - 1e-9);
            // measured infidelity sits under the bound built from the measured marginals
            assert!(t.aux["infidelity"] <= t.aux["chain_bound"] + 1e-9);
            for c in &t.oracle_calls {
                assert!(c.achieved <= 0.001 && c.achieved >= 0.0009 * (1.0 - 1e-6));
            }
            assert_eq!(t.budget.formula_name, "thm1_fidelity");
        }
    }

    #[test]
    fn tomo_tripartite_exact_limit_and_trace_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let q = random_qmc(&layout(&[2, 3, 2]), &QmcSpec::Random, &mut rng).unwrap();
        let opts = ProtocolOptions::default();
        // 0.01 * 1e-9 is below the perturbation resolution: exact marginals
        let t = tomo_tripartite(&q, TomoTarget::Infidelity(1e-9), &opts, &mut rng).unwrap();
        assert!(t.aux["half_trace_distance"] * 2.0 <= 1e-8);
        for eps in [0.05, 0.3] {
            let t =
                tomo_tripartite(&q, TomoTarget::TraceViaFidelity(eps), &opts, &mut rng).unwrap();
            assert!(t.passes() && t.guarantee.measured <= eps);
            assert!((t.oracle_calls[0].target - 0.005 * eps * eps).abs() < 1e-18);
            let t = tomo_tripartite(&q, TomoTarget::TraceViaTrace(eps), &opts, &mut rng).unwrap();
            assert!(t.passes());
            assert!(t.aux["trace_distance"] <= t.aux["chain_bound"] + 1e-9);
            assert!(t.aux["trace_distance"] <= 0.6 * eps);
        }
    }

    #[test]
    fn tomo_tripartite_flags() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let generic = crate::states::random_full_rank(layout(&[2, 2, 2]), &mut rng).unwrap();
        let t = tomo_tripartite(
            &generic,
            TomoTarget::Infidelity(0.1),
            &ProtocolOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert!(t.has_tag("non-qmc-input") && !t.guarantee.applicable && t.passes());
        let bip = crate::states::random_full_rank(layout(&[2, 2]), &mut rng).unwrap();
        assert!(tomo_tripartite(
            &bip,
            TomoTarget::Infidelity(0.1),
            &ProtocolOptions::default(),
            &mut rng
        )
        .is_err());
        assert!(tomo_tripartite(
            &generic,
            TomoTarget::Infidelity(1.0),
            &ProtocolOptions::default(),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn failure_rate_matches_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let f = 0.1;
        let opts = ProtocolOptions {
            oracle_failure_prob: f,
            ..ProtocolOptions::default()
        };
        let q = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut rng).unwrap();
        let n = 400;
        let hits = (0..n)
            .filter(|_| {
                tomo_tripartite(&q, TomoTarget::Infidelity(0.1), &opts, &mut rng)
                    .unwrap()
                    .any_failure_injected()
            })
            .count();
        let p = 1.0 - (1.0 - f).powi(2);
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let rate = hits as f64 / n as f64;
        assert!((rate - p).abs() <= 3.0 * sigma, "{rate} vs {p}");
    }

    #[test]
    fn multipartite_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let opts = ProtocolOptions::default();
        for _ in 0..10 {
            let rho = random_markov_chain(&[2, 2, 2, 2], &mut rng).unwrap();
            let t = tomo_multipartite(&rho, 0.2, &opts, &mut rng).unwrap();
            assert!(t.passes() && t.guarantee.applicable, "{:?}", t.guarantee);
            assert!(t.guarantee.claimed >= 1.0 - 0.2);
            assert!(t.guarantee.measured >= t.aux["telescoping_measured"] - 1e-9);
            assert_eq!(t.oracle_calls.len(), 3);
            assert_eq!(t.oracle_calls[0].target, 0.2 / 128.0);
            let groups: Vec<_> = t
                .oracle_calls
                .iter()
                .map(|c| c.pass_group.unwrap())
                .collect();
            assert_eq!(groups, vec![1, 0, 1]);
        }
        // exact limit
        let rho = random_markov_chain(&[2, 2, 2, 2], &mut rng).unwrap();
        let t = tomo_multipartite(&rho, 1e-9, &opts, &mut rng).unwrap();
        assert!(t.aux["infidelity"].abs() < 1e-7);
        let bip = crate::states::random_full_rank(layout(&[2, 2]), &mut rng).unwrap();
        assert!(tomo_multipartite(&bip, 0.2, &opts, &mut rng).is_err());
    }

    #[test]
    fn multipartite_m3_matches_tripartite_estimate() {
        // Same oracle stream and the same Petz formula: with m = 3 the chain
        // output equals the tripartite output at oracle target delta/72.
        let q = random_qmc(
            &layout(&[2, 2, 2]),
            &QmcSpec::Random,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let opts = ProtocolOptions::default();
        let a = tomo_multipartite(&q, 0.18, &opts, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = tomo_tripartite(
            &q,
            TomoTarget::Infidelity(0.18 / 72.0 * 100.0),
            &opts,
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        assert_eq!(a.oracle_calls[0].target, b.oracle_calls[0].target);
        assert_eq!(a.output, b.output);
    }

    #[test]
    fn certify_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let opts = ProtocolOptions {
            certifier_failure_prob: 0.0,
            ..ProtocolOptions::default()
        };
        let delta = 0.1;
        for _ in 0..10 {
            let base =
                MarkovStructure::random(2, 2, &BlockSpec::random(2, &mut rng), &mut rng).unwrap();
            let sigma = base.assemble().unwrap();
            let t = certify(&sigma, &sigma, delta, &opts, &mut rng).unwrap();
            assert_eq!(t.decision(), Some(Decision::Equal));
            assert!(t.passes() && t.guarantee.applicable);
            let far = qmc_far_instance(&base, delta, &mut rng).unwrap();
            let t = certify(&far.state, &sigma, delta, &opts, &mut rng).unwrap();
            assert_eq!(t.decision(), Some(Decision::Far));
            assert!(t.passes() && t.guarantee.applicable);
            // close pair: both marginals under threshold, decision equal
            let near = qmc_far_instance(&base, 1e-4, &mut rng).unwrap();
            let t = certify(&near.state, &sigma, delta, &opts, &mut rng).unwrap();
            if t.aux["infidelity_ab"] < 0.001 && t.aux["infidelity_bc"] < 0.001 {
                assert_eq!(t.decision(), Some(Decision::Equal));
                assert!(t.aux["infidelity"] <= 0.18 * delta);
                assert!(t.aux["chain_slack"] >= -1e-9);
            }
            assert!(t.has_tag("promise-violated") && t.passes());
        }
        assert!(certify_rejects_bad_prob());
    }

    fn certify_rejects_bad_prob() -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let q = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut rng).unwrap();
        let opts = ProtocolOptions {
            certifier_failure_prob: 1.5,
            ..ProtocolOptions::default()
        };
        certify(&q, &q, 0.1, &opts, &mut rng).is_err()
    }

    #[test]
    fn certify_injected_failures_are_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let q = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut rng).unwrap();
        let opts = ProtocolOptions {
            certifier_failure_prob: 1.0,
            ..ProtocolOptions::default()
        };
        let t = certify(&q, &q, 0.1, &opts, &mut rng).unwrap();
        assert_eq!(t.decision(), Some(Decision::Far));
        assert!(!t.guarantee.pass && !t.guarantee.applicable && t.passes());
    }

    #[test]
    fn tester_branches() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let opts = ProtocolOptions::default();
        let eps = 0.3;
        let sd = 8f64.sqrt();
        for _ in 0..15 {
            let q = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut rng).unwrap();
            let t = qmc_test(&q, eps, &opts, &mut rng).unwrap();
            assert_eq!(t.decision(), Some(Decision::Markov));
            assert!(t.aux["statistic"] <= 0.4 * eps / sd);
            assert!(t.passes() && t.guarantee.applicable);
            assert!(t.has_tag("petz-uses-true-rho-ab"));
            assert!(t.aux["estimate_gap_l2"] <= t.aux["estimate_gap_bound"] + 1e-12);
            let far = markov_far_instance(&q, eps, &mut rng).unwrap();
            let t = qmc_test(&far.state, eps, &opts, &mut rng).unwrap();
            assert_eq!(t.decision(), Some(Decision::Far));
            assert!(t.aux["statistic"] >= 3.0 * eps / (5.0 * sd) - 1e-9);
            assert!(t.passes() && t.guarantee.applicable);
        }
        // eps large enough that no state is eps-far: QMCs still pass
        let q = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut rng).unwrap();
        let t = qmc_test(&q, 3.0, &opts, &mut rng).unwrap();
        assert_eq!(t.decision(), Some(Decision::Markov));
        assert!(t.passes());
    }

    #[test]
    fn transcripts_round_trip_json() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let q = random_qmc(&layout(&[2, 2, 2]), &QmcSpec::Random, &mut rng).unwrap();
        let t = qmc_test(&q, 0.3, &ProtocolOptions::default(), &mut rng)
            .unwrap()
            .with_trial(5, 7);
        let s = t.to_json().unwrap();
        let back: ProtocolTranscript = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.budget.recompute().unwrap(), back.budget);
    }

    #[test]
    fn transcripts_are_seed_determined() {
        let q = random_qmc(
            &layout(&[2, 3, 2]),
            &QmcSpec::Random,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let run = |s| {
            tomo_tripartite(
                &q,
                TomoTarget::Infidelity(0.2),
                &ProtocolOptions::default(),
                &mut ChaCha8Rng::seed_from_u64(s),
            )
            .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3).output, run(4).output);
    }

    fn near_instance(
        reference: &DensityOperator,
        full_distance: f64,
        rng: &mut ChaCha8Rng,
    ) -> DensityOperator {
        let w = crate::states::random_full_rank(reference.layout().clone(), rng).unwrap();
        let d = trace_distance(w.matrix(), reference.matrix()).unwrap();
        reference.mix(&w, full_distance / d).unwrap()
    }

    #[test]
    fn near_qmc_inputs_under_both_readings() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let layout = SystemLayout::new(vec![2, 2, 2]).unwrap();
        let opts = ProtocolOptions::default();
        let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
        for target in [
            TomoTarget::Infidelity(0.1),
            TomoTarget::TraceViaFidelity(0.2),
            TomoTarget::TraceViaTrace(0.2),
        ] {
            let scale = match target {
                TomoTarget::Infidelity(x)
                | TomoTarget::TraceViaFidelity(x)
                | TomoTarget::TraceViaTrace(x) => x,
            };
            for _ in 0..40 {
                let sigma = random_qmc(&layout, &QmcSpec::Random, &mut rng).unwrap();
                // full-norm distance at the half-reading edge: 2 * allowance
                let rho = near_instance(&sigma, 1.999 * NEAR_QMC_FRACTION * scale, &mut rng);
                let t = tomo_tripartite_near(&rho, &sigma, target, &opts, &mut rng).unwrap();
                assert!(!t.guarantee.applicable);
                assert!(t.has_tag("near-half-reading-only"));
                assert_eq!(t.aux["near.half.close"], 1.0);
                let e = worst.entry("half").or_insert(f64::INFINITY);
                *e = e.min(t.aux["near.half.slack"]);

                let rho = near_instance(&sigma, 0.999 * NEAR_QMC_FRACTION * scale, &mut rng);
                let t = tomo_tripartite_near(&rho, &sigma, target, &opts, &mut rng).unwrap();
                assert!(t.guarantee.applicable && t.passes(), "{t:?}");
                let e = worst.entry("full").or_insert(f64::INFINITY);
                *e = e.min(t.aux["near.full.slack"]);
            }
        }
        assert!(worst["full"] >= -GUARANTEE_TOL);
        assert!(worst["half"] >= -GUARANTEE_TOL, "{worst:?}");
        let generic = crate::states::random_full_rank(layout.clone(), &mut rng).unwrap();
        assert!(tomo_tripartite_near(
            &generic,
            &generic,
            TomoTarget::Infidelity(0.1),
            &opts,
            &mut rng
        )
        .is_err());
    }
}
