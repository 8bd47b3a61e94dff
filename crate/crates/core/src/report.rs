//! Seeded campaigns over the bound suite and the protocol simulations.
//!
//! Every trial draws from its own generator keyed by `(seed, stream, trial)`,
//! so results do not depend on scheduling and extending a campaign leaves
//! earlier trials unchanged. Records are folded in trial order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuity::{matrix_digest, BoundReport, BoundVariant, REPORT_TOL};
use crate::error::{QmcError, Result};
use crate::io::{load_state, save_state};
use crate::linalg::{max_total_dim, trace_distance, SystemLayout};
use crate::protocols::{
    certify, markov_far_instance, qmc_far_instance, qmc_test, sample_budget, tomo_multipartite,
    tomo_tripartite, tomo_tripartite_near, ProtocolOptions, ProtocolTranscript, SampleBudget,
    TomoTarget, NEAR_QMC_FRACTION,
};
use crate::states::{
    random_full_rank, random_markov_chain, random_qmc, BlockSpec, DensityOperator, MarkovStructure,
    QmcSpec,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyBounds,
    TomoSim,
    TomoChainSim,
    CertifySim,
    QmcTestSim,
    GenState,
    Budget,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::VerifyBounds,
        Command::TomoSim,
        Command::TomoChainSim,
        Command::CertifySim,
        Command::QmcTestSim,
        Command::GenState,
        Command::Budget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyBounds => "verify-bounds",
            Command::TomoSim => "tomo-sim",
            Command::TomoChainSim => "tomo-chain-sim",
            Command::CertifySim => "certify-sim",
            Command::QmcTestSim => "qmc-test-sim",
            Command::GenState => "gen-state",
            Command::Budget => "budget",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| QmcError::Config {
                field: "command".into(),
                message: format!(
                    "unknown command `{s}`; expected one of {}",
                    Self::ALL.map(|c| c.name()).join(", ")
                ),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub command: Command,
    pub dims: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    pub delta: Option<f64>,
    pub eps: Option<f64>,
    /// Bound names or base names; empty selects the whole suite.
    pub bounds: Vec<String>,
    /// Directory receiving `details.jsonl` and `summary.json`.
    pub out: Option<PathBuf>,
    pub stress: bool,
    /// Slack tolerance for bound reports (default `1e-8`).
    pub tol: Option<f64>,
    /// Input state for protocol commands; output path for `gen-state`.
    pub state: Option<PathBuf>,
    /// Formula for `budget`.
    pub formula: Option<String>,
    /// Formula constants for `budget`, e.g. `C`.
    pub constants: BTreeMap<String, f64>,
    /// Worker threads; `None` uses the rayon default. Not part of the output.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl CampaignConfig {
    pub fn new(command: Command, dims: Vec<usize>) -> Self {
        Self {
            command,
            dims,
            trials: 1,
            seed: 0,
            delta: None,
            eps: None,
            bounds: Vec::new(),
            out: None,
            stress: false,
            tol: None,
            state: None,
            formula: None,
            constants: BTreeMap::new(),
            threads: None,
        }
    }

    fn err(field: &str, message: impl Into<String>) -> QmcError {
        QmcError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Self::err("trials", "must be at least 1"));
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Self::err(
                "dims",
                format!("need positive dimensions, got {:?}", self.dims),
            ));
        }
        let total = self
            .dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .unwrap_or(usize::MAX);
        if total > max_total_dim() {
            return Err(Self::err(
                "dims",
                format!(
                    "total dimension {total} exceeds the cap {}",
                    max_total_dim()
                ),
            ));
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Self::err(
                    "tol",
                    format!("must be a nonnegative number, got {t}"),
                ));
            }
        }
        let unit = |field: &str, v: Option<f64>| -> Result<f64> {
            match v {
                Some(x) if x > 0.0 && x < 1.0 => Ok(x),
                Some(x) => Err(Self::err(field, format!("must lie in (0, 1), got {x}"))),
                None => Err(Self::err(
                    field,
                    format!("required by {}", self.command.name()),
                )),
            }
        };
        let arity = |n: usize| -> Result<()> {
            if self.dims.len() != n {
                return Err(Self::err(
                    "dims",
                    format!(
                        "{} needs {n} subsystems, got {}",
                        self.command.name(),
                        self.dims.len()
                    ),
                ));
            }
            Ok(())
        };
        if let Some(eps) = self.eps {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Self::err("eps", format!("must be positive, got {eps}")));
            }
        }
        match self.command {
            Command::VerifyBounds => {
                arity(3)?;
                BoundVariant::select(&self.bounds)
                    .map_err(|e| Self::err("bounds", e.to_string()))?;
            }
            Command::TomoSim => {
                arity(3)?;
                if self.delta.is_none() && self.eps.is_none() {
                    return Err(Self::err("delta", "tomo-sim needs --delta or --eps"));
                }
                if self.delta.is_some() {
                    unit("delta", self.delta)?;
                }
                if let Some(eps) = self.eps {
                    if eps * eps / 2.0 >= 1.0 {
                        return Err(Self::err("eps", "must be below sqrt(2)"));
                    }
                }
            }
            Command::TomoChainSim => {
                if self.dims.len() < 3 {
                    return Err(Self::err(
                        "dims",
                        "tomo-chain-sim needs at least 3 subsystems",
                    ));
                }
                unit("delta", self.delta)?;
            }
            Command::CertifySim => {
                arity(3)?;
                unit("delta", self.delta)?;
                if self.state.is_some() {
                    return Err(Self::err(
                        "state",
                        "certify-sim generates its own instances",
                    ));
                }
            }
            Command::QmcTestSim => {
                arity(3)?;
                if self.eps.is_none() {
                    return Err(Self::err("eps", "required by qmc-test-sim"));
                }
            }
            Command::GenState => {
                if self.state.is_none() && self.out.is_none() {
                    return Err(Self::err("state", "gen-state needs --state or --out"));
                }
            }
            Command::Budget => {
                let f = self
                    .formula
                    .as_deref()
                    .ok_or_else(|| Self::err("formula", "required by budget"))?;
                if !crate::protocols::FORMULAS.contains(&f) {
                    return Err(Self::err("formula", format!("unknown formula `{f}`")));
                }
                if self.delta.is_some() == self.eps.is_some() {
                    return Err(Self::err(
                        "delta",
                        "budget needs exactly one of --delta, --eps",
                    ));
                }
                if let Some(d) = self.delta {
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(Self::err("delta", format!("must be positive, got {d}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Data written by [`Command::GenState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub dims: Vec<usize>,
    pub seed: u64,
    pub digest: String,
    pub path: Option<PathBuf>,
}

/// One line of the detail stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Record {
    Bound(BoundReport),
    Protocol(Box<ProtocolTranscript>),
    Budget(SampleBudget),
    State(StateRecord),
}

impl Record {
    fn key(&self) -> String {
        match self {
            Record::Bound(r) => r.bound_name.clone(),
            Record::Protocol(t) => t.protocol_name.clone(),
            Record::Budget(b) => b.formula_name.clone(),
            Record::State(_) => "state".into(),
        }
    }

    /// `(passes, slack, digest)`; slack is `None` when not applicable.
    fn outcome(&self, tol: f64) -> (bool, Option<f64>, String) {
        match self {
            Record::Bound(r) => (r.passes(tol), Some(r.slack), r.inputs_digest.clone()),
            Record::Protocol(t) => (
                t.passes(),
                t.guarantee.applicable.then(|| t.slack()),
                t.inputs_digest.clone(),
            ),
            Record::Budget(_) => (true, None, String::new()),
            Record::State(s) => (true, None, s.digest.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: u64,
    pub passes: u64,
    pub failures: u64,
    /// Records whose guarantee did not apply (injected failure, promise gap).
    pub not_applicable: u64,
    pub min_slack: Option<f64>,
    pub mean_slack: Option<f64>,
    pub worst_digest: Option<String>,
    pub worst_trial: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub version: String,
    pub config: CampaignConfig,
    pub aggregates: BTreeMap<String, Aggregate>,
    /// Budgets of the protocols run, keyed by formula, dims and target.
    pub budgets: Vec<SampleBudget>,
    pub records: u64,
    pub failures: u64,
    pub wall_clock_seconds: f64,
}

impl CampaignSummary {
    pub fn all_pass(&self) -> bool {
        self.failures == 0
    }
}

/// Stable 64-bit FNV-1a of a stream name.
fn stream_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Generator for trial `trial` of stream `name` under campaign `seed`.
pub fn trial_rng(seed: u64, name: &str, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream_hash(name));
    rng.set_stream(trial);
    rng
}

fn run_trial(
    cfg: &CampaignConfig,
    variants: &[BoundVariant],
    input: Option<&DensityOperator>,
    trial: u64,
) -> Result<Vec<Record>> {
    let seed = cfg.seed;
    let stamp = |t: ProtocolTranscript| Record::Protocol(Box::new(t.with_trial(seed, trial)));
    let opts = if cfg.stress {
        ProtocolOptions::default()
    } else {
        ProtocolOptions::benign()
    };
    let mut out = Vec::new();
    match cfg.command {
        Command::VerifyBounds => {
            for v in variants {
                let mut rng = trial_rng(seed, &v.name(), trial);
                let r = v.sample(&cfg.dims, cfg.stress, &mut rng)?;
                out.push(Record::Bound(r.with_trial(seed, trial)));
            }
        }
        Command::TomoSim => {
            let mut rng = trial_rng(seed, "tomo-sim", trial);
            let rho = match input {
                Some(s) => s.clone(),
                None => random_qmc(
                    &SystemLayout::new(cfg.dims.clone())?,
                    &QmcSpec::Random,
                    &mut rng,
                )?,
            };
            if let Some(d) = cfg.delta {
                out.push(stamp(tomo_tripartite(
                    &rho,
                    TomoTarget::Infidelity(d),
                    &opts,
                    &mut rng,
                )?));
            }
            if let Some(e) = cfg.eps {
                out.push(stamp(tomo_tripartite(
                    &rho,
                    TomoTarget::TraceViaFidelity(e),
                    &opts,
                    &mut rng,
                )?));
                out.push(stamp(tomo_tripartite(
                    &rho,
                    TomoTarget::TraceViaTrace(e),
                    &opts,
                    &mut rng,
                )?));
            }
            // Near-chain input: full-norm distance uniform in [0, 2 * allowance],
            // so both closeness readings get exercised.
            if input.is_none() {
                let target = cfg
                    .delta
                    .map(TomoTarget::Infidelity)
                    .unwrap_or_else(|| TomoTarget::TraceViaFidelity(cfg.eps.unwrap()));
                let scale = cfg.delta.or(cfg.eps).unwrap();
                let w = random_full_rank(rho.layout().clone(), &mut rng)?;
                let gap = trace_distance(w.matrix(), rho.matrix())?;
                let want = rng.random_range(0.0..2.0 * NEAR_QMC_FRACTION * scale);
                let near = rho.mix(&w, (want / gap).min(1.0))?;
                out.push(stamp(tomo_tripartite_near(
                    &near, &rho, target, &opts, &mut rng,
                )?));
            }
        }
        Command::TomoChainSim => {
            let mut rng = trial_rng(seed, "tomo-chain-sim", trial);
            let rho = match input {
                Some(s) => s.clone(),
                None => random_markov_chain(&cfg.dims, &mut rng)?,
            };
            out.push(stamp(tomo_multipartite(
                &rho,
                cfg.delta.unwrap(),
                &opts,
                &mut rng,
            )?));
        }
        Command::CertifySim => {
            let mut rng = trial_rng(seed, "certify-sim", trial);
            let delta = cfg.delta.unwrap();
            let spec = BlockSpec::random(cfg.dims[1], &mut rng);
            let base = MarkovStructure::random(cfg.dims[0], cfg.dims[2], &spec, &mut rng)?;
            let sigma = base.assemble()?;
            out.push(stamp(certify(&sigma, &sigma, delta, &opts, &mut rng)?));
            let far = qmc_far_instance(&base, delta, &mut rng)?;
            out.push(stamp(certify(&far.state, &sigma, delta, &opts, &mut rng)?));
        }
        Command::QmcTestSim => {
            let mut rng = trial_rng(seed, "qmc-test-sim", trial);
            let eps = cfg.eps.unwrap();
            let rho = match input {
                Some(s) => s.clone(),
                None => random_qmc(
                    &SystemLayout::new(cfg.dims.clone())?,
                    &QmcSpec::Random,
                    &mut rng,
                )?,
            };
            out.push(stamp(qmc_test(&rho, eps, &opts, &mut rng)?));
            if input.is_none() {
                match markov_far_instance(&rho, eps, &mut rng) {
                    Ok(far) => out.push(stamp(qmc_test(&far.state, eps, &opts, &mut rng)?)),
                    // eps beyond the reachable range: no far-branch instance
                    Err(QmcError::InfeasibleTarget { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Command::GenState => {
            let mut rng = trial_rng(seed, "gen-state", trial);
            let layout = SystemLayout::new(cfg.dims.clone())?;
            let rho = match cfg.dims.len() {
                0..=2 => random_full_rank(layout, &mut rng)?,
                3 => random_qmc(&layout, &QmcSpec::Random, &mut rng)?,
                _ => random_markov_chain(&cfg.dims, &mut rng)?,
            };
            let path = cfg
                .state
                .clone()
                .or_else(|| cfg.out.as_ref().map(|d| d.join("state.json")));
            if let Some(p) = &path {
                if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)?;
                }
                save_state(p, &rho)?;
            }
            out.push(Record::State(StateRecord {
                dims: cfg.dims.clone(),
                seed,
                digest: matrix_digest(&[rho.matrix()]),
                path,
            }));
        }
        Command::Budget => {
            let target = cfg.delta.or(cfg.eps).unwrap();
            let b = sample_budget(
                cfg.formula.as_deref().unwrap(),
                &cfg.dims,
                target,
                &cfg.constants,
            )?;
            out.push(Record::Budget(b));
        }
    }
    Ok(out)
}

/// Run a campaign, returning the summary and the records in trial order.
pub fn run_campaign_records(cfg: &CampaignConfig) -> Result<(CampaignSummary, Vec<Record>)> {
    cfg.validate()?;
    let start = Instant::now();
    let variants = if cfg.command == Command::VerifyBounds {
        BoundVariant::select(&cfg.bounds)?
    } else {
        Vec::new()
    };
    let variants = if variants.is_empty() && cfg.command == Command::VerifyBounds {
        BoundVariant::all()
    } else {
        variants
    };
    let input = match (&cfg.state, cfg.command) {
        (Some(p), Command::TomoSim | Command::TomoChainSim | Command::QmcTestSim) => {
            let s = load_state(p)?;
            if s.dims() != &cfg.dims[..] {
                return Err(CampaignConfig::err(
                    "state",
                    format!("state has dims {:?}, config has {:?}", s.dims(), cfg.dims),
                ));
            }
            Some(s)
        }
        _ => None,
    };
    let trials = match cfg.command {
        Command::Budget | Command::GenState => 1,
        _ => cfg.trials,
    };
    let work = || -> Result<Vec<Vec<Record>>> {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(cfg, &variants, input.as_ref(), t))
            .collect()
    };
    let per_trial = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| QmcError::InvalidArgument(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let tol = cfg.tol.unwrap_or(REPORT_TOL);
    let mut aggregates: BTreeMap<String, Aggregate> = BTreeMap::new();
    let mut sums: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    let mut budgets: Vec<SampleBudget> = Vec::new();
    let mut records = Vec::new();
    let mut failures = 0;
    for (trial, recs) in per_trial.into_iter().enumerate() {
        for r in recs {
            let key = r.key();
            let (pass, slack, digest) = r.outcome(tol);
            let a = aggregates.entry(key.clone()).or_insert(Aggregate {
                trials: 0,
                passes: 0,
                failures: 0,
                not_applicable: 0,
                min_slack: None,
                mean_slack: None,
                worst_digest: None,
                worst_trial: None,
            });
            a.trials += 1;
            if pass {
                a.passes += 1;
            } else {
                a.failures += 1;
                failures += 1;
            }
            match slack {
                Some(s) => {
                    let e = sums.entry(key.clone()).or_insert((0.0, 0));
                    e.0 += s;
                    e.1 += 1;
                    if a.min_slack.is_none_or(|m| s < m) {
                        a.min_slack = Some(s);
                        a.worst_digest = Some(digest);
                        a.worst_trial = Some(trial as u64);
                    }
                }
                None if matches!(r, Record::Protocol(_)) => a.not_applicable += 1,
                None => {}
            }
            if let Record::Protocol(t) = &r {
                if !budgets.contains(&t.budget) {
                    budgets.push(t.budget.clone());
                }
            }
            records.push(r);
        }
    }
    for (k, (sum, n)) in sums {
        let a = aggregates.get_mut(&k).unwrap();
        // mean of values that are all >= min may still round below it
        a.mean_slack = Some((sum / n as f64).max(a.min_slack.unwrap()));
    }
    let summary = CampaignSummary {
        version: VERSION.to_string(),
        config: cfg.clone(),
        aggregates,
        budgets,
        records: records.len() as u64,
        failures,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &summary, &records)?;
    }
    Ok((summary, records))
}

/// Run a campaign and write its outputs when `cfg.out` is set.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignSummary> {
    Ok(run_campaign_records(cfg)?.0)
}

/// JSON-lines detail stream, one record per line in trial order.
pub fn details_jsonl(records: &[Record]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

fn write_outputs(dir: &PathBuf, summary: &CampaignSummary, records: &[Record]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join("details.jsonl"))?;
    f.write_all(details_jsonl(records)?.as_bytes())?;
    let mut s = serde_json::to_string_pretty(summary)?;
    s.push('\n');
    fs::write(dir.join("summary.json"), s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds_cfg(trials: u64) -> CampaignConfig {
        let mut c = CampaignConfig::new(Command::VerifyBounds, vec![2, 2, 2]);
        c.trials = trials;
        c.seed = 99;
        c
    }

    #[test]
    fn verify_bounds_counts_and_reproducibility() {
        let cfg = bounds_cfg(3);
        let (s, r) = run_campaign_records(&cfg).unwrap();
        assert_eq!(s.records as usize, 3 * BoundVariant::all().len());
        assert!(s.all_pass());
        for a in s.aggregates.values() {
            assert_eq!(a.trials, 3);
            assert!(a.min_slack.unwrap() <= a.mean_slack.unwrap());
        }
        let (_, again) = run_campaign_records(&cfg).unwrap();
        assert_eq!(details_jsonl(&r).unwrap(), details_jsonl(&again).unwrap());
    }

    #[test]
    fn extending_trials_keeps_prefix() {
        let (_, short) = run_campaign_records(&bounds_cfg(2)).unwrap();
        let (_, long) = run_campaign_records(&bounds_cfg(4)).unwrap();
        assert_eq!(short[..], long[..short.len()]);
    }

    #[test]
    fn bound_filter_selects_subset() {
        let mut cfg = bounds_cfg(2);
        cfg.bounds = vec!["schatten_4to2".into(), "core_l2".into()];
        let (s, _) = run_campaign_records(&cfg).unwrap();
        assert_eq!(s.aggregates.len(), 5);
        cfg.bounds = vec!["nope".into()];
        assert!(matches!(cfg.validate(), Err(QmcError::Config { .. })));
    }

    #[test]
    fn config_errors_name_fields() {
        let mut cfg = bounds_cfg(0);
        match cfg.validate() {
            Err(QmcError::Config { field, .. }) => assert_eq!(field, "trials"),
            other => panic!("{other:?}"),
        }
        cfg.trials = 1;
        cfg.dims = vec![2, 2];
        assert!(cfg.validate().is_err());
        let mut t = CampaignConfig::new(Command::TomoSim, vec![2, 2, 2]);
        assert!(t.validate().is_err());
        t.delta = Some(1.5);
        assert!(t.validate().is_err());
        t.delta = Some(0.1);
        assert!(t.validate().is_ok());
        let mut b = CampaignConfig::new(Command::Budget, vec![2, 2, 2]);
        b.eps = Some(0.1);
        assert!(b.validate().is_err());
        b.formula = Some("thm2_trace".into());
        assert!(b.validate().is_ok());
        assert!(Command::parse("bogus").is_err());
        assert_eq!(Command::parse("qmc-test-sim").unwrap(), Command::QmcTestSim);
    }

    #[test]
    fn budget_command() {
        let mut b = CampaignConfig::new(Command::Budget, vec![2, 2, 2]);
        b.eps = Some(0.1);
        b.formula = Some("thm2_trace".into());
        b.constants.insert("C".into(), 1.0);
        let (_, r) = run_campaign_records(&b).unwrap();
        match &r[0] {
            Record::Budget(x) => assert_eq!(x.n, 800),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn protocol_campaigns_pass_and_write_files() {
        let dir = tempfile::tempdir().unwrap();
        for (cmd, dims, delta, eps) in [
            (Command::TomoSim, vec![2, 2, 2], Some(0.1), Some(0.2)),
            (Command::TomoChainSim, vec![2, 2, 2, 2], Some(0.2), None),
            (Command::CertifySim, vec![2, 2, 2], Some(0.1), None),
            (Command::QmcTestSim, vec![2, 2, 2], None, Some(0.3)),
        ] {
            let mut c = CampaignConfig::new(cmd, dims);
            c.trials = 4;
            c.seed = 5;
            c.delta = delta;
            c.eps = eps;
            c.stress = true;
            c.out = Some(dir.path().join(cmd.name()));
            let s = run_campaign(&c).unwrap();
            assert!(s.all_pass(), "{cmd:?}: {:?}", s.aggregates);
            assert!(!s.budgets.is_empty());
            let details =
                fs::read_to_string(dir.path().join(cmd.name()).join("details.jsonl")).unwrap();
            assert_eq!(details.lines().count() as u64, s.records);
            let summary: serde_json::Value = serde_json::from_str(
                &fs::read_to_string(dir.path().join(cmd.name()).join("summary.json")).unwrap(),
            )
            .unwrap();
            assert_eq!(summary["config"]["command"], cmd.name());
        }
    }

    #[test]
    fn gen_state_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut g = CampaignConfig::new(Command::GenState, vec![2, 3, 2]);
        g.state = Some(path.clone());
        g.seed = 4;
        run_campaign(&g).unwrap();
        let rho = load_state(&path).unwrap();
        assert!(crate::petz::petz_distance(&rho).unwrap() < 1e-8);
        let mut t = CampaignConfig::new(Command::TomoSim, vec![2, 3, 2]);
        t.delta = Some(0.1);
        t.trials = 2;
        t.state = Some(path.clone());
        let (s, _) = run_campaign_records(&t).unwrap();
        assert!(s.all_pass());
        t.dims = vec![2, 2, 2];
        assert!(run_campaign(&t).is_err());
    }

    #[test]
    fn trial_streams_differ() {
        use rand::Rng;
        let a: u64 = trial_rng(1, "x", 0).random();
        let b: u64 = trial_rng(1, "x", 1).random();
        let c: u64 = trial_rng(1, "y", 0).random();
        assert!(a != b && a != c);
        assert_eq!(a, trial_rng(1, "x", 0).random::<u64>());
    }
}
